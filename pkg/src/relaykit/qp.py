"""Dense dual active-set solver for strictly convex QPs.

Solves

    min  0.5 x' H x + g' x    s.t.  C x >= d

with symmetric positive definite H, in the style of Goldfarb and Idnani:
start at the unconstrained minimum and add violated constraints one at a
time, taking combined primal-dual steps and dropping blocking constraints
so multipliers stay nonnegative. No feasible starting point is needed and
the iterate count is typically close to the number of active constraints
at the solution, which suits receding-horizon use where few bounds are
active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QpError(RuntimeError):
    """QP could not be solved (infeasible constraints or iteration cap)."""


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    multipliers: np.ndarray
    active: tuple
    iterations: int
    status: str


def solve_qp(H, g, C=None, d=None, tol: float = 1e-10, max_iter: int = 2000) -> QpResult:
    """Minimize 0.5 x'Hx + g'x subject to C x >= d.

    ``C``/``d`` may be omitted for an unconstrained solve. Raises
    :class:`QpError` if the constraints are inconsistent or the iteration
    cap is hit (which for a well-posed problem indicates a bug upstream).
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    Hinv = np.linalg.inv(H)
    x = -(Hinv @ g)
    if C is None or len(C) == 0:
        return QpResult(x=x, multipliers=np.zeros(0), active=(), iterations=0, status="optimal")

    C = np.asarray(C, dtype=float)
    d = np.asarray(d, dtype=float)
    m = C.shape[0]
    HinvCT = Hinv @ C.T  # n x m, reused in every step computation

    active: list[int] = []
    u: list[float] = []  # multipliers, same order as `active`
    iterations = 0

    while True:
        iterations += 1
        if iterations > max_iter:
            raise QpError(f"active-set iteration cap {max_iter} exceeded")

        slack = C @ x - d
        if active:
            slack[active] = 0.0  # tight by construction; mask numerical noise
        p = int(np.argmin(slack))
        if slack[p] >= -tol:
            mult = np.zeros(m)
            for idx, uj in zip(active, u):
                mult[idx] = uj
            return QpResult(
                x=x,
                multipliers=mult,
                active=tuple(active),
                iterations=iterations,
                status="optimal",
            )

        n_plus = C[p]
        u_plus = 0.0  # multiplier of the incoming constraint, grows across drops
        while True:
            iterations += 1
            if iterations > max_iter:
                raise QpError(f"active-set iteration cap {max_iter} exceeded")
            if active:
                Nh = HinvCT[:, active]
                S = C[active] @ Nh
                r = np.linalg.solve(S, n_plus @ Nh)
                z = HinvCT[:, p] - Nh @ r
            else:
                r = np.zeros(0)
                z = HinvCT[:, p]

            nz = float(n_plus @ z)  # = z'Hz >= 0; zero iff z vanishes
            t1, j_block = np.inf, -1
            for idx, rj in enumerate(r):
                if rj > tol:
                    cand = u[idx] / rj
                    if cand < t1:
                        t1, j_block = cand, idx
            viol = d[p] - float(n_plus @ x)
            t2 = viol / nz if nz > tol else np.inf

            if not np.isfinite(t1) and not np.isfinite(t2):
                raise QpError("constraints are inconsistent (dual unbounded)")

            if t2 <= t1:  # full step: constraint p becomes active
                x = x + t2 * z
                u = [uj - t2 * rj for uj, rj in zip(u, r)]
                active.append(p)
                u.append(u_plus + t2)
                break
            # partial (or pure dual) step: drop the blocking constraint
            if np.isfinite(t2):
                x = x + t1 * z
            u = [uj - t1 * rj for uj, rj in zip(u, r)]
            u_plus += t1
            del active[j_block]
            del u[j_block]
