"""Independent verification oracles.

Everything here deliberately avoids the code paths it is meant to check:
derivative checks use central differences of the plain scalar function,
the relay-placement check is an exhaustive grid search over the inverse
capacity, and the run audit recomputes invariants from raw log columns.
Shipped with the library (not test-only) so the CLI ``audit`` subcommand
can replay the checks on any exported log.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajgen import ConservativeParams, inverse_capacity
from .radio import end_to_end_capacity
from .vehicle import rotation_from_euler


class OracleError(RuntimeError):
    """Oracle could not produce a verdict (bad samples, empty grid)."""


@dataclass(frozen=True)
class DerivativeReport:
    """Worst relative derivative errors at one evaluation point."""

    max_rel_err_grad: float
    max_rel_err_hess: float
    worst_case_point: np.ndarray


def finite_diff_check(fn, point, step, analytic_grad, analytic_hess, abs_floor=1e-10) -> DerivativeReport:
    """Compare analytic derivatives with central differences of ``fn``.

    ``fn`` maps a 6-vector to a scalar. Differences are second-order
    accurate and inherit the dtype of ``point`` (pass longdouble to
    difference in extended precision when the function magnitude would
    otherwise drown the curvature signal). Relative errors are normwise:
    the largest entry of the difference over the largest entry of either
    derivative, floored so identically-zero derivatives stay well-defined.
    """
    x = np.asarray(point)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    n = x.size
    f0 = fn(x)
    if not np.isfinite(f0):
        raise OracleError("function not finite at the evaluation point")
    grad_fd = np.zeros(n, dtype=x.dtype)
    hess_fd = np.zeros((n, n), dtype=x.dtype)

    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        fp, fm = fn(x + ei), fn(x - ei)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError("function not finite in the step neighborhood")
        grad_fd[i] = (fp - fm) / (2.0 * step)
        hess_fd[i, i] = (fp - 2.0 * f0 + fm) / (step * step)
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = step
            ej[j] = step
            val = (fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej)) / (
                4.0 * step * step
            )
            hess_fd[i, j] = hess_fd[j, i] = val

    ga = np.asarray(analytic_grad, dtype=float)
    ha = np.asarray(analytic_hess, dtype=float)
    scale_g = max(float(np.abs(grad_fd).max()), float(np.abs(ga).max()), abs_floor)
    scale_h = max(float(np.abs(hess_fd).max()), float(np.abs(ha).max()), abs_floor)
    return DerivativeReport(
        max_rel_err_grad=float(np.abs(grad_fd - ga).max()) / scale_g,
        max_rel_err_hess=float(np.abs(hess_fd - ha).max()) / scale_h,
        worst_case_point=np.asarray(point, dtype=float).copy(),
    )


def grid_search_relay(
    params: ConservativeParams, source_pos, center, half_width: float, resolution: float
) -> np.ndarray:
    """Exhaustive minimizer of the inverse capacity over a cubic grid.

    Ties break toward the lexicographically smallest position, which the
    C-ordered grid enumeration provides for free. Grid points coinciding
    with a node are excluded.
    """
    if resolution <= 0.0:
        raise OracleError("resolution must be positive")
    center = np.asarray(center, dtype=float)
    source = np.asarray(source_pos, dtype=float)
    n = int(round(2.0 * half_width / resolution)) + 1
    axis = center[None, :] + (np.arange(n) * resolution - half_width)[:, None]
    gx, gy, gz = np.meshgrid(axis[:, 0], axis[:, 1], axis[:, 2], indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)

    keep = np.ones(len(pts), dtype=bool)
    for node in (source, params.bs_position, params.jammer_position):
        keep &= np.linalg.norm(pts - node, axis=1) > 1e-9
    pts = pts[keep]
    if len(pts) == 0:
        raise OracleError("grid is empty after excluding singular points")

    values = inverse_capacity(pts, source, params)
    return pts[int(np.argmin(values))].copy()


@dataclass(frozen=True)
class Violation:
    """One failed invariant in a simulation log."""

    row: int
    time: float
    check: str
    detail: str


def audit_run(log) -> list[Violation]:
    """Re-check every logged row against the run invariants.

    Covers rotor speed and rate bounds, slack nonnegativity, the
    harmonic-mean capacity bound, end-to-end capacity consistency with the
    logged spectral efficiencies, and orthonormality of the attitude
    recomputed from the logged Euler angles.
    """
    n = log.n_rows
    if n == 0:
        raise OracleError("empty log")
    out: list[Violation] = []
    t = log["t"]
    tol = 1e-9

    u = np.stack([log[f"u{i+1}"] for i in range(log.n_rotors)], axis=1)
    du = np.stack([log[f"du{i+1}"] for i in range(log.n_rotors)], axis=1)

    for k in range(n):
        row_u = u[k]
        if row_u.min() < log.speed_min - tol or row_u.max() > log.speed_max + tol:
            out.append(
                Violation(
                    k,
                    float(t[k]),
                    "rotor_speed_bounds",
                    f"speeds in [{row_u.min():.6f}, {row_u.max():.6f}] Hz outside "
                    f"[{log.speed_min}, {log.speed_max}]",
                )
            )
        row_du = du[k]
        if row_du.min() < log.accel_min - tol or row_du.max() > log.accel_max + tol:
            out.append(
                Violation(
                    k,
                    float(t[k]),
                    "rotor_rate_bounds",
                    f"rates in [{row_du.min():.6f}, {row_du.max():.6f}] Hz/s outside "
                    f"[{log.accel_min}, {log.accel_max}]",
                )
            )
        if log["slack_max"][k] < -1e-12:
            out.append(Violation(k, float(t[k]), "slack_nonnegative", f"slack {log['slack_max'][k]:.3e} < 0"))

        c21, c10, cap = log["eff_21"][k], log["eff_10"][k], log["capacity"][k]
        if cap > log.bandwidth * min(c21, c10) + 1e-12:
            out.append(
                Violation(k, float(t[k]), "harmonic_mean_bound", f"C={cap:.6e} exceeds B*min(eff)={log.bandwidth * min(c21, c10):.6e}")
            )
        expected = end_to_end_capacity(c21, c10, log.bandwidth)
        if abs(cap - expected) > 1e-12:
            out.append(
                Violation(k, float(t[k]), "capacity_consistency", f"C={cap!r} but efficiencies give {expected!r}")
            )

        eta = np.array([log["roll"][k], log["pitch"][k], log["yaw"][k]])
        R = rotation_from_euler(eta)
        drift = np.abs(R.T @ R - np.eye(3)).max()
        if drift >= 1e-10:
            out.append(Violation(k, float(t[k]), "rotation_orthonormality", f"||R^T R - I|| = {drift:.3e}"))
    return out
