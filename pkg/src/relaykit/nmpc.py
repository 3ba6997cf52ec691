"""Receding-horizon controller with antenna-alignment awareness.

Tracks relay references while keeping rotor speeds and accelerations
inside hard bounds and steering the antenna boresight so both hops of the
relay link keep usable gain. The optimal control problem is transcribed by
multiple shooting over the vehicle model, linearized around the current
rollout, condensed onto the input and slack variables, and solved as a
dense QP per Gauss-Newton iteration. By default one warm-started iteration
runs per control tick (real-time-iteration style); more are taken, with
Armijo backtracking, while the step residual stays above tolerance.

The mutual alignment constraint

    (1 - v_12)(1 - v_10) >= mu - pi_k,   pi_k >= 0

is the only softened constraint; its slack is penalized quadratically.
Given the states, the optimal slack is elementwise max(0, mu - product),
which the line-search merit function exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import vehicle as veh
from .qp import QpError, solve_qp
from .vehicle import ControlInput, MravParams, VehicleState

E3 = np.array([0.0, 0.0, 1.0])


class SolverError(RuntimeError):
    """NMPC could not produce a usable solution."""


def _scaled_eye(n, w):
    return np.asarray(w, dtype=float) if np.ndim(w) == 2 else float(w) * np.eye(n)


@dataclass(frozen=True)
class OcpConfig:
    """Horizon, weights and constraint parameters of the tracking OCP."""

    horizon_steps: int = 30
    dt: float = 0.015
    weight_track: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(9))
    weight_track_terminal: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(9))
    # input-variation weight in normalized-input units: 10 per (udot/udot_max)^2
    weight_input_var: np.ndarray = field(default_factory=lambda: (10.0 / 400.0**2) * np.eye(6))
    weight_misalign: np.ndarray = field(default_factory=lambda: 10.0 * np.eye(2))
    weight_misalign_terminal: np.ndarray = field(default_factory=lambda: 10.0 * np.eye(2))
    alignment_floor: float = 0.2
    slack_weight: float = 1e4
    enforce_alignment: bool = True
    direction_mode: str = "error_feedback"
    dir_feedback_kp: float = 1.0
    dir_feedback_kv: float = 1.7
    dir_accel_limit: float = 4.0
    sqp_iters: int = 5
    qp_tolerance: float = 1e-10
    kkt_tolerance: float = 1e-3

    def __post_init__(self):
        for name, dim in (
            ("weight_track", 9),
            ("weight_track_terminal", 9),
            ("weight_misalign", 2),
            ("weight_misalign_terminal", 2),
        ):
            W = _scaled_eye(dim, getattr(self, name))
            if W.shape != (dim, dim) or np.abs(W - W.T).max() > 1e-12:
                raise ValueError(f"{name} must be a symmetric {dim}x{dim} matrix")
            if np.linalg.eigvalsh(W)[0] < -1e-10:
                raise ValueError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, W)
        Wu = np.asarray(self.weight_input_var, dtype=float)
        if np.ndim(self.weight_input_var) != 2:
            Wu = float(self.weight_input_var) * np.eye(6)
        if np.linalg.eigvalsh(Wu)[0] <= 0.0:
            raise ValueError("weight_input_var must be positive definite")
        object.__setattr__(self, "weight_input_var", Wu)
        if self.horizon_steps < 2:
            raise ValueError("horizon must span at least 2 steps")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.alignment_floor <= 1.0:
            raise ValueError("alignment_floor must lie in (0, 1]")
        if self.slack_weight <= 0.0:
            raise ValueError("slack_weight must be positive")
        if self.direction_mode not in ("gravity_compensated", "paper_literal", "error_feedback"):
            raise ValueError(f"unknown direction_mode {self.direction_mode!r}")
        if self.dir_feedback_kp < 0.0 or self.dir_feedback_kv < 0.0 or self.dir_accel_limit <= 0.0:
            raise ValueError("direction feedback gains must be nonnegative, limit positive")


@dataclass(frozen=True)
class StageReference:
    """Reference point plus scene geometry for one shooting node."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    bs_position: np.ndarray
    source_position: np.ndarray

    def __post_init__(self):
        for name in ("position", "velocity", "acceleration", "bs_position", "source_position"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


@dataclass(frozen=True)
class OcpSolution:
    """Trajectory, inputs, slacks and diagnostics of one OCP solve."""

    states: tuple
    inputs: tuple
    slacks: np.ndarray
    kkt_residual: float
    qp_status: str
    cost: float
    sqp_iters_used: int = 0
    qp_iterations: int = 0


def desired_thrust_direction(
    acceleration,
    mode: str,
    gravity: float,
    position_error=None,
    velocity_error=None,
    kp: float = 1.0,
    kv: float = 1.7,
    accel_limit: float = 4.0,
) -> np.ndarray:
    """Unit thrust direction consistent with a desired acceleration.

    ``gravity_compensated`` points the thrust so it produces the reference
    acceleration once gravity is subtracted; regular at hover. The
    ``paper_literal`` variant normalizes the negated reference acceleration
    and falls back to vertical when it nearly vanishes. ``error_feedback``
    (the closed-loop default) adds damped position/velocity feedback to the
    reference acceleration before gravity compensation, so the direction
    error demands attitude that actively corrects tracking errors; without
    it, a cost on input variation alone lets a short receding horizon defer
    all corrective effort indefinitely.
    """
    acc = np.asarray(acceleration, dtype=float)
    if mode == "paper_literal":
        n = np.linalg.norm(acc)
        return -acc / n if n >= 1e-3 else E3.copy()
    if mode == "error_feedback":
        a_des = acc - kp * np.asarray(position_error, dtype=float) - kv * np.asarray(
            velocity_error, dtype=float
        )
        n = np.linalg.norm(a_des)
        if n > accel_limit:
            a_des = (accel_limit / n) * a_des
        acc = a_des
    t = acc + gravity * E3
    n = np.linalg.norm(t)
    return t / n if n >= 1e-6 else E3.copy()


def tracking_error(
    state: VehicleState,
    ref: StageReference,
    mode: str = "gravity_compensated",
    gravity: float = veh.GRAVITY,
    kp: float = 1.0,
    kv: float = 1.7,
    accel_limit: float = 4.0,
) -> np.ndarray:
    """Stacked position, velocity and thrust-direction error (9-vector)."""
    rho = veh.rotation_from_euler(state.euler)[:, 2]
    e_p = state.position - ref.position
    e_v = state.velocity - ref.velocity
    rho_d = desired_thrust_direction(
        ref.acceleration, mode, gravity, e_p, e_v, kp=kp, kv=kv, accel_limit=accel_limit
    )
    return np.concatenate([e_p, e_v, rho - rho_d])


def _cosine_sq_with_grads(p, eta, peer):
    """Squared directional cosine of the link to ``peer`` plus its gradients
    with respect to position and Euler angles."""
    delta = peer - p
    dist = float(np.linalg.norm(delta))
    if dist < 1e-12:
        raise SolverError("alignment geometry degenerate: peer coincides with vehicle")
    dhat = delta / dist
    R, dR_phi, dR_theta, dR_psi = veh.rotation_derivatives(eta)
    rho = R[:, 2]
    c = float(dhat @ rho)
    v = c * c
    dv_dp = (2.0 * c / dist) * (c * dhat - rho)
    dv_deta = 2.0 * c * np.array([dhat @ dR_phi[:, 2], dhat @ dR_theta[:, 2], dhat @ dR_psi[:, 2]])
    return v, dv_dp, dv_deta


def alignment_residual(state: VehicleState, source_position, bs_position, floor: float) -> float:
    """Mutual-alignment margin (1 - v_12)(1 - v_10) - mu."""
    v12, _, _ = _cosine_sq_with_grads(state.position, state.euler, np.asarray(source_position, float))
    v10, _, _ = _cosine_sq_with_grads(state.position, state.euler, np.asarray(bs_position, float))
    return (1.0 - v12) * (1.0 - v10) - floor


def stage_cost(
    state: VehicleState,
    control,
    prev_control,
    ref: StageReference,
    config: OcpConfig,
    terminal: bool = False,
    gravity: float = veh.GRAVITY,
) -> float:
    """Quadratic stage (or terminal) cost of the OCP objective."""
    e = tracking_error(
        state,
        ref,
        config.direction_mode,
        gravity,
        kp=config.dir_feedback_kp,
        kv=config.dir_feedback_kv,
        accel_limit=config.dir_accel_limit,
    )
    Qe = config.weight_track_terminal if terminal else config.weight_track
    cost = float(e @ Qe @ e)
    if not terminal:
        du = np.asarray(control, dtype=float) - np.asarray(prev_control, dtype=float)
        cost += float(du @ config.weight_input_var @ du)
    Qv = config.weight_misalign_terminal if terminal else config.weight_misalign
    if np.any(Qv):
        v12, _, _ = _cosine_sq_with_grads(state.position, state.euler, ref.source_position)
        v10, _, _ = _cosine_sq_with_grads(state.position, state.euler, ref.bs_position)
        mis = np.array([v12, v10])
        cost += float(mis @ Qv @ mis)
    return cost


class NmpcSolver:
    """One controller instance per vehicle; single-threaded within a solve."""

    def __init__(self, params: MravParams, config: OcpConfig):
        self.params = params
        self.config = config
        self.nu = params.n_rotors
        self.nx = 12 + self.nu
        if config.weight_input_var.shape != (self.nu, self.nu):
            raise ValueError("weight_input_var dimension does not match rotor count")

        # constant pieces of the condensed QP (shapes fixed by the config)
        N, nu = config.horizon_steps, self.nu
        nU = N * nu
        self._nU = nU
        self._n_slack = N + 1 if config.enforce_alignment else 0
        self._nz = nU + self._n_slack
        D = np.eye(nU)
        for k in range(1, N):
            D[k * nu : (k + 1) * nu, (k - 1) * nu : k * nu] = -np.eye(nu)
        Qblk = np.kron(np.eye(N), config.weight_input_var)
        self._D = D
        self._G_u = 2.0 * D.T @ Qblk  # maps input-variation residuals to gradient
        self._H_u = self._G_u @ D  # constant input-variation Hessian block

    # -- rollout -------------------------------------------------------

    def _rollout(self, x0, U):
        N = self.config.horizon_steps
        X = np.empty((N + 1, self.nx))
        X[0] = x0
        for k in range(N):
            X[k + 1] = veh._step_rk4_vec(X[k], U[k], self.params, self.config.dt)
        return X

    def _rollout_linearized(self, x0, U):
        N = self.config.horizon_steps
        X = np.empty((N + 1, self.nx))
        A = np.empty((N, self.nx, self.nx))
        B = np.empty((N, self.nx, self.nu))
        X[0] = x0
        for k in range(N):
            X[k + 1], A[k], B[k] = veh._step_rk4_with_jacobians(
                X[k], U[k], self.params, self.config.dt
            )
        return X, A, B

    # -- objective pieces ----------------------------------------------

    def _direction_ref(self, acc_ref, e_p, e_v):
        """Desired thrust direction and its sensitivities to the position
        and velocity errors (zero except in error_feedback mode)."""
        cfg = self.config
        g = self.params.gravity
        if cfg.direction_mode != "error_feedback":
            rho_d = desired_thrust_direction(acc_ref, cfg.direction_mode, g)
            return rho_d, None, None
        kp, kv = cfg.dir_feedback_kp, cfg.dir_feedback_kv
        a = acc_ref - kp * e_p - kv * e_v
        n = float(np.linalg.norm(a))
        if n > cfg.dir_accel_limit:
            ahat = a / n
            D = (cfg.dir_accel_limit / n) * (np.eye(3) - np.outer(ahat, ahat))
            a = cfg.dir_accel_limit * ahat
        else:
            D = np.eye(3)
        t = a + g * E3
        nt = float(np.linalg.norm(t))
        if nt < 1e-6:
            return E3.copy(), np.zeros((3, 3)), np.zeros((3, 3))
        rho_d = t / nt
        P = (np.eye(3) - np.outer(rho_d, rho_d)) / nt
        PD = P @ D
        return rho_d, -kp * PD, -kv * PD

    def _stage_terms(self, x, ref: StageReference, terminal: bool):
        """Residuals and state Jacobians of the tracking and misalignment
        terms at one shooting node."""
        cfg = self.config
        p, eta, v = x[0:3], x[3:6], x[6:9]
        R, dR_phi, dR_theta, dR_psi = veh.rotation_derivatives(eta)
        rho = R[:, 2]
        e_p = p - ref.position
        e_v = v - ref.velocity
        rho_d, drho_dep, drho_dev = self._direction_ref(ref.acceleration, e_p, e_v)
        e = np.concatenate([e_p, e_v, rho - rho_d])
        Je = np.zeros((9, self.nx))
        Je[0:3, 0:3] = np.eye(3)
        Je[3:6, 6:9] = np.eye(3)
        Je[6:9, 3] = dR_phi[:, 2]
        Je[6:9, 4] = dR_theta[:, 2]
        Je[6:9, 5] = dR_psi[:, 2]
        if drho_dep is not None:
            Je[6:9, 0:3] = -drho_dep
            Je[6:9, 6:9] = -drho_dev

        v12, dv12_p, dv12_eta = _cosine_sq_with_grads(p, eta, ref.source_position)
        v10, dv10_p, dv10_eta = _cosine_sq_with_grads(p, eta, ref.bs_position)
        mis = np.array([v12, v10])
        Jm = np.zeros((2, self.nx))
        Jm[0, 0:3], Jm[0, 3:6] = dv12_p, dv12_eta
        Jm[1, 0:3], Jm[1, 3:6] = dv10_p, dv10_eta

        align = (1.0 - v12) * (1.0 - v10)
        Ja = -(1.0 - v10) * Jm[0] - (1.0 - v12) * Jm[1]
        return e, Je, mis, Jm, align, Ja

    def _stage_values(self, x, ref: StageReference, terminal: bool):
        """Residual values only (no Jacobians) for merit evaluations."""
        cfg = self.config
        p, v = x[0:3], x[6:9]
        rho = veh.rotation_from_euler(x[3:6])[:, 2]
        e_p = p - ref.position
        e_v = v - ref.velocity
        rho_d = desired_thrust_direction(
            ref.acceleration,
            cfg.direction_mode,
            self.params.gravity,
            e_p,
            e_v,
            kp=cfg.dir_feedback_kp,
            kv=cfg.dir_feedback_kv,
            accel_limit=cfg.dir_accel_limit,
        )
        e = np.concatenate([e_p, e_v, rho - rho_d])

        def vsq(peer):
            delta = peer - p
            dist = float(np.linalg.norm(delta))
            if dist < 1e-12:
                raise SolverError("alignment geometry degenerate: peer coincides with vehicle")
            c = float(delta @ rho) / dist
            return c * c

        v12, v10 = vsq(ref.source_position), vsq(ref.bs_position)
        return e, np.array([v12, v10]), (1.0 - v12) * (1.0 - v10)

    def _objective(self, X, U, prev_u, refs):
        """Full NLP objective with slacks eliminated at their optimum."""
        cfg = self.config
        N = cfg.horizon_steps
        total = 0.0
        for k in range(N + 1):
            terminal = k == N
            e, mis, align = self._stage_values(X[k], refs[k], terminal)
            Qe = cfg.weight_track_terminal if terminal else cfg.weight_track
            Qv = cfg.weight_misalign_terminal if terminal else cfg.weight_misalign
            total += float(e @ Qe @ e) + float(mis @ Qv @ mis)
            if not terminal:
                du = U[k] - (U[k - 1] if k > 0 else prev_u)
                total += float(du @ cfg.weight_input_var @ du)
            if cfg.enforce_alignment:
                total += cfg.slack_weight * max(0.0, cfg.alignment_floor - align) ** 2
        return total

    def _optimal_slacks(self, X, refs):
        cfg = self.config
        if not cfg.enforce_alignment:
            return np.zeros(cfg.horizon_steps + 1)
        out = np.empty(cfg.horizon_steps + 1)
        for k in range(cfg.horizon_steps + 1):
            _, _, align = self._stage_values(X[k], refs[k], k == cfg.horizon_steps)
            out[k] = max(0.0, cfg.alignment_floor - align)
        return out

    # -- QP assembly ----------------------------------------------------

    def _build_qp(self, X, A, B, U, prev_u, refs):
        cfg = self.config
        N = cfg.horizon_steps
        nu, nx = self.nu, self.nx
        nU, n_slack, nz = self._nU, self._n_slack, self._nz

        # state sensitivities w.r.t. stacked input deltas
        S = np.zeros((N + 1, nx, nU))
        for k in range(N):
            np.matmul(A[k], S[k], out=S[k + 1])
            S[k + 1][:, k * nu : (k + 1) * nu] += B[k]

        # stack weighted residual Jacobians; one matmul builds the GN block

        n_rows_stage = 11  # 9 tracking + 2 misalignment rows per stage
        Jrows = np.zeros((N * n_rows_stage, nU))
        QJrows = np.zeros_like(Jrows)
        Qres = np.zeros(N * n_rows_stage)
        align_vals = np.empty(N + 1)
        align_rows = np.zeros((N + 1, nU)) if cfg.enforce_alignment else None
        align_rhs = np.empty(N + 1) if cfg.enforce_alignment else None

        for k in range(N + 1):
            terminal = k == N
            e, Je, mis, Jm, align, Ja = self._stage_terms(X[k], refs[k], terminal)
            align_vals[k] = align
            Qe = cfg.weight_track_terminal if terminal else cfg.weight_track
            Qv = cfg.weight_misalign_terminal if terminal else cfg.weight_misalign
            if k > 0:
                base = (k - 1) * n_rows_stage
                JeU = Je @ S[k]
                JmU = Jm @ S[k]
                Jrows[base : base + 9] = JeU
                Jrows[base + 9 : base + 11] = JmU
                QJrows[base : base + 9] = Qe @ JeU
                QJrows[base + 9 : base + 11] = Qv @ JmU
                Qres[base : base + 9] = Qe @ e
                Qres[base + 9 : base + 11] = Qv @ mis
            if cfg.enforce_alignment:
                if k > 0:
                    align_rows[k] = Ja @ S[k]
                align_rhs[k] = cfg.alignment_floor - align

        Hqp = np.zeros((nz, nz))
        gqp = np.zeros(nz)
        GN = 2.0 * (Jrows.T @ QJrows)
        Hqp[:nU, :nU] = 0.5 * (GN + GN.T) + self._H_u
        gqp[:nU] = 2.0 * (Jrows.T @ Qres)
        r_u = self._D @ U.ravel()
        r_u[:nu] -= prev_u
        gqp[:nU] += self._G_u @ r_u

        if cfg.enforce_alignment:
            Hqp[nU:, nU:] = 2.0 * cfg.slack_weight * np.eye(n_slack)

        jitter = 1e-9 * max(1.0, float(np.abs(np.diag(Hqp)).max()))
        Hqp[np.diag_indices(nz)] += jitter

        # constraint rows: rate bounds, speed bounds at nodes 1..N,
        # alignment with slack, slack nonnegativity
        m_rows = 4 * nU + (2 * n_slack if cfg.enforce_alignment else 0)
        C = np.zeros((m_rows, nz))
        d = np.empty(m_rows)
        idx = np.arange(nU)
        C[idx, idx] = 1.0
        d[:nU] = self.params.accel_min - U.ravel()
        C[nU + idx, idx] = -1.0
        d[nU : 2 * nU] = U.ravel() - self.params.accel_max
        row = 2 * nU
        for k in range(1, N + 1):
            Su = S[k][12:, :]
            u_pred = X[k][12:]
            C[row : row + nu, :nU] = Su
            d[row : row + nu] = self.params.speed_min - u_pred
            C[row + nu : row + 2 * nu, :nU] = -Su
            d[row + nu : row + 2 * nu] = u_pred - self.params.speed_max
            row += 2 * nu
        if cfg.enforce_alignment:
            C[row : row + n_slack, :nU] = align_rows
            C[row + np.arange(n_slack), nU + np.arange(n_slack)] = 1.0
            d[row : row + n_slack] = align_rhs
            row += n_slack
            C[row + np.arange(n_slack), nU + np.arange(n_slack)] = 1.0
            d[row : row + n_slack] = 0.0
        return Hqp, gqp, C, d, align_vals

    # -- main entry ------------------------------------------------------

    def solve(
        self,
        initial: VehicleState,
        refs,
        prev_applied_input,
        warm: OcpSolution | None = None,
    ) -> OcpSolution:
        cfg = self.config
        N = cfg.horizon_steps
        if len(refs) != N + 1:
            raise ValueError(f"need {N + 1} stage references, got {len(refs)}")
        x0 = initial.as_vector()
        prev_u = np.asarray(
            prev_applied_input.rotor_accels
            if isinstance(prev_applied_input, ControlInput)
            else prev_applied_input,
            dtype=float,
        )
        if warm is not None:
            U = np.array([ci.rotor_accels for ci in warm.inputs], dtype=float)
        else:
            U = np.zeros((N, self.nu))

        kkt = math.inf
        qp_iter_total = 0
        qp_status = "optimal"
        iters_used = 0
        merit_old = None

        for it in range(max(1, cfg.sqp_iters)):
            iters_used = it + 1
            try:
                X, A, B = self._rollout_linearized(x0, U)
            except (veh.EulerSingularityError, veh.IntegrationError):
                if it == 0 and warm is not None and np.any(U):
                    # shifted warm start leaves the model's domain; restart
                    # from a constant-speed guess
                    U = np.zeros((N, self.nu))
                    X, A, B = self._rollout_linearized(x0, U)
                else:
                    raise SolverError("prediction rollout left the attitude model's domain")
            if merit_old is None:
                merit_old = self._objective(X, U, prev_u, refs)
            try:
                Hqp, gqp, C, d, align_vals = self._build_qp(X, A, B, U, prev_u, refs)
                res = solve_qp(Hqp, gqp, C, d, tol=cfg.qp_tolerance)
            except QpError as exc:
                raise SolverError(f"QP subproblem failed at SQP iteration {it + 1}: {exc}") from exc
            qp_iter_total += res.iterations
            qp_status = res.status
            nU = N * self.nu
            dU = res.x[:nU].reshape(N, self.nu)

            # predicted decrease measured against the current feasible point
            z0 = np.zeros_like(res.x)
            if cfg.enforce_alignment:
                z0[nU:] = np.maximum(0.0, cfg.alignment_floor - align_vals)
            qp_obj = lambda z: float(0.5 * z @ Hqp @ z + gqp @ z)
            pred = qp_obj(z0) - qp_obj(res.x)

            step_scale = float(np.abs(dU).max()) / (1.0 + float(np.abs(U).max()))
            if step_scale < 1e-14:
                kkt = step_scale
                break

            alpha = 1.0
            accepted = False
            while alpha >= 1.0 / 64.0:
                U_try = np.clip(U + alpha * dU, self.params.accel_min, self.params.accel_max)
                try:
                    X_try = self._rollout(x0, U_try)
                    merit_try = self._objective(X_try, U_try, prev_u, refs)
                except (veh.EulerSingularityError, veh.IntegrationError):
                    merit_try = math.inf  # candidate leaves the model's domain
                if merit_try <= merit_old - 1e-4 * alpha * max(pred, 0.0) + 1e-12:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                # model and rollout disagree; keep the current iterate
                kkt = step_scale
                break
            U = U_try
            merit_old = merit_try
            kkt = alpha * step_scale
            if kkt <= cfg.kkt_tolerance:
                break

        U = np.clip(U, self.params.accel_min, self.params.accel_max)
        X = self._rollout(x0, U)
        slacks = self._optimal_slacks(X, refs)
        cost = self._objective(X, U, prev_u, refs)
        states = tuple(VehicleState.from_vector(x) for x in X)
        inputs = tuple(ControlInput(u.copy()) for u in U)
        return OcpSolution(
            states=states,
            inputs=inputs,
            slacks=slacks,
            kkt_residual=float(kkt),
            qp_status=qp_status,
            cost=float(cost),
            sqp_iters_used=iters_used,
            qp_iterations=qp_iter_total,
        )


def solve_ocp(
    initial: VehicleState,
    refs,
    prev_applied_input,
    config: OcpConfig,
    params: MravParams,
    warm: OcpSolution | None = None,
) -> OcpSolution:
    """Convenience wrapper building a throwaway solver instance."""
    return NmpcSolver(params, config).solve(initial, refs, prev_applied_input, warm)


def shift_warm_start(solution: OcpSolution, params: MravParams, dt: float) -> OcpSolution:
    """Advance a solution one stage for the next receding-horizon tick.

    States and inputs shift left; the final input repeats and the final
    state comes from one model step under that repeated input; slacks
    shift with their last value repeated.
    """
    last_state = solution.states[-1]
    last_input = solution.inputs[-1]
    new_final = veh.step_rk4(last_state, last_input, params, dt)
    states = tuple(solution.states[1:]) + (new_final,)
    inputs = tuple(solution.inputs[1:]) + (last_input,)
    slacks = np.concatenate([solution.slacks[1:], solution.slacks[-1:]])
    return replace(solution, states=states, inputs=inputs, slacks=slacks)
