"""Generically-tilted multirotor rigid-body model.

Newton-Euler dynamics of a multirotor with arbitrarily placed and oriented
rotors. The same model serves as the simulated plant (integrated at high
rate with speed clamping) and as the prediction model inside the NMPC
(integrated once per shooting interval with analytic Jacobians).

State layout (packed vector of length 12 + n_rotors):

    [0:3]   position p, world frame [m]
    [3:6]   Euler angles (roll, pitch, yaw), ZYX intrinsic [rad]
    [6:9]   velocity v, world frame [m/s]
    [9:12]  body rates w, body frame [rad/s]
    [12:]   rotor speeds u [Hz]

Rotor speeds are stored in Hz and thrust is quadratic in speed,
xi_i = c_xi * u_i**2, so actuator bounds apply directly to the stored
variable. The commanded input is the rotor acceleration du/dt [Hz/s].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81

# Pitch magnitude beyond which the Euler-rate map is treated as singular.
PITCH_GUARD = math.pi / 2 - 1e-6


class ParameterError(ValueError):
    """Invalid physical parameter set."""


class EulerSingularityError(ValueError):
    """Pitch too close to +-pi/2 for the Euler-rate map."""


class IntegrationError(RuntimeError):
    """Non-finite values produced during integration."""


@dataclass(frozen=True)
class RotorUnit:
    """Single motor-propeller unit.

    position_body : (3,) mounting point in the body frame [m]
    axis_body     : (3,) unit thrust axis in the body frame
    spin_sign     : +1 or -1; sign of the reaction (drag) torque along the axis
    thrust_coeff  : thrust per squared speed [N/Hz^2]
    drag_coeff    : drag torque per squared speed [N m/Hz^2]
    """

    position_body: np.ndarray
    axis_body: np.ndarray
    spin_sign: int
    thrust_coeff: float
    drag_coeff: float

    def __post_init__(self):
        object.__setattr__(self, "position_body", np.asarray(self.position_body, dtype=float))
        object.__setattr__(self, "axis_body", np.asarray(self.axis_body, dtype=float))
        if abs(np.linalg.norm(self.axis_body) - 1.0) > 1e-12:
            raise ParameterError("rotor axis must be a unit vector")
        if self.spin_sign not in (-1, 1):
            raise ParameterError("spin_sign must be +1 or -1")
        if self.thrust_coeff <= 0.0:
            raise ParameterError("thrust_coeff must be positive")
        if self.drag_coeff < 0.0:
            raise ParameterError("drag_coeff must be nonnegative")


def allocation_maps(rotors) -> tuple[np.ndarray, np.ndarray]:
    """Force and moment maps acting on the per-rotor thrust vector.

    Column i of F is the thrust axis of rotor i; column i of M is the
    thrust-induced moment arm plus the drag-torque contribution, both per
    unit thrust, so that net force = F @ xi and net moment = M @ xi with
    xi_i = c_xi * u_i**2.
    """
    n = len(rotors)
    fmap = np.zeros((3, n))
    mmap = np.zeros((3, n))
    for i, r in enumerate(rotors):
        fmap[:, i] = r.axis_body
        mmap[:, i] = np.cross(r.position_body, r.axis_body) + r.spin_sign * (
            r.drag_coeff / r.thrust_coeff
        ) * r.axis_body
    return fmap, mmap


@dataclass(frozen=True)
class MravParams:
    """Mass, inertia, rotor layout, allocation maps and actuator bounds."""

    mass: float
    inertia: np.ndarray
    rotors: tuple
    force_map: np.ndarray
    moment_map: np.ndarray
    speed_min: float
    speed_max: float
    accel_min: float
    accel_max: float
    gravity: float = GRAVITY

    def __post_init__(self):
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float))
        object.__setattr__(self, "force_map", np.asarray(self.force_map, dtype=float))
        object.__setattr__(self, "moment_map", np.asarray(self.moment_map, dtype=float))
        if self.mass <= 0.0:
            raise ParameterError("mass must be positive")
        if self.inertia.shape != (3, 3) or not np.allclose(self.inertia, self.inertia.T):
            raise ParameterError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0.0):
            raise ParameterError("inertia must be positive definite")
        if len(self.rotors) < 4:
            raise ParameterError("at least 4 rotors required")
        if not self.speed_min < self.speed_max:
            raise ParameterError("speed_min must be below speed_max")
        if not (self.accel_min < 0.0 < self.accel_max):
            raise ParameterError("accel bounds must straddle zero")
        fmap, mmap = allocation_maps(self.rotors)
        if not (np.allclose(fmap, self.force_map, atol=1e-12) and np.allclose(mmap, self.moment_map, atol=1e-12)):
            raise ParameterError("allocation maps inconsistent with rotor list")
        object.__setattr__(self, "_inertia_inv", np.linalg.inv(self.inertia))
        object.__setattr__(self, "_thrust_coeffs", np.array([r.thrust_coeff for r in self.rotors]))

    @property
    def n_rotors(self) -> int:
        return len(self.rotors)

    @property
    def thrust_coeffs(self) -> np.ndarray:
        return self._thrust_coeffs

    def hover_speed(self) -> float:
        """Equal rotor speed balancing gravity for a symmetric layout."""
        c = self.thrust_coeffs
        axial = self.force_map[2]
        denom = float(np.sum(c * axial))
        if denom <= 0.0:
            raise ParameterError("layout cannot support hover at equal speeds")
        return math.sqrt(self.mass * self.gravity / denom)


@dataclass(frozen=True)
class VehicleState:
    """Augmented state: pose, twist and rotor speeds."""

    position: np.ndarray
    euler: np.ndarray
    velocity: np.ndarray
    body_rates: np.ndarray
    rotor_speeds: np.ndarray

    def __post_init__(self):
        for name in ("position", "euler", "velocity", "body_rates", "rotor_speeds"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.position, self.euler, self.velocity, self.body_rates, self.rotor_speeds]
        )

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "VehicleState":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[0:3], vec[3:6], vec[6:9], vec[9:12], vec[12:])


@dataclass(frozen=True)
class ControlInput:
    """Commanded rotor accelerations [Hz/s]."""

    rotor_accels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotor_accels", np.asarray(self.rotor_accels, dtype=float))


def hover_state(params: MravParams, position) -> VehicleState:
    """Level equilibrium state at the given position."""
    u = params.hover_speed()
    return VehicleState(
        position=np.asarray(position, dtype=float),
        euler=np.zeros(3),
        velocity=np.zeros(3),
        body_rates=np.zeros(3),
        rotor_speeds=np.full(params.n_rotors, u),
    )


def build_hexarotor(
    layout: str = "coplanar",
    tilt_angle: float = 0.0,
    *,
    mass: float = 2.57,
    inertia=None,
    arm_length: float = 0.4,
    thrust_coeff: float = 1.18e-3,
    drag_coeff: float = 2.5e-5,
    speed_min: float = 16.0,
    speed_max: float = 100.0,
    accel_min: float = -300.0,
    accel_max: float = 400.0,
    gravity: float = GRAVITY,
) -> MravParams:
    """Six-rotor platform with arms at 60 degree increments.

    ``layout="coplanar"`` points every rotor along body z. ``layout="tilted"``
    cants each axis by ``tilt_angle`` about its arm direction, with the cant
    sign alternating between adjacent rotors so lateral force components are
    available while the net wrench at equal speeds stays zero.
    """
    if layout not in ("coplanar", "tilted"):
        raise ParameterError(f"unknown layout {layout!r}")
    if layout == "coplanar":
        tilt_angle = 0.0
    if not -math.pi / 3 < tilt_angle < math.pi / 3:
        raise ParameterError("tilt angle must lie in (-pi/3, pi/3)")
    if arm_length <= 0.0:
        raise ParameterError("arm length must be positive")
    if inertia is None:
        inertia = np.diag([0.11, 0.11, 0.19])

    rotors = []
    for i in range(6):
        az = i * math.pi / 3
        arm_dir = np.array([math.cos(az), math.sin(az), 0.0])
        spin = 1 if i % 2 == 0 else -1
        cant = spin * tilt_angle
        # Rotation of e3 about the arm direction: e3 -> cos(b) e3 + sin(b) (a x e3)
        axis = np.array(
            [
                math.sin(cant) * math.sin(az),
                -math.sin(cant) * math.cos(az),
                math.cos(cant),
            ]
        )
        rotors.append(
            RotorUnit(
                position_body=arm_length * arm_dir,
                axis_body=axis,
                spin_sign=spin,
                thrust_coeff=thrust_coeff,
                drag_coeff=drag_coeff,
            )
        )
    fmap, mmap = allocation_maps(rotors)
    return MravParams(
        mass=mass,
        inertia=inertia,
        rotors=tuple(rotors),
        force_map=fmap,
        moment_map=mmap,
        speed_min=speed_min,
        speed_max=speed_max,
        accel_min=accel_min,
        accel_max=accel_max,
        gravity=gravity,
    )


def rotation_from_euler(euler) -> np.ndarray:
    """Body-to-world rotation for ZYX (yaw-pitch-roll) intrinsic Euler angles."""
    phi, theta, psi = np.asarray(euler, dtype=float)
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
            [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
            [-st, ct * sf, ct * cf],
        ]
    )


def rotation_derivatives(euler) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Rotation matrix and its partial derivatives w.r.t. each Euler angle."""
    phi, theta, psi = np.asarray(euler, dtype=float)
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    R = np.array(
        [
            [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
            [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
            [-st, ct * sf, ct * cf],
        ]
    )
    dphi = np.array(
        [
            [0.0, cp * st * cf + sp * sf, -cp * st * sf + sp * cf],
            [0.0, sp * st * cf - cp * sf, -sp * st * sf - cp * cf],
            [0.0, ct * cf, -ct * sf],
        ]
    )
    dtheta = np.array(
        [
            [-cp * st, cp * ct * sf, cp * ct * cf],
            [-sp * st, sp * ct * sf, sp * ct * cf],
            [-ct, -st * sf, -st * cf],
        ]
    )
    dpsi = np.array(
        [
            [-sp * ct, -sp * st * sf - cp * cf, -sp * st * cf + cp * sf],
            [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
            [0.0, 0.0, 0.0],
        ]
    )
    return R, dphi, dtheta, dpsi


def euler_rate_map(euler) -> np.ndarray:
    """Map T with eta_dot = T(eta) @ omega, consistent with rotation_from_euler."""
    phi, theta, _ = np.asarray(euler, dtype=float)
    if abs(theta) >= PITCH_GUARD:
        raise EulerSingularityError(f"pitch {theta:.6f} rad too close to +-pi/2")
    cf, sf = math.cos(phi), math.sin(phi)
    ct, tt = math.cos(theta), math.tan(theta)
    return np.array(
        [
            [1.0, sf * tt, cf * tt],
            [0.0, cf, -sf],
            [0.0, sf / ct, cf / ct],
        ]
    )


def _euler_rate_map_derivs(phi: float, theta: float):
    """T and its partials w.r.t. roll and pitch (yaw does not enter)."""
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    tt = st / ct
    T = np.array([[1.0, sf * tt, cf * tt], [0.0, cf, -sf], [0.0, sf / ct, cf / ct]])
    dT_phi = np.array([[0.0, cf * tt, -sf * tt], [0.0, -sf, -cf], [0.0, cf / ct, -sf / ct]])
    sec2 = 1.0 / (ct * ct)
    dT_theta = np.array(
        [
            [0.0, sf * sec2, cf * sec2],
            [0.0, 0.0, 0.0],
            [0.0, sf * st * sec2, cf * st * sec2],
        ]
    )
    return T, dT_phi, dT_theta


def thrusts(params: MravParams, rotor_speeds: np.ndarray) -> np.ndarray:
    """Per-rotor thrust magnitudes xi_i = c_xi * u_i**2 [N]."""
    return params.thrust_coeffs * np.square(rotor_speeds)


def dynamics_rhs(state: VehicleState, control: ControlInput, params: MravParams) -> np.ndarray:
    """Time derivative of the packed state vector."""
    return _rhs(state.as_vector(), control.rotor_accels, params)


def _rhs(x: np.ndarray, udot: np.ndarray, params: MravParams) -> np.ndarray:
    phi, theta, psi = x[3], x[4], x[5]
    omega = x[9:12]
    u = x[12:]
    if abs(theta) >= PITCH_GUARD:
        raise EulerSingularityError(f"pitch {theta:.6f} rad too close to +-pi/2")
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    wx, wy, wz = omega
    xi = params._thrust_coeffs * np.square(u)
    fb = params.force_map @ xi  # body-frame net thrust force
    J = params.inertia
    Jw = J @ omega
    tq = params.moment_map @ xi
    tq = tq - np.array([wy * Jw[2] - wz * Jw[1], wz * Jw[0] - wx * Jw[2], wx * Jw[1] - wy * Jw[0]])

    dx = np.empty_like(x)
    dx[0:3] = x[6:9]
    tt = st / ct
    dx[3] = wx + sf * tt * wy + cf * tt * wz
    dx[4] = cf * wy - sf * wz
    dx[5] = (sf * wy + cf * wz) / ct
    inv_m = 1.0 / params.mass
    dx[6] = (cp * ct * fb[0] + (cp * st * sf - sp * cf) * fb[1] + (cp * st * cf + sp * sf) * fb[2]) * inv_m
    dx[7] = (sp * ct * fb[0] + (sp * st * sf + cp * cf) * fb[1] + (sp * st * cf - cp * sf) * fb[2]) * inv_m
    dx[8] = (-st * fb[0] + ct * sf * fb[1] + ct * cf * fb[2]) * inv_m - params.gravity
    dx[9:12] = params._inertia_inv @ tq
    dx[12:] = udot
    return dx


def _rhs_and_state_jacobian(x: np.ndarray, udot: np.ndarray, params: MravParams):
    """RHS together with its Jacobian w.r.t. the packed state.

    The Jacobian w.r.t. the input is constant (identity on the rotor-speed
    rows) and handled by the caller.
    """
    n = x.size
    eta = x[3:6]
    omega = x[9:12]
    u = x[12:]
    phi, theta = eta[0], eta[1]
    if abs(theta) >= PITCH_GUARD:
        raise EulerSingularityError(f"pitch {theta:.6f} rad too close to +-pi/2")
    R, dR_phi, dR_theta, dR_psi = rotation_derivatives(eta)
    T, dT_phi, dT_theta = _euler_rate_map_derivs(phi, theta)
    c = params._thrust_coeffs
    xi = c * np.square(u)
    Fxi = params.force_map @ xi
    Mxi = params.moment_map @ xi
    J = params.inertia
    Jinv = params._inertia_inv
    Jw = J @ omega
    wx, wy, wz = omega
    coriolis = np.array([wy * Jw[2] - wz * Jw[1], wz * Jw[0] - wx * Jw[2], wx * Jw[1] - wy * Jw[0]])

    dx = np.empty_like(x)
    dx[0:3] = x[6:9]
    dx[3:6] = T @ omega
    dx[6:9] = (R @ Fxi) / params.mass
    dx[8] -= params.gravity
    dx[9:12] = Jinv @ (Mxi - coriolis)
    dx[12:] = udot

    A = np.zeros((n, n))
    A[0:3, 6:9] = np.eye(3)
    A[3:6, 3] = dT_phi @ omega
    A[3:6, 4] = dT_theta @ omega
    A[3:6, 9:12] = T
    A[6:9, 3] = (dR_phi @ Fxi) / params.mass
    A[6:9, 4] = (dR_theta @ Fxi) / params.mass
    A[6:9, 5] = (dR_psi @ Fxi) / params.mass
    dxi_du = 2.0 * c * u
    A[6:9, 12:] = (R @ params.force_map) * dxi_du / params.mass
    A[9:12, 9:12] = Jinv @ (cross_matrix(Jw) - cross_matrix(omega) @ J)
    A[9:12, 12:] = (Jinv @ params.moment_map) * dxi_du
    return dx, A


def cross_matrix(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix with cross_matrix(v) @ w = v x w."""
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def step_rk4(
    state: VehicleState,
    control: ControlInput,
    params: MravParams,
    dt: float,
    clamp_speeds: bool = False,
) -> VehicleState:
    """Classical RK4 step with zero-order-hold input.

    ``clamp_speeds`` saturates the rotor speeds at the actuator bounds after
    the step; used when the model acts as the simulated plant, mirroring ESC
    behavior. The NMPC prediction model keeps speeds free and enforces the
    bounds as constraints.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x = _step_rk4_vec(state.as_vector(), control.rotor_accels, params, dt, clamp_speeds)
    return VehicleState.from_vector(x)


def _step_rk4_vec(x, udot, params, dt, clamp_speeds=False):
    k1 = _rhs(x, udot, params)
    k2 = _rhs(x + 0.5 * dt * k1, udot, params)
    k3 = _rhs(x + 0.5 * dt * k2, udot, params)
    k4 = _rhs(x + dt * k3, udot, params)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite state after RK4 step")
    if clamp_speeds:
        np.clip(out[12:], params.speed_min, params.speed_max, out=out[12:])
    return out


def _step_rk4_with_jacobians(x, udot, params, dt):
    """RK4 step plus sensitivities of the next state w.r.t. state and input."""
    n = x.size
    nu = udot.size
    eye = np.eye(n)
    E = np.zeros((n, nu))
    E[12:, :] = np.eye(nu)

    k1, J1 = _rhs_and_state_jacobian(x, udot, params)
    P1x, P1u = J1, E.copy()

    x2 = x + 0.5 * dt * k1
    k2, J2 = _rhs_and_state_jacobian(x2, udot, params)
    P2x = J2 @ (eye + 0.5 * dt * P1x)
    P2u = J2 @ (0.5 * dt * P1u) + E

    x3 = x + 0.5 * dt * k2
    k3, J3 = _rhs_and_state_jacobian(x3, udot, params)
    P3x = J3 @ (eye + 0.5 * dt * P2x)
    P3u = J3 @ (0.5 * dt * P2u) + E

    x4 = x + dt * k3
    k4, J4 = _rhs_and_state_jacobian(x4, udot, params)
    P4x = J4 @ (eye + dt * P3x)
    P4u = J4 @ (dt * P3u) + E

    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise IntegrationError("non-finite state after RK4 step")
    A = eye + (dt / 6.0) * (P1x + 2.0 * P2x + 2.0 * P3x + P4x)
    B = (dt / 6.0) * (P1u + 2.0 * P2u + 2.0 * P3u + P4u)
    return x_next, A, B
