"""Communications-aware reference generation.

Builds a conservative, orientation-free model of the two-hop relay channel
in which the jammer is assumed perfectly aligned with the victim receiver
(peak gain) and the legitimate links keep a guaranteed alignment fraction.
Under this model the inverse of the end-to-end capacity depends on relay
and source positions only through three Euclidean distances, so its
gradient and Hessian have closed forms. A second-order Taylor model of the
inverse capacity yields relay position/velocity/acceleration references in
closed form from the partitioned Hessian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .radio import GeometryError

LN2 = math.log(2.0)

# Minimum eigenvalue demanded of the relay Hessian block before its inverse
# is used; comfortably above eigenvalue noise at this problem scale.
EPS_PD = 1e-6

# Step limit applied to references consumed by the tracking controller.
TRUST_RADIUS = 0.5


@dataclass(frozen=True)
class ConservativeParams:
    """Inputs of the conservative channel model.

    ``jammer_power_known`` is the jammer power as known to the planner; it
    stays zero until the localization delay has elapsed (see
    :mod:`relaykit.scenario`), while the true channel always uses the true
    power.
    """

    bs_position: np.ndarray
    jammer_position: np.ndarray
    peak_gain: float = 1.0
    alignment_floor: float = 0.2
    tx_power: float = 1.0
    jammer_power_known: float = 1.0
    noise_var_relay: float = 1.0
    noise_var_bs: float = 1.0
    bandwidth: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bs_position", np.asarray(self.bs_position, dtype=float))
        object.__setattr__(self, "jammer_position", np.asarray(self.jammer_position, dtype=float))
        if not 0.0 < self.alignment_floor <= 1.0:
            raise ValueError("alignment_floor must lie in (0, 1]")
        if self.tx_power < 0.0 or self.jammer_power_known < 0.0:
            raise ValueError("powers must be nonnegative")
        if self.noise_var_relay <= 0.0 or self.noise_var_bs <= 0.0:
            raise ValueError("noise variances must be positive")
        if self.bandwidth <= 0.0 or self.peak_gain <= 0.0:
            raise ValueError("bandwidth and peak gain must be positive")


@dataclass(frozen=True)
class SurrogateModel:
    """Second-order model of the inverse capacity around an expansion point.

    Gradient and Hessian are partitioned into relay (first three
    coordinates) and source (last three) blocks. ``reg_attempts`` and
    ``reg_fallback`` record what the regularization safeguard did.
    """

    expansion_point: np.ndarray
    value: float
    grad_relay: np.ndarray
    grad_source: np.ndarray
    hess_rr: np.ndarray
    hess_rs: np.ndarray
    hess_ss: np.ndarray
    reg_attempts: int = 0
    reg_fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "expansion_point", np.asarray(self.expansion_point, dtype=float))


@dataclass(frozen=True)
class RelayReference:
    """Position, velocity and acceleration reference for the relay."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def _check_distances(*squared):
    for s in squared:
        if np.any(np.asarray(s) < 1e-18):
            raise GeometryError("coincident node positions in conservative channel")


def conservative_sinr(relay_pos, source_pos, params: ConservativeParams):
    """Worst-case-alignment SINR of both hops.

    Broadcasts over leading axes of ``relay_pos`` so a grid of candidate
    relay positions can be evaluated in one call.
    """
    relay = np.asarray(relay_pos)
    source = np.asarray(source_pos)
    if not np.issubdtype(relay.dtype, np.floating):
        relay = relay.astype(float)
    if not np.issubdtype(source.dtype, np.floating):
        source = source.astype(float)
    gbar = params.peak_gain
    a_num = params.alignment_floor * gbar * gbar * params.tx_power
    jam = gbar * params.jammer_power_known

    s21 = np.sum(np.square(relay - source), axis=-1)
    s10 = np.sum(np.square(relay - params.bs_position), axis=-1)
    sj1 = np.sum(np.square(relay - params.jammer_position), axis=-1)
    sj0 = float(np.sum(np.square(params.jammer_position - params.bs_position)))
    _check_distances(s21, s10, sj1, sj0)

    gamma_21 = a_num / (s21 * (jam / sj1 + params.noise_var_relay))
    gamma_10 = a_num / (s10 * (jam / sj0 + params.noise_var_bs))
    return gamma_21, gamma_10


def inverse_capacity(relay_pos, source_pos, params: ConservativeParams):
    """Reciprocal of the conservative end-to-end capacity [s/bit].

    Sum of per-hop inverse spectral efficiencies over the bandwidth; the
    quantity the trajectory generator minimizes over the relay position.
    """
    gamma_21, gamma_10 = conservative_sinr(relay_pos, source_pos, params)
    if np.any(gamma_21 <= 0.0) or np.any(gamma_10 <= 0.0):
        raise GeometryError("conservative SINR vanished; inverse capacity diverges")
    out = (1.0 / np.log2(1.0 + gamma_21) + 1.0 / np.log2(1.0 + gamma_10)) / params.bandwidth
    # 0-d indexing keeps the caller's dtype (the derivative oracle differences
    # in extended precision)
    return out[()] if np.ndim(out) == 0 else out


def _phi_derivs(gamma: float):
    """1/log2(1+x) and its first two derivatives."""
    lg = math.log1p(gamma)
    val = LN2 / lg
    d1 = -LN2 / ((1.0 + gamma) * lg * lg)
    d2 = LN2 * (lg + 2.0) / ((1.0 + gamma) ** 2 * lg**3)
    return val, d1, d2


def surrogate_at(expansion, params: ConservativeParams) -> SurrogateModel:
    """Exact value, gradient and Hessian of the inverse capacity.

    The inverse capacity depends on the stacked positions only through the
    squared distances relay-source, relay-jammer and relay-BS, so the
    derivatives follow from the chain rule through those three scalars.
    """
    kappa = np.asarray(expansion, dtype=float)
    if kappa.shape != (6,):
        raise ValueError("expansion point must stack relay and source positions")
    p1, p2 = kappa[:3], kappa[3:]

    u = p1 - p2
    w = p1 - params.jammer_position
    z = p1 - params.bs_position
    s21, sj1, s10 = float(u @ u), float(w @ w), float(z @ z)
    sj0 = float(np.sum(np.square(params.jammer_position - params.bs_position)))
    _check_distances(s21, sj1, s10, sj0)

    gbar = params.peak_gain
    a_num = params.alignment_floor * gbar * gbar * params.tx_power
    b = gbar * params.jammer_power_known
    s1sq = params.noise_var_relay
    c0 = b / sj0 + params.noise_var_bs
    B = params.bandwidth

    # hop 2->1: gamma depends on s21 and sj1
    denom = b + s1sq * sj1
    g21 = a_num * sj1 / (s21 * denom)
    dg_s21 = -g21 / s21
    dg_sj1 = a_num * b / (s21 * denom * denom)
    dg_s21_s21 = 2.0 * g21 / (s21 * s21)
    dg_s21_sj1 = -dg_sj1 / s21
    dg_sj1_sj1 = -2.0 * a_num * b * s1sq / (s21 * denom**3)

    # hop 1->0: gamma depends on s10 only
    g10 = a_num / (c0 * s10)
    dh_s10 = -g10 / s10
    dh_s10_s10 = 2.0 * g10 / (s10 * s10)

    if g21 <= 0.0 or g10 <= 0.0:
        raise GeometryError("conservative SINR vanished; inverse capacity diverges")

    p21, p21_1, p21_2 = _phi_derivs(g21)
    p10, p10_1, p10_2 = _phi_derivs(g10)
    value = (p21 + p10) / B

    # partials of f w.r.t. the three squared distances
    f1 = p21_1 * dg_s21 / B
    f2 = p21_1 * dg_sj1 / B
    f3 = p10_1 * dh_s10 / B
    f11 = (p21_2 * dg_s21 * dg_s21 + p21_1 * dg_s21_s21) / B
    f12 = (p21_2 * dg_s21 * dg_sj1 + p21_1 * dg_s21_sj1) / B
    f22 = (p21_2 * dg_sj1 * dg_sj1 + p21_1 * dg_sj1_sj1) / B
    f33 = (p10_2 * dh_s10 * dh_s10 + p10_1 * dh_s10_s10) / B

    eye = np.eye(3)
    uu = np.outer(u, u)
    ww = np.outer(w, w)
    zz = np.outer(z, z)
    uw = np.outer(u, w)

    grad_relay = 2.0 * (f1 * u + f2 * w + f3 * z)
    grad_source = -2.0 * f1 * u
    hess_rr = (
        2.0 * (f1 + f2 + f3) * eye
        + 4.0 * (f11 * uu + f22 * ww + f33 * zz)
        + 4.0 * f12 * (uw + uw.T)
    )
    hess_rs = -2.0 * f1 * eye - 4.0 * f11 * uu - 4.0 * f12 * uw.T
    hess_ss = 2.0 * f1 * eye + 4.0 * f11 * uu

    return SurrogateModel(
        expansion_point=kappa.copy(),
        value=value,
        grad_relay=grad_relay,
        grad_source=grad_source,
        hess_rr=hess_rr,
        hess_rs=hess_rs,
        hess_ss=hess_ss,
    )


def taylor_eval(model: SurrogateModel, query) -> float:
    """Second-order Taylor model of the inverse capacity at ``query``."""
    kappa = np.asarray(query, dtype=float)
    d1 = kappa[:3] - model.expansion_point[:3]
    d2 = kappa[3:] - model.expansion_point[3:]
    return float(
        model.value
        + model.grad_relay @ d1
        + model.grad_source @ d2
        + 0.5 * d1 @ model.hess_rr @ d1
        + d1 @ model.hess_rs @ d2
        + 0.5 * d2 @ model.hess_ss @ d2
    )


def relay_reference(model: SurrogateModel, source_pos, source_vel, source_acc) -> RelayReference:
    """Closed-form minimizer of the Taylor model over the relay position.

    The position reference is the Newton target of the quadratic model
    given the source displacement from the expansion point; velocity and
    acceleration references follow the source motion through the cross
    Hessian block.
    """
    d2 = np.asarray(source_pos, dtype=float) - model.expansion_point[3:]
    rhs = model.grad_relay + model.hess_rs @ d2
    gain = -np.linalg.solve(model.hess_rr, model.hess_rs)
    position = model.expansion_point[:3] - np.linalg.solve(model.hess_rr, rhs)
    velocity = gain @ np.asarray(source_vel, dtype=float)
    acceleration = gain @ np.asarray(source_acc, dtype=float)
    return RelayReference(position=position, velocity=velocity, acceleration=acceleration)


def limit_reference_step(
    ref: RelayReference, expansion_relay, max_step: float = TRUST_RADIUS
) -> RelayReference:
    """Scale the whole reference triple so the position step stays bounded.

    A Newton step on a nearly flat inverse capacity can jump far outside
    the quadratic model's validity; the closed loop feeds references
    through this limiter to stay inside the tracking envelope.
    """
    anchor = np.asarray(expansion_relay, dtype=float)
    step = ref.position - anchor
    norm = float(np.linalg.norm(step))
    if norm <= max_step:
        return ref
    scale = max_step / norm
    return RelayReference(
        position=anchor + scale * step,
        velocity=scale * ref.velocity,
        acceleration=scale * ref.acceleration,
    )


def regularize(model: SurrogateModel, params: ConservativeParams, max_attempts: int = 8) -> SurrogateModel:
    """Ensure the relay Hessian block is safely positive definite.

    A model already satisfying the eigenvalue floor is returned unchanged.
    Otherwise the expansion point is nudged along the negative gradient
    with a doubling step until the re-expanded Hessian clears the floor;
    if every attempt fails the block is shifted by a multiple of the
    identity and the result is flagged as a fallback.
    """
    current = model
    eigmin = float(np.linalg.eigvalsh(current.hess_rr)[0])
    if eigmin >= EPS_PD:
        return model

    grad = np.concatenate([model.grad_relay, model.grad_source])
    gnorm = float(np.linalg.norm(grad))
    attempts = 0
    if gnorm > 1e-14:
        direction = -grad / gnorm
        eps = 1e-3
        for attempts in range(1, max_attempts + 1):
            shifted = model.expansion_point + eps * direction
            try:
                candidate = surrogate_at(shifted, params)
            except GeometryError:
                break
            eigmin_c = float(np.linalg.eigvalsh(candidate.hess_rr)[0])
            if eigmin_c >= EPS_PD:
                return replace(candidate, reg_attempts=attempts)
            current = candidate
            eps *= 2.0

    eigmin = float(np.linalg.eigvalsh(current.hess_rr)[0])
    shift = EPS_PD - eigmin
    return replace(
        current,
        hess_rr=current.hess_rr + shift * np.eye(3),
        reg_attempts=attempts,
        reg_fallback=True,
    )
