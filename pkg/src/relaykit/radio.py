"""Directional-antenna RF link budget under jamming.

Free-space line-of-sight links between dipole-equipped nodes. Antennas are
mounted along the body z-axis, so the gain seen by a link depends on the
elevation of the link direction measured from each node's boresight. The
jammer is an isotropic radiator; only the receiving antenna shapes the
jamming gain.

All gains are azimuth-independent and distances enter as 1/d, so link gains
carry units of 1/m and SINR is dimensionless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .vehicle import rotation_from_euler


class GeometryError(ValueError):
    """Coincident node positions or other degenerate link geometry."""


@dataclass(frozen=True)
class DipoleAntenna:
    """Doughnut-pattern antenna with zero gain along boresight.

    ``pattern`` selects the normalized elevation profile: the half-wave
    dipole expression or a plain sin^2 shape. Both peak in the equatorial
    plane and vanish along the axis. ``directivity`` is stored for
    reference and not folded into the gain.
    """

    peak_gain: float = 1.0
    directivity: float = 1.64
    pattern: str = "half_wave_dipole"

    def __post_init__(self):
        if self.peak_gain <= 0.0:
            raise ValueError("peak_gain must be positive")
        if self.pattern not in ("half_wave_dipole", "sin_squared"):
            raise ValueError(f"unknown pattern {self.pattern!r}")


@dataclass(frozen=True)
class RadioNode:
    """Antenna-carrying node with pose, transmit power and receiver noise."""

    position: np.ndarray
    euler: np.ndarray
    antenna: DipoleAntenna = field(default_factory=DipoleAntenna)
    tx_power: float = 1.0
    noise_std: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "euler", np.asarray(self.euler, dtype=float))
        if self.tx_power < 0.0:
            raise ValueError("tx_power must be nonnegative")
        if self.noise_std <= 0.0:
            raise ValueError("noise_std must be positive")


@dataclass(frozen=True)
class JammerNode:
    """Isotropic interferer with (possibly time-varying) radiated power."""

    position: np.ndarray
    power: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.power < 0.0:
            raise ValueError("jammer power must be nonnegative")


@dataclass(frozen=True)
class LinkBudget:
    """All per-link quantities for one transmitter-receiver pair."""

    gain: float
    jam_gain: float
    sinr: float
    spectral_efficiency: float
    aod: float
    aoa: float
    jam_aoa: float


def dipole_gain(antenna: DipoleAntenna, elevation) -> np.ndarray | float:
    """Antenna gain at the given elevation(s) from boresight, in [0, pi]."""
    theta = np.asarray(elevation, dtype=float)
    if np.any(theta < -1e-12) or np.any(theta > math.pi + 1e-12):
        raise ValueError("elevation must lie in [0, pi]")
    s = np.sin(theta)
    if antenna.pattern == "sin_squared":
        g = antenna.peak_gain * s * s
    else:
        # half-wave dipole; the ratio tends to 0 at the axis, guard the 0/0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.cos(0.5 * math.pi * np.cos(theta)) / s
        g = antenna.peak_gain * np.where(s < 1e-9, 0.0, ratio) ** 2
    return g if g.ndim else float(g)


def elevation_angle(observer: RadioNode, target_position) -> float:
    """Elevation of the direction to ``target_position`` from the observer's
    boresight, in [0, pi]. Serves as departure angle (observer transmits),
    arrival angle (observer receives) and jamming arrival angle alike."""
    delta = np.asarray(target_position, dtype=float) - observer.position
    dist = np.linalg.norm(delta)
    if dist < 1e-12:
        raise GeometryError("observer and target positions coincide")
    a = rotation_from_euler(observer.euler).T @ (delta / dist)
    return 0.5 * math.pi - math.atan2(a[2], math.hypot(a[0], a[1]))


def link_gain(tx: RadioNode, rx: RadioNode) -> float:
    """Legitimate link gain: geometric mean of end gains over distance."""
    dist = np.linalg.norm(rx.position - tx.position)
    if dist < 1e-12:
        raise GeometryError("transmitter and receiver positions coincide")
    g_dep = dipole_gain(tx.antenna, elevation_angle(tx, rx.position))
    g_arr = dipole_gain(rx.antenna, elevation_angle(rx, tx.position))
    return math.sqrt(g_dep * g_arr) / dist


def jammer_gain(jammer: JammerNode, rx: RadioNode) -> float:
    """Jamming link gain; only the receiver antenna is directional."""
    dist = np.linalg.norm(jammer.position - rx.position)
    if dist < 1e-12:
        raise GeometryError("jammer and receiver positions coincide")
    g_arr = dipole_gain(rx.antenna, elevation_angle(rx, jammer.position))
    return math.sqrt(g_arr) / dist


def sinr(tx: RadioNode, rx: RadioNode, jammer: JammerNode) -> float:
    """Received signal-to-interference-plus-noise ratio."""
    h = link_gain(tx, rx)
    f = jammer_gain(jammer, rx)
    return h * h * tx.tx_power / (f * f * jammer.power + rx.noise_std**2)


def link_capacity(gamma: float, bandwidth: float) -> float:
    """Shannon capacity of a single link."""
    if gamma < 0.0:
        raise ValueError("SINR must be nonnegative")
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    return bandwidth * math.log2(1.0 + gamma)


def end_to_end_capacity(eff_21: float, eff_10: float, total_bandwidth: float) -> float:
    """Two-hop relay rate under capacity-equalizing bandwidth allocation.

    Harmonic combination of the per-link spectral efficiencies; zero when
    either hop is broken.
    """
    if eff_21 < 0.0 or eff_10 < 0.0:
        raise ValueError("spectral efficiencies must be nonnegative")
    total = eff_21 + eff_10
    if eff_21 == 0.0 or eff_10 == 0.0:
        return 0.0
    return total_bandwidth * eff_21 * eff_10 / total


def bandwidth_split(eff_21: float, eff_10: float, total_bandwidth: float) -> tuple[float, float]:
    """Bandwidth shares that equalize the two per-link capacities."""
    total = eff_21 + eff_10
    if total <= 0.0:
        raise ValueError("at least one spectral efficiency must be positive")
    b21 = total_bandwidth * eff_10 / total
    b10 = total_bandwidth * eff_21 / total
    return b21, b10


def directional_cosine_sq(node: RadioNode, peer_position) -> float:
    """Squared cosine between the link direction and the node's boresight.

    0 means the link lies in the maximum-gain equatorial plane; 1 means the
    link points along the antenna null.
    """
    delta = np.asarray(peer_position, dtype=float) - node.position
    dist = np.linalg.norm(delta)
    if dist < 1e-12:
        raise GeometryError("node and peer positions coincide")
    boresight = rotation_from_euler(node.euler)[:, 2]
    c = float(delta @ boresight) / dist
    return c * c


def link_budget(tx: RadioNode, rx: RadioNode, jammer: JammerNode) -> LinkBudget:
    """Assemble every link metric for one hop in a single pass."""
    aod = elevation_angle(tx, rx.position)
    aoa = elevation_angle(rx, tx.position)
    jam_aoa = elevation_angle(rx, jammer.position)
    dist = np.linalg.norm(rx.position - tx.position)
    h = math.sqrt(dipole_gain(tx.antenna, aod) * dipole_gain(rx.antenna, aoa)) / dist
    f = math.sqrt(dipole_gain(rx.antenna, jam_aoa)) / np.linalg.norm(jammer.position - rx.position)
    gamma = h * h * tx.tx_power / (f * f * jammer.power + rx.noise_std**2)
    return LinkBudget(
        gain=h,
        jam_gain=f,
        sinr=gamma,
        spectral_efficiency=math.log2(1.0 + gamma),
        aod=aod,
        aoa=aoa,
        jam_aoa=jam_aoa,
    )
