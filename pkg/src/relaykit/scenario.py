"""Declarative scenario definitions.

A scenario bundles node placements, platform choice, alignment mode,
jammer schedule and knowledge gating, the source inspection trajectory,
and the radio/controller parameter blocks. Scenarios load from TOML
documents (key = value with nested sections); omitted fields fall back to
the built-in defaults of the power-line-inspection relay mission, and
unknown keys are rejected.

The planner's view of the jammer is gated: before the localization delay
has elapsed the trajectory generator plans as if the jammer were silent,
while the simulated channel always uses the true power.
"""

from __future__ import annotations

import io
import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario definition."""


@dataclass(frozen=True)
class JammerConfig:
    schedule: str = "always_on"  # or "on_off"
    power: float = 1.0
    period_on: float = 5.0
    period_off: float = 5.0

    def __post_init__(self):
        if self.schedule not in ("always_on", "on_off"):
            raise ScenarioError(f"jammer.schedule: unknown value {self.schedule!r}")
        if self.power < 0.0:
            raise ScenarioError("jammer.power: must be nonnegative")
        if self.schedule == "on_off" and (self.period_on <= 0.0 or self.period_off <= 0.0):
            raise ScenarioError("jammer.period_on/period_off: must be positive")


@dataclass(frozen=True)
class RadioConfig:
    pattern: str = "half_wave_dipole"
    peak_gain: float = 1.0
    directivity: float = 1.64
    tx_power: float = 1.0
    noise_std: float = 1.0
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.pattern not in ("half_wave_dipole", "sin_squared"):
            raise ScenarioError(f"radio.pattern: unknown value {self.pattern!r}")
        for name in ("peak_gain", "noise_std", "bandwidth"):
            if getattr(self, name) <= 0.0:
                raise ScenarioError(f"radio.{name}: must be positive")
        if self.tx_power < 0.0:
            raise ScenarioError("radio.tx_power: must be nonnegative")


@dataclass(frozen=True)
class OcpBlock:
    horizon_steps: int = 30
    dt: float = 0.015
    track_weight: float = 0.1
    input_var_weight: float = 10.0 / 400.0**2  # Table II's 10 on normalized inputs
    misalign_weight: float = 10.0
    alignment_floor: float = 0.2
    slack_weight: float = 1.0e4
    sqp_iters: int = 5
    direction_mode: str = "error_feedback"
    ref_slew_speed: float = 2.0  # m/s cap on reference-point motion

    def __post_init__(self):
        if self.horizon_steps < 2:
            raise ScenarioError("ocp.horizon_steps: must be at least 2")
        if self.dt <= 0.0:
            raise ScenarioError("ocp.dt: must be positive")
        if self.ref_slew_speed <= 0.0:
            raise ScenarioError("ocp.ref_slew_speed: must be positive")
        if not 0.0 < self.alignment_floor <= 1.0:
            raise ScenarioError("ocp.alignment_floor: must lie in (0, 1]")
        if self.slack_weight <= 0.0:
            raise ScenarioError("ocp.slack_weight: must be positive")
        if self.direction_mode not in ("gravity_compensated", "paper_literal", "error_feedback"):
            raise ScenarioError(f"ocp.direction_mode: unknown value {self.direction_mode!r}")


@dataclass(frozen=True)
class VehicleConfig:
    mass: float = 2.57
    arm_length: float = 0.4
    tilt_angle_deg: float = 20.0
    thrust_coeff: float = 1.18e-3
    drag_coeff: float = 2.5e-5
    speed_min: float = 16.0
    speed_max: float = 100.0
    accel_min: float = -300.0
    accel_max: float = 400.0
    inertia_diag: tuple = (0.11, 0.11, 0.19)

    def __post_init__(self):
        object.__setattr__(self, "inertia_diag", tuple(float(v) for v in self.inertia_diag))
        if self.mass <= 0.0:
            raise ScenarioError("vehicle.mass: must be positive")
        if not -60.0 < self.tilt_angle_deg < 60.0:
            raise ScenarioError("vehicle.tilt_angle_deg: must lie in (-60, 60)")


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one closed-loop episode."""

    bs_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    jammer_position: np.ndarray = field(default_factory=lambda: np.array([-6.95, -5.79, 1.72]))
    relay_start: np.ndarray = field(default_factory=lambda: np.array([-6.95, 5.79, 1.72]))
    source_start: np.ndarray = field(default_factory=lambda: np.array([-3.04, 5.79, 1.72]))
    platform: str = "tilted"
    alignment_mode: str = "constrained"
    duration: float = 47.0
    localization_delay: float = 2.0
    workspace: np.ndarray = field(default_factory=lambda: np.array([14.0, 12.0, 19.0]))
    rng_seed: int = 0
    source_waypoints: tuple = ()  # optional override: ((time, x, y, z), ...)
    jammer: JammerConfig = field(default_factory=JammerConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    ocp: OcpBlock = field(default_factory=OcpBlock)
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)

    def __post_init__(self):
        for name in ("bs_position", "jammer_position", "relay_start", "source_start", "workspace"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (3,):
                raise ScenarioError(f"{name}: expected 3 components")
            object.__setattr__(self, name, arr)
        if self.platform not in ("coplanar", "tilted"):
            raise ScenarioError(f"platform: unknown value {self.platform!r}")
        if self.alignment_mode not in ("constrained", "unconstrained"):
            raise ScenarioError(f"alignment_mode: unknown value {self.alignment_mode!r}")
        if self.duration <= 0.0:
            raise ScenarioError("duration: must be positive")
        if self.localization_delay < 0.0:
            raise ScenarioError("localization_delay: must be nonnegative")
        if np.any(self.workspace <= 0.0):
            raise ScenarioError("workspace: spans must be positive")
        for name in ("relay_start", "source_start", "bs_position", "jammer_position"):
            if not self.inside_workspace(getattr(self, name)):
                raise ScenarioError(f"{name}: outside the workspace")

    def inside_workspace(self, position) -> bool:
        p = np.asarray(position, dtype=float)
        half_x, half_y, height = self.workspace / np.array([2.0, 2.0, 1.0])
        return bool(
            abs(p[0]) <= half_x + 1e-9 and abs(p[1]) <= half_y + 1e-9 and -1e-9 <= p[2] <= height + 1e-9
        )


# -- source trajectory ----------------------------------------------------


def _min_jerk_scalar(tau: float):
    """Normalized rest-to-rest minimum-jerk profile and derivatives."""
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    ds = 30 * tau**2 - 60 * tau**3 + 30 * tau**4
    dds = 60 * tau - 180 * tau**2 + 120 * tau**3
    return s, ds, dds


@dataclass(frozen=True)
class SourceTrajectory:
    """Piecewise minimum-jerk path through timed waypoints.

    Each segment is a rest-to-rest quintic, so velocity and acceleration
    vanish at every waypoint and the path is C^2 across joins. Evaluation
    clamps outside the time span (hold first/last waypoint).
    """

    waypoints: tuple  # ((time, position), ...) with strictly increasing times

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ScenarioError("source trajectory needs at least two waypoints")
        times = [t for t, _ in self.waypoints]
        if any(t1 - t0 <= 0.0 for t0, t1 in zip(times, times[1:])):
            raise ScenarioError("waypoint times must be strictly increasing")
        object.__setattr__(
            self,
            "waypoints",
            tuple((float(t), np.asarray(p, dtype=float)) for t, p in self.waypoints),
        )

    def evaluate(self, t: float):
        """Position, velocity and acceleration at time ``t``."""
        times = [wt for wt, _ in self.waypoints]
        if t <= times[0]:
            return self.waypoints[0][1].copy(), np.zeros(3), np.zeros(3)
        if t >= times[-1]:
            return self.waypoints[-1][1].copy(), np.zeros(3), np.zeros(3)
        idx = 0
        while times[idx + 1] < t:
            idx += 1
        t0, p0 = self.waypoints[idx]
        t1, p1 = self.waypoints[idx + 1]
        span = t1 - t0
        s, ds, dds = _min_jerk_scalar((t - t0) / span)
        delta = p1 - p0
        return p0 + s * delta, (ds / span) * delta, (dds / span**2) * delta


def inspection_trajectory(config: ScenarioConfig) -> SourceTrajectory:
    """Source path of the inspection mission.

    Default shape: climb from the start to a mid-height station, then on
    to the insulator region near the top of the inspected structure, with
    modest lateral motion. ``config.source_waypoints`` overrides the
    waypoint list entirely.
    """
    if config.source_waypoints:
        wps = tuple((row[0], np.asarray(row[1:], dtype=float)) for row in config.source_waypoints)
    else:
        start = config.source_start
        mid = np.array([start[0] + 1.0, start[1] - 1.0, 9.0])
        top = np.array([start[0] + 2.0, start[1] - 2.0, 18.0])
        wps = (
            (0.0, start),
            (0.45 * config.duration, mid),
            (config.duration, top),
        )
    for _, p in wps:
        if not config.inside_workspace(p):
            raise ScenarioError(f"source waypoint {p.tolist()} outside the workspace")
    return SourceTrajectory(waypoints=wps)


# -- jammer schedule -------------------------------------------------------


def jammer_power_at(config: ScenarioConfig, t: float) -> float:
    """True radiated jammer power at time ``t``."""
    if t < 0.0:
        raise ScenarioError("time must be nonnegative")
    jam = config.jammer
    if jam.schedule == "always_on":
        return jam.power
    phase = math.fmod(t, jam.period_on + jam.period_off)
    return jam.power if phase < jam.period_on else 0.0


def known_jammer_power(config: ScenarioConfig, t: float) -> float:
    """Jammer power as available to the planner (zero before localization)."""
    if t < config.localization_delay:
        return 0.0
    return jammer_power_at(config, t)


# -- TOML loading / serialization -------------------------------------------

_TOP_KEYS = {
    "bs_position",
    "jammer_position",
    "relay_start",
    "source_start",
    "platform",
    "alignment_mode",
    "duration",
    "localization_delay",
    "workspace",
    "rng_seed",
    "source_waypoints",
}
_SECTIONS = {"jammer": JammerConfig, "radio": RadioConfig, "ocp": OcpBlock, "vehicle": VehicleConfig}


def load_scenario(document: str) -> ScenarioConfig:
    """Parse a TOML scenario document into a validated config.

    Unknown keys raise a :class:`ScenarioError` naming the key; TOML
    syntax errors surface with the parser's line/column message.
    """
    try:
        raw = tomllib.loads(document)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"scenario parse error: {exc}") from exc

    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ScenarioError(f"{key}: expected a section")
            cls = _SECTIONS[key]
            allowed = set(cls.__dataclass_fields__)
            unknown = set(value) - allowed
            if unknown:
                raise ScenarioError(f"{key}: unknown key {sorted(unknown)[0]!r}")
            if key == "vehicle" and "inertia_diag" in value:
                value = dict(value, inertia_diag=tuple(value["inertia_diag"]))
            kwargs[key] = cls(**value)
        elif key in _TOP_KEYS:
            if key == "source_waypoints":
                value = tuple(tuple(row) for row in value)
            kwargs[key] = value
        else:
            raise ScenarioError(f"unknown key {key!r}")
    return ScenarioConfig(**kwargs)


def load_scenario_file(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(float(v)) if isinstance(v, float) else str(v)
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, np.ndarray):
        return "[" + ", ".join(repr(float(x)) for x in v) + "]"
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)!r}")


def serialize_scenario(config: ScenarioConfig) -> str:
    """Render a config as a TOML document that round-trips exactly."""
    out = io.StringIO()
    for key in sorted(_TOP_KEYS):
        value = getattr(config, key)
        if key == "source_waypoints" and not value:
            continue
        out.write(f"{key} = {_toml_value(value)}\n")
    for section, cls in _SECTIONS.items():
        out.write(f"\n[{section}]\n")
        block = getattr(config, section)
        for name in cls.__dataclass_fields__:
            out.write(f"{name} = {_toml_value(getattr(block, name))}\n")
    return out.getvalue()


# -- presets ----------------------------------------------------------------

PRESET_NAMES = (
    "coplanar-constrained",
    "coplanar-unconstrained",
    "tilted-constrained",
    "tilted-unconstrained",
)


def preset_config(name: str, schedule: str = "always_on", duration: float | None = None) -> ScenarioConfig:
    """Named scenario presets: platform x alignment mode, plus schedule.

    ``name`` may carry a schedule suffix after a colon, e.g.
    ``tilted-constrained:on_off``.
    """
    if ":" in name:
        name, schedule = name.split(":", 1)
    if name not in PRESET_NAMES:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    platform, mode = name.split("-")
    cfg = ScenarioConfig(
        platform=platform,
        alignment_mode=mode,
        jammer=JammerConfig(schedule=schedule),
    )
    if duration is not None:
        cfg = replace(cfg, duration=float(duration))
    return cfg
