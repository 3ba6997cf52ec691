"""Closed-loop episode runner, metrics and exporters.

One episode integrates the plant at 1 kHz while the reference generator
and the NMPC run once per control period (default 15 ms). Every control
tick appends one row to the log: vehicle state, active references, true
channel metrics (full angular model), solver diagnostics and timing.

Logs are deterministic for a given scenario: the stack contains no random
elements, so identical configurations produce bit-identical CSV exports.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nmpc, radio, scenario as sc, trajgen, vehicle as veh

PLANT_DT = 1e-3

COLUMNS = (
    ["t"]
    + ["px", "py", "pz", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz"]
    + [f"u{i}" for i in range(1, 7)]
    + [f"du{i}" for i in range(1, 7)]
    + ["ref_px", "ref_py", "ref_pz", "ref_vx", "ref_vy", "ref_vz", "ref_ax", "ref_ay", "ref_az"]
    + ["src_px", "src_py", "src_pz"]
    + ["v12", "v10", "slack_max"]
    + ["sinr_21", "sinr_10", "eff_21", "eff_10", "capacity"]
    + ["jam_power_true", "jam_power_known"]
    + ["sqp_iters", "kkt_residual", "solve_time"]
)


@dataclass
class SimLog:
    """Column store of one episode plus the bounds needed by audits."""

    data: dict
    speed_min: float = 16.0
    speed_max: float = 100.0
    accel_min: float = -300.0
    accel_max: float = 400.0
    bandwidth: float = 1.0
    n_rotors: int = 6

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]

    @property
    def n_rows(self) -> int:
        return len(self.data["t"])

    def write_csv(self, path) -> None:
        """Write all rows with shortest round-trip decimal formatting."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(COLUMNS)
            cols = [self.data[c] for c in COLUMNS]
            for k in range(self.n_rows):
                writer.writerow([repr(float(col[k])) for col in cols])

    @classmethod
    def read_csv(cls, path, **meta) -> "SimLog":
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != list(COLUMNS):
                raise ValueError(f"unexpected log header in {path}")
            rows = [[float(v) for v in row] for row in reader]
        arr = np.asarray(rows, dtype=float) if rows else np.zeros((0, len(COLUMNS)))
        data = {name: arr[:, i].copy() for i, name in enumerate(COLUMNS)}
        return cls(data=data, **meta)


@dataclass(frozen=True)
class Metrics:
    """Episode summary statistics."""

    min_capacity: float
    mean_capacity: float
    mean_eff_21: float
    mean_eff_10: float
    outage_count: int
    max_bound_violation: float
    max_position_deviation_vs_baseline: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "min_capacity": self.min_capacity,
            "mean_capacity": self.mean_capacity,
            "mean_eff_21": self.mean_eff_21,
            "mean_eff_10": self.mean_eff_10,
            "outage_count": self.outage_count,
            "max_bound_violation": self.max_bound_violation,
            "max_position_deviation_vs_baseline": self.max_position_deviation_vs_baseline,
        }


class EpisodeError(RuntimeError):
    """Episode aborted; carries the partial log for post-mortem export."""

    def __init__(self, message: str, partial_log: SimLog):
        super().__init__(message)
        self.partial_log = partial_log


class AlignmentMismatchError(ValueError):
    """Baseline log rows do not share the episode's time grid."""


def build_vehicle(config: sc.ScenarioConfig) -> veh.MravParams:
    vc = config.vehicle
    return veh.build_hexarotor(
        config.platform,
        math.radians(vc.tilt_angle_deg) if config.platform == "tilted" else 0.0,
        mass=vc.mass,
        inertia=np.diag(vc.inertia_diag),
        arm_length=vc.arm_length,
        thrust_coeff=vc.thrust_coeff,
        drag_coeff=vc.drag_coeff,
        speed_min=vc.speed_min,
        speed_max=vc.speed_max,
        accel_min=vc.accel_min,
        accel_max=vc.accel_max,
    )


def build_ocp_config(config: sc.ScenarioConfig) -> nmpc.OcpConfig:
    blk = config.ocp
    constrained = config.alignment_mode == "constrained"
    mis = blk.misalign_weight if constrained else 0.0
    return nmpc.OcpConfig(
        horizon_steps=blk.horizon_steps,
        dt=blk.dt,
        weight_track=blk.track_weight * np.eye(9),
        weight_track_terminal=blk.track_weight * np.eye(9),
        weight_input_var=blk.input_var_weight * np.eye(6),
        weight_misalign=mis * np.eye(2),
        weight_misalign_terminal=mis * np.eye(2),
        alignment_floor=blk.alignment_floor,
        slack_weight=blk.slack_weight,
        enforce_alignment=constrained,
        direction_mode=blk.direction_mode,
        sqp_iters=blk.sqp_iters,
    )


def _conservative_params(config: sc.ScenarioConfig, known_power: float) -> trajgen.ConservativeParams:
    r = config.radio
    return trajgen.ConservativeParams(
        bs_position=config.bs_position,
        jammer_position=config.jammer_position,
        peak_gain=r.peak_gain,
        alignment_floor=config.ocp.alignment_floor,
        tx_power=r.tx_power,
        jammer_power_known=known_power,
        noise_var_relay=r.noise_std**2,
        noise_var_bs=r.noise_std**2,
        bandwidth=r.bandwidth,
    )


def run_episode(config: sc.ScenarioConfig) -> SimLog:
    """Simulate one scenario end to end and return the tick-rate log.

    Per control tick: refresh the conservative surrogate at the measured
    relay/source positions, regularize it, emit step-limited references
    over the horizon, solve the OCP warm-started from the shifted previous
    solution, apply the first input zero-order-hold, and integrate the
    plant at 1 kHz. Aborts with :class:`EpisodeError` (partial log
    attached) if the solver fails.
    """
    params = build_vehicle(config)
    ocp_cfg = build_ocp_config(config)
    solver = nmpc.NmpcSolver(params, ocp_cfg)
    traj = sc.inspection_trajectory(config)
    antenna = radio.DipoleAntenna(
        peak_gain=config.radio.peak_gain,
        directivity=config.radio.directivity,
        pattern=config.radio.pattern,
    )
    dt_ctrl = ocp_cfg.dt
    n_sub = max(1, int(round(dt_ctrl / PLANT_DT)))
    dt_plant = dt_ctrl / n_sub
    n_rows = int(math.floor(config.duration / dt_ctrl + 1e-9)) + 1
    N = ocp_cfg.horizon_steps

    state = veh.hover_state(params, config.relay_start)
    prev_input = np.zeros(params.n_rotors)
    sol = None
    rows = []
    # persistent slew-limited reference: walks toward the surrogate target by
    # at most the trust radius per tick, keeping position feedback absolute
    ref_point = config.relay_start.copy()

    def snapshot_log():
        arr = np.asarray(rows, dtype=float) if rows else np.zeros((0, len(COLUMNS)))
        return SimLog(
            data={name: arr[:, i].copy() for i, name in enumerate(COLUMNS)},
            speed_min=params.speed_min,
            speed_max=params.speed_max,
            accel_min=params.accel_min,
            accel_max=params.accel_max,
            bandwidth=config.radio.bandwidth,
            n_rotors=params.n_rotors,
        )

    for k in range(n_rows):
        t = k * dt_ctrl
        src_states = [traj.evaluate(t + i * dt_ctrl) for i in range(N + 1)]
        cons = _conservative_params(config, sc.known_jammer_power(config, t))
        kappa = np.concatenate([state.position, src_states[0][0]])
        model = trajgen.regularize(trajgen.surrogate_at(kappa, cons), cons)

        raw_refs = [trajgen.relay_reference(model, p, v, a) for p, v, a in src_states]
        step = raw_refs[0].position - ref_point
        dist = float(np.linalg.norm(step))
        max_move = config.ocp.ref_slew_speed * dt_ctrl
        lag = float(np.linalg.norm(ref_point - state.position))
        if lag > trajgen.TRUST_RADIUS:
            # vehicle has fallen behind the walking reference; hold it
            slew_vel = np.zeros(3)
        elif dist > max_move:
            slew_vel = (max_move / dist) * step / dt_ctrl
            ref_point = ref_point + slew_vel * dt_ctrl
        else:
            slew_vel = np.zeros(3)
            ref_point = raw_refs[0].position.copy()
        offset = ref_point - raw_refs[0].position  # same shift across the horizon
        refs = []
        for (p2, _, _), r in zip(src_states, raw_refs):
            refs.append(
                nmpc.StageReference(
                    position=r.position + offset,
                    velocity=r.velocity + slew_vel,
                    acceleration=r.acceleration,
                    bs_position=config.bs_position,
                    source_position=p2,
                )
            )

        warm = nmpc.shift_warm_start(sol, params, dt_ctrl) if sol is not None else None
        t_solve = time.perf_counter()
        try:
            sol = solver.solve(state, refs, prev_input, warm=warm)
        except nmpc.SolverError as exc:
            raise EpisodeError(f"solver failed at t={t:.3f}s: {exc}", snapshot_log()) from exc
        wall = time.perf_counter() - t_solve

        applied = sol.inputs[0].rotor_accels
        p_src = src_states[0][0]
        relay_node = radio.RadioNode(state.position, state.euler, antenna, tx_power=config.radio.tx_power, noise_std=config.radio.noise_std)
        src_node = radio.RadioNode(p_src, np.zeros(3), antenna, tx_power=config.radio.tx_power, noise_std=config.radio.noise_std)
        bs_node = radio.RadioNode(config.bs_position, np.zeros(3), antenna, tx_power=config.radio.tx_power, noise_std=config.radio.noise_std)
        jam = radio.JammerNode(config.jammer_position, sc.jammer_power_at(config, t))
        lb21 = radio.link_budget(src_node, relay_node, jam)
        lb10 = radio.link_budget(relay_node, bs_node, jam)
        capacity = radio.end_to_end_capacity(
            lb21.spectral_efficiency, lb10.spectral_efficiency, config.radio.bandwidth
        )
        v12 = radio.directional_cosine_sq(relay_node, p_src)
        v10 = radio.directional_cosine_sq(relay_node, config.bs_position)

        rows.append(
            [t]
            + list(state.position)
            + list(state.euler)
            + list(state.velocity)
            + list(state.body_rates)
            + list(state.rotor_speeds)
            + list(applied)
            + list(refs[0].position)
            + list(refs[0].velocity)
            + list(refs[0].acceleration)
            + list(p_src)
            + [v12, v10, float(np.max(sol.slacks))]
            + [lb21.sinr, lb10.sinr, lb21.spectral_efficiency, lb10.spectral_efficiency, capacity]
            + [jam.power, sc.known_jammer_power(config, t)]
            + [float(sol.sqp_iters_used), sol.kkt_residual, wall]
        )

        if k < n_rows - 1:
            x = state.as_vector()
            for _ in range(n_sub):
                x = veh._step_rk4_vec(x, applied, params, dt_plant, clamp_speeds=True)
            state = veh.VehicleState.from_vector(x)
            prev_input = applied

    return snapshot_log()


def compute_metrics(log: SimLog, baseline: SimLog | None = None, outage_threshold: float = 1e-3) -> Metrics:
    """Summary statistics; outages are maximal runs below the threshold."""
    if log.n_rows == 0:
        raise ValueError("empty log")
    cap = log["capacity"]
    below = cap < outage_threshold
    outages = int(np.sum(below[1:] & ~below[:-1]) + (1 if below[0] else 0))

    u = np.stack([log[f"u{i+1}"] for i in range(log.n_rotors)], axis=1)
    du = np.stack([log[f"du{i+1}"] for i in range(log.n_rotors)], axis=1)
    viol = max(
        float(np.max(log.speed_min - u, initial=0.0)),
        float(np.max(u - log.speed_max, initial=0.0)),
        float(np.max(log.accel_min - du, initial=0.0)),
        float(np.max(du - log.accel_max, initial=0.0)),
        0.0,
    )

    deviation = float("nan")
    if baseline is not None:
        n = min(log.n_rows, baseline.n_rows)
        if n == 0 or np.abs(log["t"][:n] - baseline["t"][:n]).max() > 1e-9:
            raise AlignmentMismatchError("baseline log is not on the same time grid")
        dp = np.stack([log[c][:n] - baseline[c][:n] for c in ("px", "py", "pz")], axis=1)
        deviation = float(np.linalg.norm(dp, axis=1).max())

    return Metrics(
        min_capacity=float(cap.min()),
        mean_capacity=float(cap.mean()),
        mean_eff_21=float(log["eff_21"].mean()),
        mean_eff_10=float(log["eff_10"].mean()),
        outage_count=outages,
        max_bound_violation=viol,
        max_position_deviation_vs_baseline=deviation,
    )


PLOTDATA_SERIES = {
    "rotor_speeds": ["t"] + [f"u{i}" for i in range(1, 7)],
    "rotor_accels": ["t"] + [f"du{i}" for i in range(1, 7)],
    "slack": ["t", "slack_max"],
    "misalignment": ["t", "v12", "v10"],
    "spectral_efficiency_21": ["t", "eff_21"],
    "spectral_efficiency_10": ["t", "eff_10"],
    "capacity_end_to_end": ["t", "capacity"],
}


def export(log: SimLog, metrics: Metrics, out_dir) -> list:
    """Write log.csv, metrics.csv and per-figure plot series.

    The plot series are raw slices of logged columns (never recomputed),
    plus derived tracking-error and alignment-product series assembled
    from logged values only.
    """
    out = Path(out_dir)
    plot = out / "plotdata"
    plot.mkdir(parents=True, exist_ok=True)
    written = []

    log_path = out / "log.csv"
    log.write_csv(log_path)
    written.append(log_path)

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for key, value in metrics.as_dict().items():
            writer.writerow([key, repr(float(value)) if not isinstance(value, int) else str(value)])
    written.append(metrics_path)

    def write_series(name, header, columns):
        path = plot / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(log.n_rows):
                writer.writerow([repr(float(col[k])) for col in columns])
        written.append(path)

    for name, cols in PLOTDATA_SERIES.items():
        write_series(name, cols, [log[c] for c in cols])

    # derived panels of the constraint/tracking figures
    write_series(
        "alignment_product",
        ["t", "product"],
        [log["t"], (1.0 - log["v12"]) * (1.0 - log["v10"])],
    )
    err_cols = []
    for axis, ref in (("x", "ref_px"), ("y", "ref_py"), ("z", "ref_pz")):
        err_cols.append(log[f"p{axis}"] - log[ref])
    for axis, ref in (("x", "ref_vx"), ("y", "ref_vy"), ("z", "ref_vz")):
        err_cols.append(log[f"v{axis}"] - log[ref])
    write_series(
        "tracking_errors",
        ["t", "e_px", "e_py", "e_pz", "e_vx", "e_vy", "e_vz"],
        [log["t"]] + err_cols,
    )
    return written
