"""Tests for the alignment-aware receding-horizon controller."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from relaykit import nmpc
from relaykit import vehicle as veh

BS = np.zeros(3)
SOURCE = np.array([-3.04, 5.79, 1.72])
RELAY0 = np.array([-6.95, 5.79, 1.72])


@pytest.fixture(scope="module")
def tilted():
    return veh.build_hexarotor("tilted", math.radians(20.0))


@pytest.fixture(scope="module")
def config():
    return nmpc.OcpConfig()


def hover_refs(config, position, source=SOURCE, bs=BS):
    ref = nmpc.StageReference(
        position=position,
        velocity=np.zeros(3),
        acceleration=np.zeros(3),
        bs_position=bs,
        source_position=source,
    )
    return [ref] * (config.horizon_steps + 1)


class TestTrackingError:
    def test_zero_on_reference_at_hover(self, tilted, config):
        state = veh.hover_state(tilted, RELAY0)
        ref = hover_refs(config, RELAY0)[0]
        e = nmpc.tracking_error(state, ref)
        assert np.abs(e).max() < 1e-14

    def test_pure_position_offset(self, tilted, config):
        state = veh.hover_state(tilted, RELAY0 + np.array([1.0, 0, 0]))
        ref = hover_refs(config, RELAY0)[0]
        e = nmpc.tracking_error(state, ref)
        assert_allclose(e, np.concatenate([[1.0, 0, 0], np.zeros(6)]), atol=1e-14)

    def test_paper_literal_direction_sign(self):
        rho_d = nmpc.desired_thrust_direction([0, 0, -1.0], "paper_literal", 9.81)
        assert_allclose(rho_d, [0, 0, 1.0])
        # hover fallback when the acceleration reference vanishes
        assert_allclose(nmpc.desired_thrust_direction(np.zeros(3), "paper_literal", 9.81), [0, 0, 1.0])

    def test_gravity_compensated_direction(self):
        rho_d = nmpc.desired_thrust_direction([1.0, 0, 0], "gravity_compensated", 9.81)
        expected = np.array([1.0, 0, 9.81])
        assert_allclose(rho_d, expected / np.linalg.norm(expected))


class TestStageCost:
    def test_zero_at_perfect_tracking(self, tilted, config):
        # equatorial links: source and BS in the antenna's max-gain plane
        pos = np.array([0.0, 0, 2.0])
        state = veh.hover_state(tilted, pos)
        ref = nmpc.StageReference(pos, np.zeros(3), np.zeros(3), pos + [3, 0, 0], pos + [-3, 0, 0])
        c = nmpc.stage_cost(state, np.zeros(6), np.zeros(6), ref, config)
        assert c < 1e-20

    def test_pure_input_variation(self, tilted):
        cfg = nmpc.OcpConfig(weight_input_var=10.0 * np.eye(6))
        pos = np.array([0.0, 0, 2.0])
        state = veh.hover_state(tilted, pos)
        ref = nmpc.StageReference(pos, np.zeros(3), np.zeros(3), pos + [3, 0, 0], pos + [-3, 0, 0])
        delta = np.array([1.0, -2.0, 0.5, 0, 0, 1.0])
        c = nmpc.stage_cost(state, delta, np.zeros(6), ref, cfg)
        assert c == pytest.approx(10.0 * float(delta @ delta))

    def test_boresight_misalignment_cost(self, tilted, config):
        # BS directly above: v10 = 1 with Qv = 10 I2 gives a cost of 10
        pos = np.array([0.0, 0, 2.0])
        state = veh.hover_state(tilted, pos)
        ref = nmpc.StageReference(pos, np.zeros(3), np.zeros(3), pos + [0, 0, 3.0], pos + [3, 0, 0])
        c = nmpc.stage_cost(state, np.zeros(6), np.zeros(6), ref, config)
        assert c == pytest.approx(10.0)

    def test_terminal_drops_input_variation(self, tilted, config):
        pos = np.array([0.0, 0, 2.0])
        state = veh.hover_state(tilted, pos)
        ref = nmpc.StageReference(pos, np.zeros(3), np.zeros(3), pos + [3, 0, 0], pos + [-3, 0, 0])
        delta = np.ones(6)
        assert nmpc.stage_cost(state, delta, np.zeros(6), ref, config, terminal=True) < 1e-20


class TestAlignmentResidual:
    def test_both_equatorial(self, tilted):
        state = veh.hover_state(tilted, np.zeros(3))
        r = nmpc.alignment_residual(state, [3.0, 0, 0], [-4.0, 0, 0], 0.2)
        assert r == pytest.approx(0.8)

    def test_source_on_boresight(self, tilted):
        state = veh.hover_state(tilted, np.zeros(3))
        r = nmpc.alignment_residual(state, [0, 0, 5.0], [-4.0, 0, 0], 0.2)
        assert r == pytest.approx(-0.2)

    def test_half_alignment_each(self, tilted):
        state = veh.hover_state(tilted, np.zeros(3))
        r = nmpc.alignment_residual(state, [1.0, 0, 1.0], [-1.0, 0, 1.0], 0.2)
        assert r == pytest.approx(0.25 - 0.2)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            p = rng.uniform(-3, 3, 3)
            eta = rng.uniform(-0.8, 0.8, 3)
            peer = rng.uniform(-3, 3, 3) + np.array([5.0, 0, 0])
            v, dv_dp, dv_deta = nmpc._cosine_sq_with_grads(p, eta, peer)
            h = 1e-7
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                fd_p = (
                    nmpc._cosine_sq_with_grads(p + e, eta, peer)[0]
                    - nmpc._cosine_sq_with_grads(p - e, eta, peer)[0]
                ) / (2 * h)
                fd_eta = (
                    nmpc._cosine_sq_with_grads(p, eta + e, peer)[0]
                    - nmpc._cosine_sq_with_grads(p, eta - e, peer)[0]
                ) / (2 * h)
                assert dv_dp[i] == pytest.approx(fd_p, abs=1e-6)
                assert dv_deta[i] == pytest.approx(fd_eta, abs=1e-6)


class TestSolveOcp:
    def test_hover_fixed_point(self, tilted, config):
        # perfect alignment: source and BS in the relay antenna's equatorial plane
        solver = nmpc.NmpcSolver(tilted, config)
        state = veh.hover_state(tilted, RELAY0)
        level_bs = np.array([0.0, 0.0, RELAY0[2]])
        sol = solver.solve(state, hover_refs(config, RELAY0, bs=level_bs), np.zeros(6))
        assert np.abs(sol.inputs[0].rotor_accels).max() < 1e-3
        assert sol.slacks.max() < 1e-8
        assert sol.qp_status == "optimal"

    def test_source_overhead_activates_slack(self, tilted, config):
        solver = nmpc.NmpcSolver(tilted, config)
        state = veh.hover_state(tilted, RELAY0)
        source = RELAY0 + np.array([0.0, 0, 4.0])
        sol = solver.solve(state, hover_refs(config, RELAY0, source=source), np.zeros(6))
        assert sol.slacks.max() > 0.0
        # softened constraint holds with equality where the slack is active
        for k, pi in enumerate(sol.slacks):
            if pi > 1e-8:
                r = nmpc.alignment_residual(
                    sol.states[k], source, BS, config.alignment_floor
                )
                assert r + pi == pytest.approx(0.0, abs=1e-9)

    def test_bounds_respected_under_aggressive_step(self, tilted, config):
        solver = nmpc.NmpcSolver(tilted, config)
        state = veh.hover_state(tilted, RELAY0)
        target = RELAY0 + np.array([2.0, -1.0, 1.0])
        refs = hover_refs(config, target)
        prev = np.zeros(6)
        sol = None
        for _ in range(40):
            sol = solver.solve(state, refs, prev, warm=None if sol is None else nmpc.shift_warm_start(sol, tilted, config.dt))
            u_cmd = sol.inputs[0].rotor_accels
            assert u_cmd.max() <= tilted.accel_max + 1e-9
            assert u_cmd.min() >= tilted.accel_min - 1e-9
            for s in sol.states:
                assert s.rotor_speeds.max() <= tilted.speed_max + 1e-7
                assert s.rotor_speeds.min() >= tilted.speed_min - 1e-7
            x = state.as_vector()
            for _ in range(15):
                x = veh._step_rk4_vec(x, u_cmd, tilted, 1e-3, clamp_speeds=True)
            state = veh.VehicleState.from_vector(x)
            prev = u_cmd
        # made actual progress toward the step target
        assert np.linalg.norm(state.position - target) < np.linalg.norm(RELAY0 - target)

    def test_shooting_consistency_of_solution(self, tilted, config):
        solver = nmpc.NmpcSolver(tilted, config)
        state = veh.hover_state(tilted, RELAY0)
        target = RELAY0 + np.array([0.5, 0.5, 0.0])
        sol = solver.solve(state, hover_refs(config, target), np.zeros(6))
        for k in range(config.horizon_steps):
            nxt = veh.step_rk4(sol.states[k], sol.inputs[k], tilted, config.dt)
            defect = np.abs(nxt.as_vector() - sol.states[k + 1].as_vector()).max()
            assert defect <= 1e-6

    def test_unconstrained_mode_matches_zero_weights(self, tilted):
        # removing the alignment machinery equals zeroing its weights
        base = nmpc.OcpConfig(
            weight_misalign=np.zeros((2, 2)),
            weight_misalign_terminal=np.zeros((2, 2)),
            enforce_alignment=False,
        )
        state = veh.hover_state(tilted, RELAY0)
        target = RELAY0 + np.array([1.0, 0, 0.5])
        sol = nmpc.NmpcSolver(tilted, base).solve(state, hover_refs(base, target), np.zeros(6))
        assert np.all(sol.slacks == 0.0)
        assert sol.qp_status == "optimal"
        # alignment-blind: cost counts only tracking and input variation
        probe = nmpc.stage_cost(sol.states[0], sol.inputs[0].rotor_accels, np.zeros(6), hover_refs(base, target)[0], base)
        assert probe >= 0.0

    def test_wrong_ref_count_rejected(self, tilted, config):
        solver = nmpc.NmpcSolver(tilted, config)
        state = veh.hover_state(tilted, RELAY0)
        with pytest.raises(ValueError):
            solver.solve(state, hover_refs(config, RELAY0)[:-1], np.zeros(6))


class TestShiftWarmStart:
    def test_hover_solution_is_shift_invariant(self, tilted, config):
        solver = nmpc.NmpcSolver(tilted, config)
        state = veh.hover_state(tilted, RELAY0)
        sol = solver.solve(state, hover_refs(config, RELAY0), np.zeros(6))
        shifted = nmpc.shift_warm_start(sol, tilted, config.dt)
        assert_allclose(
            shifted.states[0].as_vector(), sol.states[1].as_vector(), atol=1e-12
        )
        assert_allclose(
            shifted.inputs[-1].rotor_accels, sol.inputs[-1].rotor_accels, atol=1e-15
        )
        assert shifted.slacks[-1] == sol.slacks[-1]

    def test_shifted_defects_are_relabelled(self, tilted, config):
        solver = nmpc.NmpcSolver(tilted, config)
        state = veh.hover_state(tilted, RELAY0)
        sol = solver.solve(state, hover_refs(config, RELAY0 + np.array([0.3, 0, 0])), np.zeros(6))
        shifted = nmpc.shift_warm_start(sol, tilted, config.dt)
        for k in range(config.horizon_steps - 1):
            nxt = veh.step_rk4(shifted.states[k], shifted.inputs[k], tilted, config.dt)
            defect = np.abs(nxt.as_vector() - shifted.states[k + 1].as_vector()).max()
            assert defect <= 1e-6

    def test_warm_start_no_slower_than_cold_on_hover(self, tilted, config):
        solver = nmpc.NmpcSolver(tilted, config)
        state = veh.hover_state(tilted, RELAY0)
        cold = solver.solve(state, hover_refs(config, RELAY0), np.zeros(6))
        warm = solver.solve(
            state,
            hover_refs(config, RELAY0),
            np.zeros(6),
            warm=nmpc.shift_warm_start(cold, tilted, config.dt),
        )
        assert warm.sqp_iters_used <= cold.sqp_iters_used


class TestCostBehavior:
    def test_solution_cost_not_above_initial_guess(self, tilted, config):
        solver = nmpc.NmpcSolver(tilted, config)
        state = veh.hover_state(tilted, RELAY0)
        refs = hover_refs(config, RELAY0 + np.array([1.0, -0.5, 0.3]))
        x0 = state.as_vector()
        U0 = np.zeros((config.horizon_steps, 6))
        X0 = solver._rollout(x0, U0)
        initial_cost = solver._objective(X0, U0, np.zeros(6), refs)
        sol = solver.solve(state, refs, np.zeros(6))
        assert sol.cost <= initial_cost + 1e-12
