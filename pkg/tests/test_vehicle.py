"""Tests for the multirotor rigid-body model."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from relaykit import vehicle as veh

TILT = math.radians(20.0)


@pytest.fixture
def coplanar():
    return veh.build_hexarotor("coplanar")


@pytest.fixture
def tilted():
    return veh.build_hexarotor("tilted", TILT)


class TestBuildHexarotor:
    def test_coplanar_thrust_only_along_body_z(self, coplanar):
        assert np.all(coplanar.force_map[:2] == 0.0)
        assert_allclose(coplanar.force_map[2], np.ones(6))

    def test_tilted_has_lateral_force_and_full_rank(self, tilted):
        assert np.abs(tilted.force_map[:2]).max() > 0.1
        stacked = np.vstack([tilted.force_map, tilted.moment_map])
        assert np.linalg.matrix_rank(stacked, tol=1e-9) == 6

    def test_coplanar_yaw_row_alternates_with_spin_sign(self, coplanar):
        yaw_row = coplanar.moment_map[2]
        signs = np.array([r.spin_sign for r in coplanar.rotors])
        assert np.all(np.sign(yaw_row) == signs)

    def test_allocation_rebuild_is_idempotent(self, tilted):
        fmap, mmap = veh.allocation_maps(tilted.rotors)
        assert_allclose(fmap, tilted.force_map, atol=1e-12)
        assert_allclose(mmap, tilted.moment_map, atol=1e-12)

    def test_rejects_bad_parameters(self):
        with pytest.raises(veh.ParameterError):
            veh.build_hexarotor("coplanar", mass=-1.0)
        with pytest.raises(veh.ParameterError):
            veh.build_hexarotor("tilted", tilt_angle=1.2)
        with pytest.raises(veh.ParameterError):
            veh.build_hexarotor("coplanar", arm_length=0.0)
        with pytest.raises(veh.ParameterError):
            veh.build_hexarotor("octo")


class TestRotation:
    def test_identity(self):
        assert_allclose(veh.rotation_from_euler([0, 0, 0]), np.eye(3), atol=1e-15)

    def test_pure_yaw_maps_body_x_to_world_y(self):
        R = veh.rotation_from_euler([0, 0, math.pi / 2])
        assert_allclose(R @ np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), atol=1e-15)

    def test_orthonormality_random_sample(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(1000):
            eta = rng.uniform(-math.pi, math.pi, 3)
            R = veh.rotation_from_euler(eta)
            worst = max(worst, np.abs(R.T @ R - np.eye(3)).max())
            assert np.linalg.det(R) > 0.0
        assert worst < 1e-12

    def test_rotation_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(3)
        h = 1e-7
        for _ in range(20):
            eta = rng.uniform(-1.2, 1.2, 3)
            _, dphi, dtheta, dpsi = veh.rotation_derivatives(eta)
            for k, dR in enumerate((dphi, dtheta, dpsi)):
                e = np.zeros(3)
                e[k] = h
                fd = (veh.rotation_from_euler(eta + e) - veh.rotation_from_euler(eta - e)) / (2 * h)
                assert_allclose(dR, fd, atol=1e-6)


class TestEulerRateMap:
    def test_identity_at_zero(self):
        assert_allclose(veh.euler_rate_map([0, 0, 0]), np.eye(3), atol=1e-15)

    def test_gimbal_lock_raises(self):
        with pytest.raises(veh.EulerSingularityError):
            veh.euler_rate_map([0.0, math.pi / 2, 0.0])

    def test_kinematic_consistency_with_rotation(self):
        # d/dt R(eta(t)) must equal R [omega]_x when eta_dot = T(eta) omega.
        rng = np.random.default_rng(11)
        h = 1e-7
        for _ in range(50):
            eta = rng.uniform(-1.0, 1.0, 3)
            omega = rng.uniform(-2.0, 2.0, 3)
            eta_dot = veh.euler_rate_map(eta) @ omega
            dR_num = (
                veh.rotation_from_euler(eta + h * eta_dot)
                - veh.rotation_from_euler(eta - h * eta_dot)
            ) / (2 * h)
            R = veh.rotation_from_euler(eta)
            assert np.abs(dR_num - R @ veh.cross_matrix(omega)).max() < 1e-6


class TestDynamics:
    def test_hover_equilibrium_rhs(self, coplanar):
        # sqrt(m g / (6 c_xi)) for the Table-II-style parameter set
        u_h = math.sqrt(2.57 * 9.81 / (6 * 1.18e-3))
        assert_allclose(u_h, 59.6739, atol=1e-4)
        state = veh.hover_state(coplanar, [0, 0, 2.0])
        assert_allclose(state.rotor_speeds, u_h)
        dx = veh.dynamics_rhs(state, veh.ControlInput(np.zeros(6)), coplanar)
        assert np.abs(dx[6:12]).max() < 1e-12

    def test_zero_thrust_free_fall(self, coplanar):
        state = veh.VehicleState([0, 0, 5], [0, 0, 0], [0, 0, 0], [0, 0, 0], np.zeros(6))
        dx = veh.dynamics_rhs(state, veh.ControlInput(np.zeros(6)), coplanar)
        assert_allclose(dx[6:9], [0, 0, -9.81], atol=1e-15)

    def test_yaw_torque_from_alternating_speedup(self, coplanar):
        # Speed up the CCW set only: net moment is pure yaw for a coplanar build.
        u = np.full(6, 60.0)
        signs = np.array([r.spin_sign for r in coplanar.rotors])
        u[signs > 0] += 5.0
        state = veh.VehicleState([0, 0, 2], [0, 0, 0], [0, 0, 0], [0, 0, 0], u)
        xi = veh.thrusts(coplanar, u)
        torque = coplanar.moment_map @ xi
        assert np.abs(torque[:2]).max() < 1e-12
        assert abs(torque[2]) > 1e-4
        dx = veh.dynamics_rhs(state, veh.ControlInput(np.zeros(6)), coplanar)
        assert np.abs(dx[9:11]).max() < 1e-12
        assert abs(dx[11]) > 1e-3

    def test_state_vector_round_trip(self, coplanar):
        state = veh.hover_state(coplanar, [1, 2, 3])
        again = veh.VehicleState.from_vector(state.as_vector())
        assert_allclose(again.as_vector(), state.as_vector())


class TestStepRk4:
    def test_hover_is_fixed_point(self, coplanar):
        state = veh.hover_state(coplanar, [0, 0, 2.0])
        nxt = veh.step_rk4(state, veh.ControlInput(np.zeros(6)), coplanar, 1e-3)
        assert np.abs(nxt.position - state.position).max() < 1e-9

    def test_free_fall_closed_form(self, coplanar):
        state = veh.VehicleState([0, 0, 10.0], [0, 0, 0], [0, 0, 0], [0, 0, 0], np.zeros(6))
        u0 = veh.ControlInput(np.zeros(6))
        for _ in range(1000):
            state = veh.step_rk4(state, u0, coplanar, 1e-3)
        assert abs((state.position[2] - 10.0) - (-0.5 * 9.81)) < 1e-6

    def test_convergence_order(self, tilted):
        # Richardson estimate on a non-equilibrium maneuver.
        state0 = veh.hover_state(tilted, [0, 0, 2.0])
        udot = veh.ControlInput(np.array([8.0, -5.0, 3.0, -8.0, 5.0, -3.0]))

        def endpoint(dt):
            s = state0
            n = int(round(1.0 / dt))
            for _ in range(n):
                s = veh.step_rk4(s, udot, tilted, dt)
            return s.as_vector()

        x1 = endpoint(0.02)
        x2 = endpoint(0.01)
        x3 = endpoint(0.005)
        e1 = np.linalg.norm(x1 - x3)
        e2 = np.linalg.norm(x2 - x3)
        # with x3 as reference: e1 ~ C(h^4 - (h/4)^4), e2 ~ C((h/2)^4 - (h/4)^4)
        order = math.log2(e1 / e2 - 1.0) if e2 > 0 else 5.0
        assert order >= 3.8

    def test_plant_clamps_speeds(self, coplanar):
        state = veh.hover_state(coplanar, [0, 0, 2.0])
        push = veh.ControlInput(np.full(6, 400.0))
        for _ in range(200):
            state = veh.step_rk4(state, push, coplanar, 1e-3, clamp_speeds=True)
        assert np.all(state.rotor_speeds <= coplanar.speed_max + 1e-12)

    def test_hover_equilibrium_long_run(self, coplanar):
        state = veh.hover_state(coplanar, [0, 0, 2.0])
        u0 = veh.ControlInput(np.zeros(6))
        x = state.as_vector()
        for _ in range(10_000):
            x = veh._step_rk4_vec(x, u0.rotor_accels, coplanar, 1e-3)
        assert np.linalg.norm(x[6:9]) < 1e-8
        assert np.linalg.norm(x[9:12]) < 1e-8

    def test_zero_moment_keeps_rates_zero(self, coplanar):
        # zero thrust -> M xi = 0 exactly; omega must stay identically zero
        state = veh.VehicleState([0, 0, 50.0], [0, 0, 0], [1, 0, 0], [0, 0, 0], np.zeros(6))
        x = state.as_vector()
        for _ in range(500):
            x = veh._step_rk4_vec(x, np.zeros(6), coplanar, 1e-3)
        assert np.all(x[9:12] == 0.0)


class TestJacobians:
    def test_continuous_jacobian_matches_fd(self, tilted):
        rng = np.random.default_rng(5)
        x = np.concatenate(
            [
                rng.normal(0, 1, 3),
                rng.normal(0, 0.3, 3),
                rng.normal(0, 1, 3),
                rng.normal(0, 0.5, 3),
                rng.uniform(30, 90, 6),
            ]
        )
        udot = rng.uniform(-100, 100, 6)
        _, A = veh._rhs_and_state_jacobian(x, udot, tilted)
        h = 1e-6
        for i in range(x.size):
            e = np.zeros(x.size)
            e[i] = h
            col = (veh._rhs(x + e, udot, tilted) - veh._rhs(x - e, udot, tilted)) / (2 * h)
            assert_allclose(A[:, i], col, atol=5e-7)

    def test_discrete_jacobians_match_fd(self, tilted):
        rng = np.random.default_rng(9)
        x = veh.hover_state(tilted, [0, 0, 2.0]).as_vector()
        x[3:6] += rng.normal(0, 0.1, 3)
        x[9:12] += rng.normal(0, 0.2, 3)
        udot = rng.uniform(-50, 50, 6)
        xn, A, B = veh._step_rk4_with_jacobians(x, udot, tilted, 0.015)
        assert_allclose(xn, veh._step_rk4_vec(x, udot, tilted, 0.015))
        h = 1e-6
        for i in range(x.size):
            e = np.zeros(x.size)
            e[i] = h
            col = (
                veh._step_rk4_vec(x + e, udot, tilted, 0.015)
                - veh._step_rk4_vec(x - e, udot, tilted, 0.015)
            ) / (2 * h)
            assert_allclose(A[:, i], col, atol=5e-7)
        for i in range(6):
            e = np.zeros(6)
            e[i] = h
            col = (
                veh._step_rk4_vec(x, udot + e, tilted, 0.015)
                - veh._step_rk4_vec(x, udot - e, tilted, 0.015)
            ) / (2 * h)
            assert_allclose(B[:, i], col, atol=5e-7)
