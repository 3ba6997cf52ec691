"""Tests for the dual active-set QP solver."""

import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from relaykit.qp import QpError, QpResult, solve_qp


def random_pd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eigs = np.geomspace(1.0, cond, n)
    return Q @ np.diag(eigs) @ Q.T


def kkt_residuals(H, g, C, d, res: QpResult):
    stat = H @ res.x + g - C.T @ res.multipliers
    slack = C @ res.x - d
    comp = res.multipliers * slack
    return (
        np.abs(stat).max(),
        float(min(slack.min(), 0.0)),
        float(res.multipliers.min(initial=0.0)),
        np.abs(comp).max(initial=0.0),
    )


def brute_force(H, g, C, d):
    """Enumerate active sets; smallest feasible KKT objective wins."""
    m, n = C.shape
    best, best_x = np.inf, None
    for k in range(0, n + 1):
        for combo in itertools.combinations(range(m), k):
            A = C[list(combo)]
            KKT = np.block([[H, -A.T], [A, np.zeros((k, k))]])
            rhs = np.concatenate([-g, d[list(combo)]])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.any(lam < -1e-9):
                continue
            if np.any(C @ x - d < -1e-9):
                continue
            val = 0.5 * x @ H @ x + g @ x
            if val < best - 1e-12:
                best, best_x = val, x
    return best_x


class TestUnconstrained:
    def test_matches_linear_solve(self):
        rng = np.random.default_rng(0)
        H = random_pd(rng, 8)
        g = rng.normal(size=8)
        res = solve_qp(H, g)
        assert_allclose(res.x, -np.linalg.solve(H, g), atol=1e-10)
        assert res.status == "optimal"


class TestSmallProblems:
    def test_matches_active_set_enumeration(self):
        rng = np.random.default_rng(1)
        for trial in range(50):
            n, m = 3, 5
            H = random_pd(rng, n, cond=30.0)
            g = rng.normal(size=n)
            C = rng.normal(size=(m, n))
            d = rng.normal(size=m) - 1.0
            ref = brute_force(H, g, C, d)
            if ref is None:
                continue
            res = solve_qp(H, g, C, d)
            assert_allclose(res.x, ref, atol=1e-7, err_msg=f"trial {trial}")

    def test_simple_box(self):
        # min (x-2)^2 + (y+1)^2 s.t. 0 <= x <= 1, 0 <= y <= 1
        H = 2 * np.eye(2)
        g = np.array([-4.0, 2.0])
        C = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
        d = np.array([0.0, -1.0, 0.0, -1.0])
        res = solve_qp(H, g, C, d)
        assert_allclose(res.x, [1.0, 0.0], atol=1e-10)

    def test_equality_like_pair(self):
        # opposing inequalities pin x0 = 0.5 exactly
        H = np.eye(2)
        g = np.array([-1.0, -1.0])
        C = np.array([[1.0, 0.0], [-1.0, 0.0]])
        d = np.array([0.5, -0.5])
        res = solve_qp(H, g, C, d)
        assert_allclose(res.x, [0.5, 1.0], atol=1e-10)

    def test_infeasible_raises(self):
        H = np.eye(1)
        g = np.zeros(1)
        C = np.array([[1.0], [-1.0]])
        d = np.array([1.0, 0.0])  # x >= 1 and x <= 0
        with pytest.raises(QpError):
            solve_qp(H, g, C, d)


class TestKktConditions:
    @pytest.mark.parametrize("seed", range(8))
    def test_random_medium_problems(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = 40
        m = 120
        H = random_pd(rng, n, cond=1e4)
        g = rng.normal(size=n) * 5
        C = rng.normal(size=(m, n))
        x_feas = rng.normal(size=n)
        d = C @ x_feas - rng.uniform(0.05, 2.0, size=m)  # feasible by construction
        res = solve_qp(H, g, C, d)
        stat, feas, dual, comp = kkt_residuals(H, g, C, d, res)
        assert stat < 1e-6
        assert feas > -1e-8
        assert dual > -1e-10
        assert comp < 1e-6

    def test_many_active_bounds(self):
        # strongly attracted to a corner: most box constraints end up active
        rng = np.random.default_rng(9)
        n = 25
        H = np.eye(n)
        g = -10.0 * np.ones(n)
        C = np.vstack([np.eye(n), -np.eye(n)])
        d = np.concatenate([np.zeros(n), -np.ones(n)])
        res = solve_qp(H, g, C, d)
        assert_allclose(res.x, np.ones(n), atol=1e-9)
        assert len(res.active) == n
