import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cito import dynamics, tasks
from cito.trajopt import (
    LinearPlant,
    Problem,
    QuadraticCost,
    linearize,
    planar_cost,
    positioning_error,
    rollout,
    total_cost,
    wrap_angle,
)

from .conftest import linear_problem


class ScalarSquare:
    """x+ = x^2, used to check the difference scheme itself."""

    n, m, dt = 1, 1, 0.1

    def step(self, x, u):
        return np.asarray(x) ** 2 + 0.0 * np.asarray(u)


class TestRollout:
    def test_integrator_plant_is_cumulative_sum(self, rng):
        dt = 0.1
        plant = LinearPlant(np.eye(2), dt * np.eye(2), dt=dt)
        cost = QuadraticCost(np.ones(2), np.zeros(2), np.zeros(2), np.zeros(2))
        prob = Problem(plant, np.array([0.3, -0.2]), 7, cost, -np.ones(2) * 10, np.ones(2) * 10)
        U = rng.uniform(-1, 1, size=(7, 2))
        X = rollout(prob, U)
        expected = prob.x0 + dt * np.vstack([np.zeros(2), np.cumsum(U, axis=0)])
        np.testing.assert_allclose(X, expected, atol=1e-15)

    def test_defects_are_exactly_zero(self, rng):
        prob = linear_problem(n_steps=6)
        U = rng.normal(size=(6, 2))
        X = rollout(prob, U)
        for i in range(6):
            assert np.array_equal(prob.system.step(X[i], U[i]), X[i + 1])

    def test_planar_defects_are_exactly_zero(self, planar_cfg):
        prob = tasks.build_problem(dict(planar_cfg, n_steps=2, horizon=0.2))
        U = tasks.initial_controls(planar_cfg, prob)
        U[:, dynamics.TAU] = 0.3
        X = rollout(prob, U)
        for i in range(prob.n_steps):
            assert np.array_equal(prob.system.step(X[i], U[i]), X[i + 1])

    def test_wrong_shape_rejected(self):
        prob = linear_problem(n_steps=4)
        with pytest.raises(ValueError):
            rollout(prob, np.zeros((3, 2)))

    def test_out_of_bound_controls_are_clamped(self):
        prob = linear_problem(n_steps=2, bounds=1.0)
        X_big = rollout(prob, np.full((2, 2), 5.0))
        X_lim = rollout(prob, np.full((2, 2), 1.0))
        np.testing.assert_array_equal(X_big, X_lim)


class TestLinearize:
    def test_linear_plant_matches_analytic_jacobians(self, rng):
        prob = linear_problem(n_steps=5, seed=3)
        U = rng.normal(size=(5, 2))
        X = rollout(prob, U)
        lin = linearize(prob, X, U)
        for i in range(5):
            assert np.max(np.abs(lin.A[i] - prob.system.A)) < 1e-8
            assert np.max(np.abs(lin.B[i] - prob.system.B)) < 1e-8

    def test_scalar_square_slope(self):
        cost = QuadraticCost(np.ones(1), np.zeros(1), np.zeros(1), np.zeros(1))
        prob = Problem(ScalarSquare(), np.array([1.0]), 1, cost, [-1.0], [1.0], h_x=1e-5)
        lin = linearize(prob, np.array([[1.0], [1.0]]), np.zeros((1, 1)))
        assert abs(lin.A[0, 0, 0] - 2.0) < 1e-8

    def test_central_difference_error_is_second_order(self):
        # f(x) = x^3 has a nonzero third derivative, so the O(h^2) term is visible
        class Cube(ScalarSquare):
            def step(self, x, u):
                return np.asarray(x) ** 3 + 0.0 * np.asarray(u)

        cost = QuadraticCost(np.ones(1), np.zeros(1), np.zeros(1), np.zeros(1))
        errors = []
        for h in (1e-2, 5e-3, 2.5e-3):
            prob = Problem(Cube(), np.array([1.0]), 1, cost, [-1.0], [1.0], h_x=h)
            lin = linearize(prob, np.array([[1.0], [1.0]]), np.zeros((1, 1)))
            errors.append(abs(lin.A[0, 0, 0] - 3.0))
        # the error is exactly h^2 for a cubic
        np.testing.assert_allclose(errors, [1e-4, 2.5e-5, 6.25e-6], rtol=1e-6)
        assert errors[0] / errors[1] == pytest.approx(4.0, rel=1e-4)

    def test_planar_jacobian_is_finite_and_shaped(self, planar_cfg):
        cfg = dict(planar_cfg, n_steps=2, horizon=0.2)
        prob = tasks.build_problem(cfg)
        U = tasks.initial_controls(cfg, prob)
        X = rollout(prob, U)
        lin = linearize(prob, X, U)
        assert lin.A.shape == (2, 14, 14) and lin.B.shape == (2, 14, 8)
        assert np.all(np.isfinite(lin.A)) and np.all(np.isfinite(lin.B))


class TestCost:
    def _planar(self, x0):
        return planar_cost(x0, [-0.1, 0.0], w1=1e4, w2=0.0, w3=1e-4)

    def test_final_cost_of_ten_centimetre_error(self):
        x0 = np.zeros(dynamics.N_STATE)
        cost = self._planar(x0)
        # 1e4 * 0.1^2 evaluated independently of the cost object
        assert cost.final(x0) == pytest.approx(1e4 * 0.1 ** 2, rel=1e-12)

    def test_integrated_k_penalty(self):
        cost = self._planar(np.zeros(dynamics.N_STATE))
        u = np.zeros(dynamics.N_CONTROL)
        u[dynamics.K] = 5.0
        control, state = cost.running(np.zeros(dynamics.N_STATE), u)
        assert control == pytest.approx(0.01, rel=1e-12)
        assert state == 0.0

    def _rest_trajectory(self, k):
        n_steps = 10
        x0 = np.zeros(dynamics.N_STATE)
        X = np.tile(x0, (n_steps + 1, 1))
        U = np.zeros((n_steps, dynamics.N_CONTROL))
        U[:, dynamics.K] = k
        return x0, X, U

    def test_zero_controls_from_rest(self):
        x0, X, U = self._rest_trajectory(0.0)
        cost = self._planar(x0)
        prob = Problem(dynamics.World(), x0, 10, cost, dynamics.World().u_lower, dynamics.World().u_upper)
        assert total_cost(prob, X, U)[0] == pytest.approx(100.0, rel=1e-12)

    def test_initial_guess_cost(self):
        x0, X, U = self._rest_trajectory(5.0)
        cost = self._planar(x0)
        prob = Problem(dynamics.World(), x0, 10, cost, dynamics.World().u_lower, dynamics.World().u_upper)
        C, vel = total_cost(prob, X, U)
        assert C == pytest.approx(100.1, rel=1e-12)
        assert vel == 0.0

    def test_velocity_component_reported_separately(self):
        x0, X, U = self._rest_trajectory(0.0)
        X[1:, dynamics.VELOCITY_INDICES] = 1.0
        cost = planar_cost(x0, [-0.1, 0.0], velocity_penalty=True, w_vel=1e-3)
        prob = Problem(dynamics.World(), x0, 10, cost, dynamics.World().u_lower, dynamics.World().u_upper)
        C, vel = total_cost(prob, X, U)
        n_vel = len(dynamics.VELOCITY_INDICES)
        # stages 1..9 carry unit velocities; stage 0 is at rest
        assert vel == pytest.approx(1e-3 * n_vel * 9, rel=1e-12)
        assert C - vel == pytest.approx(100.0, rel=1e-12)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            QuadraticCost(-np.ones(1), np.zeros(1), np.zeros(1), np.zeros(1))

    @given(st.floats(-20.0, 20.0, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_wrap_angle_range_and_equivalence(self, a):
        w = wrap_angle(a)
        assert -np.pi < w <= np.pi + 1e-12
        assert np.cos(w) == pytest.approx(np.cos(a), abs=1e-9)
        assert np.sin(w) == pytest.approx(np.sin(a), abs=1e-9)

    def test_orientation_error_is_wrapped(self):
        x0 = np.zeros(dynamics.N_STATE)
        cost = planar_cost(x0, [0.0, 0.0], w1=0.0, w2=1.0)
        x = x0.copy()
        x[dynamics.BOX_POSE.start + 2] = 2 * np.pi + 0.1
        assert cost.final(x) == pytest.approx(0.01, rel=1e-9)


class TestPositioningError:
    def test_millimetres(self):
        x = np.zeros(dynamics.N_STATE)
        x[dynamics.BOX_POSE.start:dynamics.BOX_POSE.start + 2] = [0.003, 0.004]
        assert positioning_error(x, [0.0, 0.0]) == pytest.approx(5.0, rel=1e-12)


class TestProblem:
    def test_rejects_inverted_bounds(self):
        plant = LinearPlant(np.eye(1), np.eye(1))
        cost = QuadraticCost(np.ones(1), np.zeros(1), np.zeros(1), np.zeros(1))
        with pytest.raises(ValueError):
            Problem(plant, np.zeros(1), 3, cost, [1.0], [0.0])

    def test_rejects_zero_steps(self):
        plant = LinearPlant(np.eye(1), np.eye(1))
        cost = QuadraticCost(np.ones(1), np.zeros(1), np.zeros(1), np.zeros(1))
        with pytest.raises(ValueError):
            Problem(plant, np.zeros(1), 0, cost, [-1.0], [1.0])
