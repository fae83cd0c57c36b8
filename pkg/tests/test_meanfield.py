import math

import numpy as np
import pytest

from conftest import random_pmf, symmetric_pmf
from ivmlab import (
    OpinionSpace,
    closed_form_k1_critical,
    dirichlet_form,
    equilibria,
    equilibrium_polynomial,
    equilibrium_polynomial_root,
    flip,
    integrate_rk4,
    is_symmetric,
    linear_operator,
    make_pmf,
    mean_derivative,
    point_mass,
    reduced_rhs_k1,
    rhs,
    uniform_pmf,
)

K1 = OpinionSpace(1)
K2 = OpinionSpace(2)


class TestRhs:
    def test_equilibria_are_stationary(self):
        for k in range(1, 11):
            for q in equilibria(OpinionSpace(k)):
                assert np.max(np.abs(rhs(q))) <= 1e-15

    def test_hand_computed_k1(self):
        # M = 1, so both transition weights are 1/2:
        # q0' = 0.4/2 - 0.3/2 = 0.05, q1' = 0.3/2 + 0.3/2 - 0.4 = -0.1
        q = make_pmf(K1, (0.3, 0.4, 0.3))
        assert rhs(q) == pytest.approx([0.05, -0.10, 0.05], abs=1e-15)

    def test_components_sum_to_zero_exactly(self):
        rng = np.random.default_rng(7)
        for k in (1, 2, 3, 5, 10):
            space = OpinionSpace(k)
            for _ in range(200):
                out = rhs(random_pmf(rng, space))
                assert math.fsum(out.tolist()) == 0.0
                assert float(np.sum(out)) == 0.0

    def test_flip_equivariance(self):
        rng = np.random.default_rng(11)
        for k in range(1, 6):
            space = OpinionSpace(k)
            for _ in range(50):
                q = random_pmf(rng, space)
                assert rhs(flip(q)) == pytest.approx(rhs(q)[::-1], abs=1e-12)


class TestIntegrateRk4:
    def test_constant_at_equilibrium(self):
        qr = point_mass(K1, 2)
        traj = integrate_rk4(qr, dt=0.01, horizon=3.0)
        assert np.array_equal(traj.weights, np.tile(qr.weights, (len(traj), 1)))

    def test_matches_closed_form(self):
        q0 = make_pmf(K1, (0.3, 0.4, 0.3))
        traj = integrate_rk4(q0, dt=0.01, horizon=2.0)
        exact = np.array([closed_form_k1_critical(q0, t).weights for t in traj.times])
        assert np.max(np.abs(traj.weights - exact)) <= 1e-8

    def test_fourth_order_convergence(self):
        # halving the step divides the closed-form error by about 2^4
        q0 = make_pmf(K1, (0.3, 0.4, 0.3))
        errors = {}
        for dt in (0.02, 0.01):
            traj = integrate_rk4(q0, dt=dt, horizon=5.0)
            exact = np.array(
                [closed_form_k1_critical(q0, t).weights for t in traj.times]
            )
            errors[dt] = np.max(np.abs(traj.weights - exact))
        ratio = errors[0.02] / errors[0.01]
        assert 12.0 <= ratio <= 20.0

    def test_mass_conserved_over_long_horizon(self):
        q0 = make_pmf(K1, (0.4, 0.3, 0.3))
        traj = integrate_rk4(q0, dt=0.01, horizon=1000.0)
        masses = traj.weights.sum(axis=1)
        assert np.max(np.abs(masses - 1.0)) <= 1e-12

    def test_unstable_step_raises(self):
        q0 = make_pmf(K1, (0.4, 0.3, 0.3))
        with pytest.raises(ValueError, match="step size too large"):
            integrate_rk4(q0, dt=5.0, horizon=100.0)

    def test_grid_layout(self):
        traj = integrate_rk4(uniform_pmf(K2), dt=0.5, horizon=2.0)
        assert traj.times == pytest.approx([0.0, 0.5, 1.0, 1.5, 2.0])
        assert traj.index_at(1.5) == 3
        with pytest.raises(ValueError, match="not on the grid"):
            traj.index_at(0.7)

    def test_parameter_validation(self):
        q0 = uniform_pmf(K1)
        with pytest.raises(ValueError, match="dt"):
            integrate_rk4(q0, dt=0.0, horizon=1.0)
        with pytest.raises(ValueError, match="horizon"):
            integrate_rk4(q0, dt=0.1, horizon=0.05)

    def test_symmetric_subspace_invariant(self):
        rng = np.random.default_rng(3)
        for space in (K1, K2):
            q0 = symmetric_pmf(rng, space)
            traj = integrate_rk4(q0, dt=0.01, horizon=20.0)
            asym = np.max(np.abs(traj.weights - traj.weights[:, ::-1]))
            assert asym <= 1e-10

    def test_mean_monotone_above_upper_threshold(self):
        q0 = make_pmf(K2, (0.05, 0.05, 0.05, 0.549, 0.301))  # M(0) = 3.001
        traj = integrate_rk4(q0, dt=0.01, horizon=50.0)
        assert np.all(np.diff(traj.means) >= -1e-12)

    def test_mean_monotone_below_lower_threshold(self):
        q0 = make_pmf(K2, (0.31, 0.54, 0.05, 0.05, 0.05))  # M(0) = 0.99
        traj = integrate_rk4(q0, dt=0.01, horizon=50.0)
        assert np.all(np.diff(traj.means) <= 1e-12)


class TestEquilibria:
    def test_k1_values(self):
        left, unif, right = equilibria(K1)
        assert np.array_equal(left.weights, [1, 0, 0])
        assert unif.weights == pytest.approx([1 / 3] * 3, abs=1e-15)
        assert np.array_equal(right.weights, [0, 0, 1])

    def test_k2_uniform(self):
        assert equilibria(K2)[1].weights == pytest.approx([0.2] * 5, abs=1e-15)


class TestEquilibriumPolynomial:
    def test_one_is_a_root_for_every_k(self):
        for k in range(1, 11):
            assert equilibrium_polynomial(1.0, OpinionSpace(k)) == 0.0

    def test_k1_is_shifted_cube(self):
        # (2k-1) r^3 - 3 r^2 + 3 r - 1 = (r - 1)^3 at k=1
        assert equilibrium_polynomial(2.0, K1) == pytest.approx(1.0, abs=1e-12)
        assert equilibrium_polynomial(0.5, K1) == pytest.approx(-0.125, abs=1e-12)

    def test_strictly_increasing_on_grid(self):
        grid = np.linspace(0.1, 5.0, 50)
        for k in range(1, 11):
            space = OpinionSpace(k)
            values = [equilibrium_polynomial(r, space) for r in grid]
            assert np.all(np.diff(values) > 0)

    def test_rejects_nonpositive_argument(self):
        with pytest.raises(ValueError, match="positive"):
            equilibrium_polynomial(0.0, K1)

    def test_root_finder_returns_one(self):
        # triple root: sign-based location is good to ~cbrt(eval noise)
        for k in (1, 2, 5, 10):
            root = equilibrium_polynomial_root(OpinionSpace(k))
            assert root == pytest.approx(1.0, abs=1e-5)

    def test_root_finder_checks_bracket(self):
        with pytest.raises(ValueError, match="bracket"):
            equilibrium_polynomial_root(K1, lo=2.0, hi=3.0)


class TestMeanDerivative:
    def test_critical_point_k1(self):
        assert mean_derivative(make_pmf(K1, (0.3, 0.4, 0.3))) == pytest.approx(0.0, abs=1e-15)

    def test_hand_computed_k1(self):
        # M = 0.9, so M' = (0.9 - 1) * 0.3 / 2
        q = make_pmf(K1, (0.4, 0.3, 0.3))
        assert mean_derivative(q) == pytest.approx(-0.015, abs=1e-15)

    def test_symmetric_profile_k2(self):
        q = make_pmf(K2, (0.1, 0.25, 0.3, 0.25, 0.1))
        assert mean_derivative(q) == pytest.approx(0.0, abs=1e-15)

    def test_matches_first_moment_of_rhs(self):
        rng = np.random.default_rng(5)
        for k in range(1, 6):
            space = OpinionSpace(k)
            grid = np.arange(space.n_states, dtype=float)
            for _ in range(200):
                q = random_pmf(rng, space)
                assert abs(mean_derivative(q) - float(np.dot(grid, rhs(q)))) <= 1e-12


class TestClosedFormK1:
    def test_uniform_is_fixed(self):
        qu = uniform_pmf(K1)
        for t in (0.0, 1.0, 10.0):
            assert closed_form_k1_critical(qu, t).weights == pytest.approx(
                qu.weights, abs=1e-15
            )

    def test_value_at_t1(self):
        # frozen from a 30-digit evaluation of 1/3 + (0.3 - 1/3) e^{-1.5} (1,-2,1)
        q0 = make_pmf(K1, (0.3, 0.4, 0.3))
        out = closed_form_k1_critical(q0, 1.0)
        expected = [0.32589566132838567, 0.34820867734322866, 0.32589566132838567]
        assert out.weights == pytest.approx(expected, abs=1e-12)

    def test_long_time_limit(self):
        q0 = make_pmf(K1, (0.3, 0.4, 0.3))
        out = closed_form_k1_critical(q0, 50.0)
        assert out.weights == pytest.approx([1 / 3] * 3, abs=1e-12)

    def test_requires_k1_and_critical_mean(self):
        with pytest.raises(ValueError, match="k=1"):
            closed_form_k1_critical(uniform_pmf(K2), 1.0)
        with pytest.raises(ValueError, match="mean"):
            closed_form_k1_critical(make_pmf(K1, (0.4, 0.3, 0.3)), 1.0)


def _rk4_pair(y, dt, steps):
    def f(v):
        return np.array(reduced_rhs_k1(v[0], v[1]))

    out = [y.copy()]
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out.append(y.copy())
    return np.array(out)


class TestReducedSystemK1:
    def test_consensus_is_stationary(self):
        gap_rate, _ = reduced_rhs_k1(0.0, 0.0)
        assert gap_rate == 0.0

    def test_hand_computed(self):
        gap_rate, q1_rate = reduced_rhs_k1(0.9, 0.3)
        assert gap_rate == pytest.approx(-0.015, abs=1e-15)
        assert q1_rate == pytest.approx(0.045, abs=1e-15)

    def test_agrees_with_full_system(self):
        # the reduction is a linear change of variables, so the two RK4
        # integrations coincide up to roundoff
        q0 = make_pmf(K1, (0.3, 0.3, 0.4))
        traj = integrate_rk4(q0, dt=0.01, horizon=10.0)
        gap_full = np.minimum(2.0 - traj.means, traj.means)
        reduced = _rk4_pair(np.array([0.9, 0.3]), 0.01, 1000)
        assert np.max(np.abs(gap_full - reduced[:, 0])) <= 1e-12
        assert np.max(np.abs(traj.weights[:, 1] - reduced[:, 1])) <= 1e-12

    def test_ratio_growth_guard(self):
        # r' > (1 - 3r)/2 whenever the gap is below one
        reduced = _rk4_pair(np.array([0.9, 0.3]), 0.01, 2000)
        gaps, q1s = reduced[:, 0], reduced[:, 1]
        r = q1s / gaps
        r_rate = 1.0 - 1.5 * r + 0.5 * r * r - 0.5 * gaps * (1.0 + r * r)
        assert np.all(gaps < 1.0)
        assert np.all(r_rate > (1.0 - 3.0 * r) / 2.0)


class TestLinearOperator:
    def test_uniform_in_kernel(self):
        for space in (K1, K2):
            op = linear_operator(space)
            assert np.max(np.abs(op.apply(uniform_pmf(space).weights))) == 0.0

    def test_k1_eigenvector(self):
        op = linear_operator(K1)
        x = np.array([1.0, -2.0, 1.0])
        assert np.array_equal(op.apply(x), -1.5 * x)

    def test_rows_sum_to_zero(self):
        for k in range(1, 11):
            op = linear_operator(OpinionSpace(k))
            assert np.max(np.abs(op.matrix().sum(axis=1))) == 0.0

    def test_matrix_is_symmetric(self):
        m = linear_operator(K2).matrix()
        assert np.array_equal(m, m.T)

    def test_apply_matches_dense(self):
        rng = np.random.default_rng(13)
        op = linear_operator(OpinionSpace(4))
        for _ in range(20):
            x = rng.standard_normal(9)
            assert op.apply(x) == pytest.approx(op.matrix() @ x, abs=1e-14)

    def test_reduces_rhs_on_symmetric_subspace(self):
        rng = np.random.default_rng(17)
        for space in (K1, K2, OpinionSpace(3)):
            op = linear_operator(space)
            for _ in range(50):
                q = symmetric_pmf(rng, space)
                assert rhs(q) == pytest.approx(op.apply(q.weights), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="entries"):
            linear_operator(K1).apply(np.ones(5))


class TestDirichletForm:
    def test_constant_vector(self):
        op = linear_operator(K2)
        assert dirichlet_form(op, np.full(5, 0.7)) == 0.0

    def test_hand_computed(self):
        op = linear_operator(K1)
        assert dirichlet_form(op, np.array([1.0, -2.0, 1.0])) == 9.0

    def test_matches_quadratic_form(self):
        rng = np.random.default_rng(19)
        for k in (1, 3, 5):
            op = linear_operator(OpinionSpace(k))
            for _ in range(50):
                x = rng.standard_normal(2 * k + 1)
                quad = -float(np.dot(op.apply(x), x))
                assert abs(dirichlet_form(op, x) - quad) <= 1e-12

    def test_poincare_bound_on_zero_sum_vectors(self):
        rng = np.random.default_rng(23)
        for k in range(1, 6):
            n = 2 * k + 1
            op = linear_operator(OpinionSpace(k))
            x = rng.standard_normal((1000, n))
            x -= x.mean(axis=1, keepdims=True)
            forms = 0.5 * np.sum(np.diff(x, axis=1) ** 2, axis=1)
            bounds = np.sum(x * x, axis=1) / (8.0 * n * n)
            assert np.all(forms >= bounds)
