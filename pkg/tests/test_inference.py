import math

import numpy as np
import pytest
from scipy import integrate, optimize
from scipy.special import expit, gammaln

from conftest import GaussianLikelihood, ZeroLikelihood
from spatialhurdle.gmrf import Hyperparams, joint_precision
from spatialhurdle.grid import GridSpec, build_laplacian
from spatialhurdle.hurdle import Dataset, HurdleLikelihood, log1mexp
from spatialhurdle.inference import (MarginalPosterior, NelderMeadSettings, NewtonSettings,
                                     confidence_intervals, find_mode, laplace_log_marginal,
                                     log_marginal_posterior, maximize_marginal, nelder_mead,
                                     normal_intervals)
from spatialhurdle.simulate import SimConfig, simulate
from spatialhurdle.sparse import ORDERINGS

THETA = Hyperparams(0.8, 0.6, 1.4, 0.5)


def small_problem(seed, shape=(3, 3), k=0, theta=THETA):
    beta0 = (0.3,) + (0.8,) * k
    betaP = (0.4,) + (0.5,) * k
    data, _ = simulate(SimConfig(*shape, beta0, betaP, theta, seed=seed))
    Q = joint_precision(theta, build_laplacian(data.grid), data.n_coef)
    return data, Q


class WrongSignLikelihood:
    """Reports the negated gradient, so every Newton direction points downhill."""

    def __init__(self, inner):
        self.inner = inner

    def loglik(self, x):
        return self.inner.loglik(x)

    def grad(self, x):
        return -self.inner.grad(x)

    def hess(self, x):
        return self.inner.hess(x)


class TestFindMode:
    def test_pure_prior_reaches_zero_in_one_step(self):
        Q = joint_precision(THETA, build_laplacian(GridSpec(2, 3)), 2)
        x0 = np.random.default_rng(0).normal(size=Q.shape[0])
        mode = find_mode(Q, ZeroLikelihood(Q.shape[0]), x0=x0)
        assert mode.converged
        assert mode.trace[1] == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(mode.x, 0.0, atol=1e-12)

    def test_concave_quadratic_needs_one_undamped_step(self):
        rng = np.random.default_rng(1)
        grid = GridSpec(3, 2)
        Z = np.column_stack([np.ones(6), rng.normal(size=6)])
        lik = GaussianLikelihood(Z, rng.normal(size=12))
        Q = joint_precision(THETA, build_laplacian(grid), 2)
        mode = find_mode(Q, lik)
        assert mode.converged and not mode.stalled
        # the first full step already lands on the optimum; the second only confirms it
        assert mode.iterations <= 2
        assert mode.trace[1] == pytest.approx(mode.trace[-1], abs=1e-10)
        exact = np.linalg.solve((Q - lik.hess(None)).toarray(), lik.A.T @ lik.y / lik.s2)
        np.testing.assert_allclose(mode.x, exact, atol=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_general_purpose_optimizer(self, seed):
        data, Q = small_problem(seed)
        lik = HurdleLikelihood(data)
        mode = find_mode(Q, lik)
        assert mode.converged

        def neg(x):
            return -(lik.loglik(x) - 0.5 * x @ (Q @ x))

        def neg_grad(x):
            return -(lik.grad(x) - Q @ x)

        ref = optimize.minimize(neg, np.zeros(Q.shape[0]), jac=neg_grad, method="BFGS",
                                options=dict(gtol=1e-10, maxiter=10000))
        assert mode.objective == pytest.approx(-ref.fun, abs=1e-6)
        assert mode.objective >= -ref.fun - 1e-9

    def test_accepts_hyperparameters_and_dataset(self):
        data, Q = small_problem(3)
        a = find_mode(THETA, data)
        b = find_mode(Q, HurdleLikelihood(data))
        np.testing.assert_array_equal(a.x, b.x)

    def test_objective_never_decreases(self):
        rng = np.random.default_rng(8)
        for seed in range(10):
            data, Q = small_problem(seed, shape=(4, 4), k=1)
            lik = HurdleLikelihood(data)
            mode = find_mode(Q, lik, x0=rng.uniform(-0.5, 0.5, Q.shape[0]))
            assert np.all(np.diff(mode.trace) >= 0)
            assert mode.converged
            assert mode.grad_norm < 1e-4
            # a far start may overshoot into a region needing steps below the floor;
            # the search must still be monotone and either converge or report the stall
            far = find_mode(Q, lik, x0=np.full(Q.shape[0], 1.5))
            assert np.all(np.diff(far.trace) >= 0)
            assert far.converged or (far.stalled and far.grad_norm >= 1e-4)
            if far.converged:
                assert far.grad_norm < 1e-4

    def test_step_floor_terminates_cleanly(self):
        data, Q = small_problem(0)
        lik = WrongSignLikelihood(HurdleLikelihood(data))
        x0 = np.full(Q.shape[0], 0.3)
        mode = find_mode(Q, lik, x0=x0)
        assert mode.stalled
        assert not mode.converged
        assert mode.iterations == 1
        np.testing.assert_array_equal(mode.x, x0)
        assert mode.trace == [mode.trace[0]] * 2

    def test_ordering_does_not_change_the_mode(self):
        data, Q = small_problem(2, shape=(4, 3), k=1)
        lik = HurdleLikelihood(data)
        ref = find_mode(Q, lik, NewtonSettings(ordering="NATURAL")).x
        for ordering in ORDERINGS:
            np.testing.assert_allclose(find_mode(Q, lik, NewtonSettings(ordering=ordering)).x, ref,
                                       atol=1e-10)

    def test_deterministic(self):
        data, Q = small_problem(4, k=1)
        a = find_mode(Q, HurdleLikelihood(data))
        b = find_mode(Q, HurdleLikelihood(data))
        np.testing.assert_array_equal(a.x, b.x)
        assert a.objective == b.objective

    def test_unpacks_to_mode_and_hessian(self):
        data, Q = small_problem(1)
        x_hat, H = find_mode(Q, HurdleLikelihood(data))
        assert H.shape == Q.shape
        assert np.linalg.eigvalsh(H.toarray()).min() > 0

    def test_bad_settings(self):
        with pytest.raises(ValueError):
            NewtonSettings(tolerance=0)
        with pytest.raises(ValueError):
            NewtonSettings(min_step=2.0)
        data, Q = small_problem(0)
        with pytest.raises(ValueError):
            find_mode(Q, HurdleLikelihood(data), x0=np.zeros(3))


class TestLaplaceMarginal:
    @pytest.mark.parametrize("shape,k", [((1, 1), 0), ((2, 2), 1), ((3, 3), 2), ((4, 4), 1), ((2, 5), 0)])
    def test_exact_for_gaussian_likelihood(self, shape, k):
        rng = np.random.default_rng(shape[0] * 7 + shape[1] + k)
        grid = GridSpec(*shape)
        n = grid.n
        Z = np.column_stack([np.ones(n), rng.normal(size=(n, k))])
        data = Dataset(np.zeros(n, dtype=int), Z, grid)
        lik = GaussianLikelihood(Z, rng.normal(size=2 * n))
        for _ in range(3):
            theta = Hyperparams(*np.exp(rng.uniform(-1, 1, 4)))
            post = MarginalPosterior(data, likelihood=lik)
            value = post(theta)
            assert value == pytest.approx(lik.closed_form_log_marginal(post.precision(theta)), abs=1e-8)

    @pytest.mark.parametrize("y", [0, 1, 3])
    def test_single_cell_against_quadrature(self, y):
        theta = Hyperparams(1.0, 1.0, 1.0, 1.0)
        data = Dataset(np.array([y]), np.ones((1, 1)), GridSpec(1, 1))
        approx = math.exp(MarginalPosterior(data, beta_precision=1.0)(theta))
        # x = (b0, bP, U0, UP) all independent N(0, 1) here; the integrand splits into two 2-d parts
        dens = lambda b, u: math.exp(-0.5 * (b * b + u * u)) / (2 * math.pi)
        opts = dict(epsabs=1e-12, epsrel=1e-10)
        if y == 0:
            exact = integrate.dblquad(lambda u, b: expit(-(b + u)) * dens(b, u), -12, 12, -12, 12, **opts)[0]
        else:
            hurdle = integrate.dblquad(lambda u, b: expit(b + u) * dens(b, u), -12, 12, -12, 12, **opts)[0]

            def ztp(u, b):
                eta = b + u
                lam = math.exp(eta)
                return math.exp(y * eta - lam - gammaln(y + 1) - log1mexp(lam)) * dens(b, u)

            exact = hurdle * integrate.dblquad(ztp, -12, 12, -12, 12, **opts)[0]
        assert approx == pytest.approx(exact, rel=0.05)

    def test_functional_form_matches_class(self):
        data, _ = small_problem(5)
        assert log_marginal_posterior(THETA, data) == MarginalPosterior(data)(THETA)
        assert log_marginal_posterior(tuple(THETA.as_array()), data) == MarginalPosterior(data)(THETA)

    def test_warm_start_agrees_with_cold_start(self):
        data, _ = small_problem(6, k=1)
        warm = MarginalPosterior(data, warm_start=True)
        for theta in [THETA, Hyperparams(1.2, 0.4, 0.7, 2.0), Hyperparams(0.5, 0.5, 0.5, 0.5)]:
            assert warm(theta) == pytest.approx(MarginalPosterior(data)(theta), abs=1e-7)

    def test_requires_grid(self):
        data = Dataset(np.array([1, 0]), np.ones((2, 1)))
        with pytest.raises(ValueError):
            MarginalPosterior(data)

    def test_value_and_mode_returned(self):
        data, Q = small_problem(7)
        value, mode = laplace_log_marginal(Q, HurdleLikelihood(data))
        assert np.isfinite(value) and mode.converged


class TestNelderMead:
    def test_quadratic(self):
        res = nelder_mead(lambda z: float(np.sum((z - [1.0, -2.0, 0.5]) ** 2)), np.zeros(3),
                          tolerance=1e-14, max_iterations=5000)
        assert res.converged
        np.testing.assert_allclose(res.x, [1.0, -2.0, 0.5], atol=1e-5)

    def test_rosenbrock(self):
        res = nelder_mead(optimize.rosen, np.array([-1.2, 1.0]), tolerance=1e-16, max_iterations=5000)
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-4)

    def test_non_finite_values_are_rejected_moves(self):
        f = lambda z: np.nan if z[0] < 0 else (z[0] - 0.3) ** 2 + z[1] ** 2
        res = nelder_mead(f, np.array([0.1, 0.2]), tolerance=1e-14, max_iterations=2000)
        assert res.fun == pytest.approx(0.0, abs=1e-8)
        with pytest.raises(ValueError):
            nelder_mead(lambda z: np.inf, np.zeros(2))

    def test_iteration_cap(self):
        res = nelder_mead(optimize.rosen, np.array([-1.2, 1.0]), tolerance=1e-30, max_iterations=10)
        assert not res.converged and res.n_iter == 10


@pytest.fixture(scope="module")
def fitted():
    data, _ = small_problem(11, shape=(4, 4), k=1)
    return data, maximize_marginal(data)


class TestMaximizeMarginal:
    def test_ascent(self, fitted):
        data, fit = fitted
        assert fit.log_marginal_posterior >= fit.convergence_report["initial_log_marginal"]
        assert fit.log_marginal_posterior == pytest.approx(log_marginal_posterior(fit.theta_hat, data),
                                                           abs=1e-6)

    def test_result_fields(self, fitted):
        data, fit = fitted
        assert fit.converged
        assert fit.x_hat.shape == (data.p,) and fit.std_errors.shape == (data.p,)
        assert np.all(fit.std_errors > 0)
        assert fit.coefficient_labels() == ["beta0_intercept", "beta0_x1", "betaP_intercept", "betaP_x1"]
        assert fit.beta0.size == 2 and fit.UP.size == 16

    def test_deterministic(self, fitted):
        data, fit = fitted
        again = maximize_marginal(data)
        np.testing.assert_array_equal(again.x_hat, fit.x_hat)
        np.testing.assert_array_equal(again.theta_hat.as_array(), fit.theta_hat.as_array())

    def test_iteration_cap_reports_non_convergence(self, fitted):
        data, _ = fitted
        fit = maximize_marginal(data, nm_settings=NelderMeadSettings(max_iterations=2))
        assert not fit.converged


class TestIntervals:
    def test_standard_normal(self):
        ci = normal_intervals([0.0], [1.0], 0.05)
        assert ci.lower[0] == pytest.approx(-1.959964, abs=1e-6)
        assert ci.upper[0] == pytest.approx(1.959964, abs=1e-6)

    def test_significance(self):
        ci = normal_intervals([56.385, -1.485], [(109.131 - 3.638) / (2 * 1.959964), (0.487 + 3.456) / (2 * 1.959964)])
        np.testing.assert_allclose(ci.lower, [3.638, -3.456], atol=2e-3)
        np.testing.assert_array_equal(ci.significant, [True, False])

    def test_alpha_validation(self):
        with pytest.raises(ValueError):
            normal_intervals([0.0], [1.0], 1.5)

    def test_fit_intervals_cover_every_coordinate(self):
        data, _ = small_problem(12)
        fit = maximize_marginal(data, nm_settings=NelderMeadSettings(tolerance=1e-4))
        ci = confidence_intervals(fit, 0.1)
        assert ci.lower.shape == (data.p,)
        assert np.all(ci.lower < fit.x_hat) and np.all(fit.x_hat < ci.upper)
