"""scikit-learn compatible front end for the spatial hurdle model."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_counts, check_design, check_hyperparams, check_positive
from .gmrf import BETA_PRIOR_PRECISION
from .hurdle import Dataset, expected_count, linear_predictors, link_lambda, link_pi
from .inference import (NelderMeadSettings, NewtonSettings, confidence_intervals,
                        maximize_marginal)


class SpatialHurdleRegressor(RegressorMixin, BaseEstimator):
    """Poisson hurdle regression with GMRF spatial effects, fitted by empirical Bayes.

    The latent fields live on the unmasked cells of ``grid``, so ``X`` passed
    to :meth:`fit` and every prediction method must have one row per cell, in
    the grid's row-major order.  Predictions are in-sample surfaces.

    Parameters
    ----------
    grid : GridSpec
        Model grid.
    theta_init : tuple of 4 floats
        Starting ``(kappa0, tau0, kappaP, tauP)`` for Nelder-Mead.
    tol : float
        Stop when the simplex's objective spread falls below this.
    newton_tol : float
        Norm-difference tolerance of the inner Newton search.
    max_iter, max_newton_iter : int
    strict : bool
        Cold-start every Newton search and drop the gradient-norm stopping
        check.
    alpha : float
        Interval level is ``1 - alpha``.
    fit_intercept : bool
        Prepend a column of ones to ``X``.
    beta_precision : float
        Prior precision of the regression coefficients.
    """

    def __init__(self, grid=None, theta_init=(1.0, 1.0, 1.0, 1.0), tol=1e-7, newton_tol=1e-7,
                 max_iter=1000, max_newton_iter=100, strict=False, alpha=0.05,
                 fit_intercept=True, beta_precision=BETA_PRIOR_PRECISION):
        self.grid = grid
        self.theta_init = theta_init
        self.tol = tol
        self.newton_tol = newton_tol
        self.max_iter = max_iter
        self.max_newton_iter = max_newton_iter
        self.strict = strict
        self.alpha = alpha
        self.fit_intercept = fit_intercept
        self.beta_precision = beta_precision

    def _dataset(self, X, y):
        n = None if self.grid is None else self.grid.n
        Z = check_design(X, n, self.fit_intercept)
        return Dataset(check_counts(y), Z, self.grid)

    def fit(self, X, y):
        if self.grid is None:
            raise ValueError("SpatialHurdleRegressor needs a grid")
        check_positive(self.tol, "tol")
        check_positive(self.newton_tol, "newton_tol")
        check_positive(self.beta_precision, "beta_precision")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        data = self._dataset(X, y)
        self.n_features_in_ = data.n_coef - 1 if self.fit_intercept else data.n_coef
        newton = NewtonSettings(tolerance=self.newton_tol, max_iterations=self.max_newton_iter,
                                check_gradient=not self.strict)
        simplex = NelderMeadSettings(tolerance=self.tol, max_iterations=self.max_iter,
                                     warm_start=not self.strict)
        fit = maximize_marginal(data, check_hyperparams(self.theta_init), simplex, newton,
                                beta_precision=self.beta_precision)
        self.fit_result_ = fit
        self.theta_ = fit.theta_hat
        self.intervals_ = confidence_intervals(fit, self.alpha)
        self.coef_zero_ = fit.beta0
        self.coef_count_ = fit.betaP
        self.latent_zero_ = fit.U0
        self.latent_count_ = fit.UP
        self.converged_ = fit.converged
        return self

    def _predictors(self, X):
        check_is_fitted(self, "fit_result_")
        Z = check_design(X, self.grid.n, self.fit_intercept)
        if Z.shape[1] != self.fit_result_.layout.n_coef:
            raise ValueError(f"X has {Z.shape[1]} design columns, model was fitted with "
                             f"{self.fit_result_.layout.n_coef}")
        data = Dataset(np.zeros(Z.shape[0], dtype=np.int64), Z, self.grid)
        return linear_predictors(self.fit_result_.x_hat, data)

    def predict(self, X):
        """Expected counts per cell."""
        return np.asarray(expected_count(*self._predictors(X)), dtype=float)

    def predict_occurrence(self, X):
        """Probability of at least one event per cell."""
        return link_pi(self._predictors(X)[0])

    def predict_rate(self, X):
        """Rate of the zero-truncated Poisson count part per cell."""
        return link_lambda(self._predictors(X)[1])

    def coefficient_table(self, names=None):
        """Rows of ``(parameter, estimate, lower, upper, significant)`` for both parts."""
        check_is_fitted(self, "fit_result_")
        k1 = self.fit_result_.layout.n_coef
        if names is None:
            names = self.fit_result_.names
        labels = [f"beta0_{nm}" for nm in names] + [f"betaP_{nm}" for nm in names]
        ci = self.intervals_
        sig = ci.significant
        return [(labels[j], ci.estimate[j], ci.lower[j], ci.upper[j], bool(sig[j]))
                for j in range(2 * k1)]
