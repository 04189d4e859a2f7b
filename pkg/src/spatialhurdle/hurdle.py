"""Poisson hurdle likelihood with additive latent spatial effects.

The latent vector is stacked as ``x = (beta0, betaP, U0, UP)``: hurdle
coefficients, count coefficients, hurdle field, count field.  Both parts share
the same covariate matrix, whose first column is the intercept.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, gammaln

_LOG2 = np.log(2.0)
# exp(709.78) overflows float64
_LAMBDA_OVERFLOW = 700.0


def link_pi(eta):
    """Logistic link, ``1 / (1 + exp(-eta))``."""
    return expit(eta)


def link_lambda(eta):
    """Log-linear link, ``exp(eta)``."""
    return np.exp(eta)


def log1mexp(lam):
    """``log(1 - exp(-lam))`` for ``lam > 0`` without cancellation."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(
            lam > _LOG2,
            np.log1p(-np.exp(-np.maximum(lam, _LOG2))),
            np.log(-np.expm1(-np.minimum(lam, _LOG2))),
        )


def _inv_expm1(lam):
    """``1 / (exp(lam) - 1)``, exactly 0 once ``exp(lam)`` would overflow."""
    lam = np.asarray(lam, dtype=float)
    safe = np.minimum(lam, _LAMBDA_OVERFLOW)
    return np.where(lam >= _LAMBDA_OVERFLOW, 0.0, 1.0 / np.expm1(safe))


def _one_minus_lam_r(lam):
    """``1 - lam / (exp(lam) - 1)`` without cancellation for small ``lam``."""
    lam = np.asarray(lam, dtype=float)
    small = lam < 0.05
    ls = np.where(small, lam, 0.0)
    series = ls / 2 - ls**2 / 12 + ls**4 / 720 - ls**6 / 30240
    big = lam >= _LAMBDA_OVERFLOW
    mid = np.where(small | big, 1.0, lam)
    return np.where(small, series, np.where(big, 1.0, 1.0 - mid * _inv_expm1(mid)))


def truncated_mean(lam):
    """Mean of the zero-truncated Poisson, ``lam / (1 - exp(-lam))``."""
    lam = np.asarray(lam, dtype=float)
    return lam / -np.expm1(-lam)


def log_hurdle_pmf(y, eta0, etaP):
    y = np.asarray(y)
    eta0 = np.asarray(eta0, dtype=float)
    etaP = np.asarray(etaP, dtype=float)
    lam = np.exp(np.minimum(etaP, _LAMBDA_OVERFLOW))
    pos = (
        -np.logaddexp(0.0, -eta0)
        + y * etaP
        - lam
        - gammaln(y + 1.0)
        - log1mexp(lam)
    )
    return np.where(y > 0, pos, -np.logaddexp(0.0, eta0))


def hurdle_pmf(y, eta0, etaP):
    """Probability of count ``y`` given hurdle and count linear predictors."""
    y = np.asarray(y)
    if np.any(y < 0):
        raise ValueError("counts must be nonnegative")
    out = np.exp(log_hurdle_pmf(y, eta0, etaP))
    return float(out) if out.ndim == 0 else out


def expected_count(eta0, etaP):
    """Hurdle mean ``pi(eta0) * lam / (1 - exp(-lam))``."""
    out = link_pi(eta0) * truncated_mean(link_lambda(etaP))
    return float(out) if np.ndim(out) == 0 else out


def odds_decrease(coef, delta=1.0):
    """Fractional decrease ``1 - exp(coef * delta)`` in the odds (hurdle part)
    or in the rate (count part) for a covariate change of ``delta`` units.

    Relative humidity enters as a fraction, so a one percentage point change
    is ``delta=0.01``.
    """
    return 1.0 - np.exp(coef * delta)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Per-cell counts and design rows on a masked grid.

    ``covariates`` has shape ``(n, k + 1)`` and its first column must be ones.
    """

    counts: np.ndarray
    covariates: np.ndarray
    grid: object = None
    names: tuple = field(default=None)

    def __post_init__(self):
        y = np.array(self.counts)
        if y.ndim != 1:
            raise ValueError(f"counts must be 1-d, got shape {y.shape}")
        if y.size and (not np.all(np.isfinite(y)) or np.any(y < 0) or np.any(y != np.round(y))):
            raise ValueError("counts must be finite nonnegative integers")
        y = y.astype(np.int64)
        Z = np.array(self.covariates, dtype=float)
        if Z.ndim != 2 or Z.shape[0] != y.size:
            raise ValueError(f"covariates shape {Z.shape} incompatible with {y.size} counts")
        if Z.shape[1] < 1:
            raise ValueError("covariates need at least the intercept column")
        if not np.all(np.isfinite(Z)):
            raise ValueError("covariates contain non-finite values")
        if y.size and not np.all(Z[:, 0] == 1.0):
            raise ValueError("first covariate column must be the intercept (all ones)")
        if self.grid is not None and self.grid.n != y.size:
            raise ValueError(f"grid has {self.grid.n} cells but {y.size} counts were given")
        names = self.names
        if names is None:
            names = ("intercept",) + tuple(f"x{j}" for j in range(1, Z.shape[1]))
        names = tuple(names)
        if len(names) != Z.shape[1]:
            raise ValueError(f"{len(names)} names for {Z.shape[1]} design columns")
        y.setflags(write=False)
        Z.setflags(write=False)
        object.__setattr__(self, "counts", y)
        object.__setattr__(self, "covariates", Z)
        object.__setattr__(self, "names", names)
        _check_interaction(Z, names)

    @property
    def n(self):
        return self.counts.size

    @property
    def n_coef(self):
        """Number of regression coefficients per part, ``k + 1``."""
        return self.covariates.shape[1]

    @property
    def p(self):
        return 2 * (self.n + self.n_coef)


def _check_interaction(Z, names):
    lookup = {name: j for j, name in enumerate(names)}
    for inter in ("temp_RH", "temp*RH", "temp:RH"):
        if inter in lookup and "temp" in lookup and "RH" in lookup:
            prod = Z[:, lookup["temp"]] * Z[:, lookup["RH"]]
            if not np.allclose(Z[:, lookup[inter]], prod, rtol=1e-9, atol=1e-12):
                raise ValueError(f"column {inter!r} is not the product of 'temp' and 'RH'")


@dataclass(frozen=True)
class LatentLayout:
    """Index bookkeeping for the stacked latent vector."""

    n: int
    n_coef: int

    @property
    def p(self):
        return 2 * (self.n + self.n_coef)

    @property
    def beta0(self):
        return slice(0, self.n_coef)

    @property
    def betaP(self):
        return slice(self.n_coef, 2 * self.n_coef)

    @property
    def U0(self):
        return slice(2 * self.n_coef, 2 * self.n_coef + self.n)

    @property
    def UP(self):
        return slice(2 * self.n_coef + self.n, self.p)

    def split(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise ValueError(f"latent vector has shape {x.shape}, expected ({self.p},)")
        return LatentState(x[self.beta0], x[self.betaP], x[self.U0], x[self.UP])


@dataclass
class LatentState:
    beta0: np.ndarray
    betaP: np.ndarray
    U0: np.ndarray
    UP: np.ndarray

    def to_vector(self):
        return np.concatenate([self.beta0, self.betaP, self.U0, self.UP]).astype(float)

    @classmethod
    def zeros(cls, n, n_coef):
        return cls(np.zeros(n_coef), np.zeros(n_coef), np.zeros(n), np.zeros(n))


def linear_predictors(x, data):
    """Return ``(eta0, etaP)`` for each cell."""
    s = LatentLayout(data.n, data.n_coef).split(x)
    Z = data.covariates
    return Z @ s.beta0 + s.U0, Z @ s.betaP + s.UP


class HurdleLikelihood:
    """Log-likelihood of a :class:`Dataset` as a function of the latent vector."""

    def __init__(self, data):
        self.data = data
        self.layout = LatentLayout(data.n, data.n_coef)
        y = data.counts
        self._pos = y > 0
        self._const = float(np.sum(gammaln(y[self._pos] + 1.0)))

    @property
    def p(self):
        return self.layout.p

    def _etas(self, x):
        return linear_predictors(x, self.data)

    def loglik(self, x):
        eta0, etaP = self._etas(x)
        pos = self._pos
        y = self.data.counts
        lp = etaP[pos]
        lam = np.exp(np.minimum(lp, _LAMBDA_OVERFLOW))
        return float(
            -np.sum(np.logaddexp(0.0, eta0[~pos]))
            - np.sum(np.logaddexp(0.0, -eta0[pos]))
            + np.sum(y[pos] * lp)
            - np.sum(lam)
            - self._const
            - np.sum(log1mexp(lam))
        )

    def _score_terms(self, eta0, etaP):
        pos = self._pos
        # d/d eta0: 1/(1+e^eta0) for positives, -1/(1+e^-eta0) for zeros
        s0 = np.where(pos, expit(-eta0), -expit(eta0))
        lam = np.exp(np.minimum(etaP, _LAMBDA_OVERFLOW))
        sP = np.where(pos, self.data.counts - lam - lam * _inv_expm1(lam), 0.0)
        return s0, sP

    def grad(self, x):
        eta0, etaP = self._etas(x)
        s0, sP = self._score_terms(eta0, etaP)
        Z = self.data.covariates
        return np.concatenate([Z.T @ s0, Z.T @ sP, s0, sP])

    def _curvature_terms(self, eta0, etaP):
        w0 = -expit(eta0) * expit(-eta0)
        lam = np.exp(np.minimum(etaP, _LAMBDA_OVERFLOW))
        # minus the truncated-Poisson variance: m (1 + lam - m) = lam (1 + r)(1 - lam r), r = 1/expm1(lam)
        wP = -lam * (1.0 + _inv_expm1(lam)) * _one_minus_lam_r(lam)
        return w0, np.where(self._pos, wP, 0.0)

    def hess(self, x):
        eta0, etaP = self._etas(x)
        w0, wP = self._curvature_terms(eta0, etaP)
        return hessian_blocks(self.data.covariates, w0, wP)


def hessian_blocks(Z, w0, wP):
    """Assemble the sparse Hessian from per-cell curvatures of each part."""
    Z = np.asarray(Z, dtype=float)
    W0 = sp.diags(w0)
    WP = sp.diags(wP)
    ZW0 = W0 @ Z
    ZWP = WP @ Z
    B0 = Z.T @ ZW0
    BP = Z.T @ ZWP
    blocks = [
        [sp.csc_matrix(0.5 * (B0 + B0.T)), None, sp.csc_matrix(ZW0.T), None],
        [None, sp.csc_matrix(0.5 * (BP + BP.T)), None, sp.csc_matrix(ZWP.T)],
        [sp.csc_matrix(ZW0), None, W0, None],
        [None, sp.csc_matrix(ZWP), None, WP],
    ]
    return sp.bmat(blocks, format="csc")


def log_likelihood(x, data):
    return HurdleLikelihood(data).loglik(x)


def log_likelihood_grad(x, data):
    return HurdleLikelihood(data).grad(x)


def log_likelihood_hess(x, data):
    return HurdleLikelihood(data).hess(x)
