"""Synthetic data from the full generative model: GMRF fields, then hurdle counts.

Random streams are keyed by ``(seed, purpose[, cell])`` through
``numpy.random.SeedSequence`` so every draw is reproducible independently of
evaluation order.
"""

from dataclasses import dataclass, field

import numpy as np

from .gmrf import Hyperparams, build_Q_block
from .grid import GridSpec, build_laplacian
from .hurdle import Dataset, LatentState, link_lambda, link_pi
from .sparse import SparseCholesky

_COVARIATES, _FIELD_ZERO, _FIELD_COUNT, _COUNTS = range(4)
# below this rate zeros are rejected too often; invert the CDF instead
_SMALL_RATE = 1e-4


def keyed_rng(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def _as_rng(seed, *key):
    if isinstance(seed, np.random.Generator):
        return seed
    return keyed_rng(seed, *key)


def sample_gmrf(theta_pair, grid, seed, G=None, size=None):
    """Draw ``u ~ MVN(0, Q^{-1})`` with ``Q = tau (kappa^2 I + G)``.

    With ``size`` the result has shape ``(size, n)``, one draw per row.
    """
    G = build_laplacian(grid) if G is None else G
    chol = SparseCholesky(build_Q_block(theta_pair, G))
    rng = _as_rng(seed, _FIELD_ZERO)
    if size is None:
        return chol.solve_upper_sqrt(rng.standard_normal(grid.n))
    return chol.solve_upper_sqrt(rng.standard_normal((int(size), grid.n)).T).T


def _zero_truncated_poisson(rng, lam):
    if lam < _SMALL_RATE:
        u = rng.random()
        prob = lam / np.expm1(lam)
        y, cdf = 1, prob
        while u > cdf and prob > 0:
            prob *= lam / (y + 1)
            y += 1
            cdf += prob
        return y
    while True:
        y = rng.poisson(lam)
        if y > 0:
            return int(y)


def sample_counts(x, covariates, seed):
    """Hurdle counts for latent vector ``x`` and design ``covariates`` (n x (k+1))."""
    Z = np.asarray(covariates, dtype=float)
    n, n_coef = Z.shape
    x = np.asarray(x, dtype=float)
    if x.shape != (2 * (n + n_coef),):
        raise ValueError(f"latent vector length {x.size} does not match design {Z.shape}")
    beta0, betaP = x[:n_coef], x[n_coef:2 * n_coef]
    U0, UP = x[2 * n_coef:2 * n_coef + n], x[2 * n_coef + n:]
    pi = link_pi(Z @ beta0 + U0)
    lam = link_lambda(Z @ betaP + UP)
    y = np.zeros(n, dtype=np.int64)
    for i in range(n):
        rng = keyed_rng(seed, _COUNTS, i)
        if rng.random() < pi[i]:
            y[i] = _zero_truncated_poisson(rng, lam[i])
    return y


@dataclass
class SimConfig:
    """Generative settings.

    ``covariates`` is ``"uniform"`` (iid U(low, high) per covariate),
    ``"constant"`` (all equal to ``low``) or an array of shape ``(n, k)``
    without the intercept column.
    """

    n_rows: int
    n_cols: int
    beta0: tuple
    betaP: tuple
    theta: Hyperparams
    covariates: object = "uniform"
    low: float = -1.0
    high: float = 1.0
    seed: int = 0
    mask: np.ndarray = None
    names: tuple = field(default=None)

    def __post_init__(self):
        self.beta0 = np.asarray(self.beta0, dtype=float)
        self.betaP = np.asarray(self.betaP, dtype=float)
        if self.beta0.shape != self.betaP.shape or self.beta0.ndim != 1 or self.beta0.size < 1:
            raise ValueError("beta0 and betaP must be equal-length 1-d vectors")
        if not isinstance(self.theta, Hyperparams):
            self.theta = Hyperparams(*self.theta)

    @property
    def k(self):
        return self.beta0.size - 1


def simulate(config):
    """Return ``(dataset, x_true)`` drawn from the model defined by ``config``."""
    grid = GridSpec(config.n_rows, config.n_cols, config.mask)
    n, k = grid.n, config.k
    cov = config.covariates
    if isinstance(cov, str):
        if cov == "uniform":
            X = keyed_rng(config.seed, _COVARIATES).uniform(config.low, config.high, size=(n, k))
        elif cov == "constant":
            X = np.full((n, k), float(config.low))
        else:
            raise ValueError(f"unknown covariate generator {cov!r}")
    else:
        X = np.asarray(cov, dtype=float)
        if X.shape != (n, k):
            raise ValueError(f"supplied covariates have shape {X.shape}, expected ({n}, {k})")
    Z = np.column_stack([np.ones(n), X])
    G = build_laplacian(grid)
    U0 = sample_gmrf(config.theta.zero_pair, grid, keyed_rng(config.seed, _FIELD_ZERO), G)
    UP = sample_gmrf(config.theta.count_pair, grid, keyed_rng(config.seed, _FIELD_COUNT), G)
    x = LatentState(config.beta0, config.betaP, U0, UP).to_vector()
    y = sample_counts(x, Z, config.seed)
    names = config.names
    if names is None:
        names = ("intercept",) + tuple(f"x{j}" for j in range(1, k + 1))
    return Dataset(y, Z, grid, names), x
