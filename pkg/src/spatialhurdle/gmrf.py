"""GMRF precision matrices and the Gaussian prior on the stacked latent vector."""

from dataclasses import astuple, dataclass

import numpy as np
import scipy.sparse as sp

from .grid import build_laplacian
from .sparse import NotPositiveDefiniteError, SparseCholesky

BETA_PRIOR_PRECISION = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Hyperparams:
    """Precision hyperparameters ``(kappa, tau)`` of the hurdle and count fields."""

    kappa0: float
    tau0: float
    kappaP: float
    tauP: float

    def __post_init__(self):
        for name, value in zip(("kappa0", "tau0", "kappaP", "tauP"), astuple(self)):
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
            object.__setattr__(self, name, float(value))

    @property
    def zero_pair(self):
        return (self.kappa0, self.tau0)

    @property
    def count_pair(self):
        return (self.kappaP, self.tauP)

    def to_log(self):
        return np.log(np.array(astuple(self)))

    @classmethod
    def from_log(cls, log_theta):
        return cls(*np.exp(np.asarray(log_theta, dtype=float)))

    def as_array(self):
        return np.array(astuple(self))


def _check_pair(theta_pair):
    kappa, tau = theta_pair
    if not (np.isfinite(kappa) and kappa > 0):
        raise ValueError(f"kappa must be positive and finite, got {kappa!r}")
    if not (np.isfinite(tau) and tau > 0):
        raise ValueError(f"tau must be positive and finite, got {tau!r}")
    return float(kappa), float(tau)


def build_Q_block(theta_pair, G):
    """``tau * (kappa^2 I + G)`` in CSC format."""
    kappa, tau = _check_pair(theta_pair)
    n = G.shape[0]
    return sp.csc_matrix(tau * (kappa**2 * sp.identity(n, format="csc") + G))


def joint_precision(theta, G, n_coef, beta_precision=BETA_PRIOR_PRECISION):
    """Block-diagonal prior precision over ``(beta0, betaP, U0, UP)``.

    ``n_coef`` is the number of regression coefficients per part (``k + 1``).
    """
    beta_block = sp.identity(n_coef, format="csc") * beta_precision
    return sp.block_diag(
        [beta_block, beta_block, build_Q_block(theta.zero_pair, G), build_Q_block(theta.count_pair, G)],
        format="csc",
    )


def log_prior_density(x, Q, chol=None):
    """Log density of ``MVN(0, Q^{-1})`` at ``x``.

    ``chol`` may carry an existing factorization of ``Q`` to avoid refactoring.
    """
    x = np.asarray(x, dtype=float)
    p = Q.shape[0]
    if x.shape != (p,):
        raise ValueError(f"x has shape {x.shape}, expected ({p},)")
    if chol is None:
        chol = SparseCholesky(Q)
    return 0.5 * chol.logdet() - 0.5 * p * LOG_2PI - 0.5 * float(x @ (Q @ x))


def prior_grad_hess(x, Q):
    """Gradient ``-Q x`` and (constant) Hessian ``-Q`` of the log prior."""
    x = np.asarray(x, dtype=float)
    if x.shape != (Q.shape[0],):
        raise ValueError(f"x has shape {x.shape}, expected ({Q.shape[0]},)")
    return -(Q @ x), -Q


def conditional_moments(i, u, theta_pair, grid):
    """Mean and variance of field value ``i`` given all the others."""
    kappa, tau = _check_pair(theta_pair)
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n,):
        raise ValueError(f"field has shape {u.shape}, expected ({grid.n},)")
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite values")
    nb = grid.neighbors(i)
    denom = kappa**2 + len(nb)
    return float(u[nb].sum()) / denom, 1.0 / (denom * tau)


__all__ = [
    "BETA_PRIOR_PRECISION",
    "Hyperparams",
    "NotPositiveDefiniteError",
    "build_Q_block",
    "build_laplacian",
    "conditional_moments",
    "joint_precision",
    "log_prior_density",
    "prior_grad_hess",
]
