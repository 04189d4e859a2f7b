"""Input checks shared by the estimator and the command line."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .gmrf import Hyperparams


def check_counts(y):
    """Return ``y`` as an int64 vector of nonnegative integers."""
    y = np.asarray(y)
    if y.ndim != 1:
        y = y.ravel() if y.ndim == 2 and 1 in y.shape else y
    if y.ndim != 1:
        raise ValueError(f"counts must be a 1-d vector, got shape {np.shape(y)}")
    if not np.issubdtype(y.dtype, np.number):
        raise ValueError("counts must be numeric")
    yf = y.astype(float)
    if not np.all(np.isfinite(yf)):
        raise ValueError("counts contain non-finite values")
    if np.any(yf < 0):
        raise ValueError("counts must be nonnegative")
    if np.any(yf != np.round(yf)):
        raise ValueError("counts must be integers")
    return yf.astype(np.int64)


def check_hyperparams(theta):
    if isinstance(theta, Hyperparams):
        return theta
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != 4:
        raise ValueError(f"expected 4 hyperparameters (kappa0, tau0, kappaP, tauP), got {theta.size}")
    return Hyperparams(*theta)


def check_design(X, n_cells=None, fit_intercept=True):
    """Validate a covariate matrix and prepend the intercept column."""
    X = check_array(X, ensure_min_features=0, dtype=float)
    if n_cells is not None and X.shape[0] != n_cells:
        raise ValueError(
            f"X has {X.shape[0]} rows but the grid has {n_cells} unmasked cells; "
            "rows must follow the grid's row-major cell order"
        )
    if fit_intercept:
        return np.column_stack([np.ones(X.shape[0]), X])
    if X.shape[1] == 0 or not np.all(X[:, 0] == 1.0):
        raise ValueError("with fit_intercept=False the first column of X must be all ones")
    return X


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)
