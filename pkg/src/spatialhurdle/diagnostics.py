"""In-sample model checks: ROC/AUC for the hurdle part, Pearson residuals for counts,
and per-cell prediction surfaces."""

from dataclasses import dataclass

import numpy as np

from .hurdle import _one_minus_lam_r, expected_count, linear_predictors, link_lambda, link_pi


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_curve(prob_positive, counts):
    """ROC of predicted occurrence probabilities against the event ``y > 0``.

    A cell is called positive at threshold ``t`` when its probability is
    strictly greater than ``t``.  Thresholds are the distinct probabilities
    together with 0 and 1, in descending order; AUC is the trapezoidal area.
    """
    prob = np.asarray(prob_positive, dtype=float)
    y = np.asarray(counts)
    if prob.shape != y.shape or prob.ndim != 1:
        raise ValueError(f"probabilities {prob.shape} and counts {y.shape} must be equal-length vectors")
    if np.any(~np.isfinite(prob)) or np.any((prob < 0) | (prob > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    pos = y > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0:
        raise ValueError("degenerate labels: no cell has a positive count")
    if n_neg == 0:
        raise ValueError("degenerate labels: every cell has a positive count")
    thresholds = np.unique(np.concatenate([prob, [0.0, 1.0]]))[::-1]
    if prob.min() == 0.0:
        # strict '>' would never admit zero-probability cells
        thresholds = np.append(thresholds, np.nextafter(0.0, -1.0))
    # cumulative counts of cells with prob > t, via sorted search
    p_pos = np.sort(prob[pos])
    p_neg = np.sort(prob[~pos])
    tpr = (n_pos - np.searchsorted(p_pos, thresholds, side="right")) / n_pos
    fpr = (n_neg - np.searchsorted(p_neg, thresholds, side="right")) / n_neg
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, fpr, tpr, auc)


def pearson_residuals_from_predictors(counts, eta0, etaP):
    """Pearson residuals with the variance proxy ``yhat (1 - yhat exp(-lam))``.

    ``yhat exp(-lam) = pi lam / (exp(lam) - 1)``, so the bracket is evaluated
    as ``(1 - pi) + pi (1 - lam / expm1(lam))`` to avoid cancellation.  Cells
    whose radicand is not positive are masked in the returned
    :class:`numpy.ma.MaskedArray`.
    """
    y = np.asarray(counts, dtype=float)
    eta0 = np.asarray(eta0, dtype=float)
    yhat = np.asarray(expected_count(eta0, etaP), dtype=float)
    pi = link_pi(eta0)
    bracket = link_pi(-eta0) + pi * _one_minus_lam_r(link_lambda(etaP))
    radicand = yhat * bracket
    undefined = ~(radicand > 0)
    r = np.zeros_like(y)
    ok = ~undefined
    r[ok] = (y[ok] - yhat[ok]) / np.sqrt(radicand[ok])
    return np.ma.MaskedArray(r, mask=undefined)


def pearson_residuals(fit, data):
    """Pearson residuals of a fitted model (``fit.x_hat`` or a latent vector)."""
    x = getattr(fit, "x_hat", fit)
    eta0, etaP = linear_predictors(x, data)
    return pearson_residuals_from_predictors(data.counts, eta0, etaP)


@dataclass
class Surfaces:
    rows: np.ndarray
    cols: np.ndarray
    pi: np.ndarray
    lam: np.ndarray
    expected: np.ndarray


def prediction_surfaces(fit, data):
    """Per-cell occurrence probability, count rate and expected count."""
    x = getattr(fit, "x_hat", fit)
    eta0, etaP = linear_predictors(x, data)
    if data.grid is not None:
        rows, cols = data.grid.cells[:, 0], data.grid.cells[:, 1]
    else:
        rows, cols = np.arange(data.n), np.zeros(data.n, dtype=np.int64)
    return Surfaces(rows, cols, link_pi(eta0), link_lambda(etaP),
                    np.asarray(expected_count(eta0, etaP), dtype=float))


def summarize(fit, data):
    """Headline numbers: AUC, residual mean over positive cells, undefined residual count."""
    x = getattr(fit, "x_hat", fit)
    eta0, etaP = linear_predictors(x, data)
    r = pearson_residuals(x, data)
    pos = data.counts > 0
    out = {"n_cells": data.n, "n_positive": int(pos.sum()), "undefined_residuals": int(r.mask.sum())}
    out["mean_residual_positive"] = float(r[pos].mean()) if pos.any() and r[pos].count() else float("nan")
    try:
        out["auc"] = roc_curve(link_pi(eta0), data.counts).auc
    except ValueError:
        out["auc"] = float("nan")
    return out
