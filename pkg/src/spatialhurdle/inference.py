"""Empirical Bayes fitting: damped Newton for the conditional mode, the
Laplace-approximate log marginal posterior, and Nelder-Mead over log-hyperparameters."""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import norm

from .gmrf import BETA_PRIOR_PRECISION, Hyperparams, joint_precision
from .grid import build_laplacian
from .hurdle import Dataset, HurdleLikelihood, LatentLayout
from .sparse import NotPositiveDefiniteError, SparseCholesky

logger = logging.getLogger(__name__)


@dataclass
class NewtonSettings:
    """Controls for the damped Newton search of the conditional mode.

    ``check_gradient`` adds ``max|grad| < grad_tol`` to the norm-difference
    stopping rule; strict mode turns it off.
    """

    tolerance: float = 1e-7
    max_iterations: int = 100
    min_step: float = 2.0**-9
    grad_tol: float = 1e-4
    check_gradient: bool = True
    ordering: str = "MMD_AT_PLUS_A"
    initial_point: np.ndarray = None
    jitter_start: float = 1e-8
    jitter_tries: int = 6

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if not 0 < self.min_step <= 1:
            raise ValueError(f"min_step must lie in (0, 1], got {self.min_step}")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class NelderMeadSettings:
    tolerance: float = 1e-7
    max_iterations: int = 1000
    initial_step: float = 0.5
    warm_start: bool = True


@dataclass
class ModeResult:
    """Outcome of :func:`find_mode`.

    ``hessian`` is the negated Hessian of the log full conditional at ``x``
    (SPD at a proper mode) and ``chol`` its factorization.
    """

    x: np.ndarray
    hessian: sp.csc_matrix
    chol: SparseCholesky
    objective: float
    iterations: int
    converged: bool
    stalled: bool
    grad_norm: float
    trace: list = field(default_factory=list)
    jitter: float = 0.0

    def __iter__(self):
        # allows ``x_hat, H = find_mode(...)``
        return iter((self.x, self.hessian))


def _factor(H, settings):
    try:
        return SparseCholesky(H, settings.ordering), 0.0
    except NotPositiveDefiniteError:
        pass
    eye = sp.identity(H.shape[0], format="csc")
    jitter = settings.jitter_start
    for _ in range(settings.jitter_tries):
        try:
            return SparseCholesky(H + jitter * eye, settings.ordering), jitter
        except NotPositiveDefiniteError:
            jitter *= 10.0
    raise NotPositiveDefiniteError(
        f"negated Hessian not positive definite even with jitter {jitter / 10:.0e}"
    )


def find_mode(Q, likelihood, settings=None, x0=None):
    """Maximize ``log L(x) - x'Qx/2`` by damped Newton with step halving.

    Parameters
    ----------
    Q : sparse matrix, shape (p, p), or Hyperparams
        Prior precision of the latent vector.  Hyperparameters are turned
        into the joint precision on ``likelihood``'s grid.
    likelihood : object or Dataset
        Provides ``loglik(x)``, ``grad(x)`` and ``hess(x)`` (sparse).  A
        Dataset is wrapped in the hurdle likelihood.
    settings : NewtonSettings, optional
    x0 : array, optional
        Starting point; overrides ``settings.initial_point``.  Defaults to 0.
    """
    settings = settings or NewtonSettings()
    if isinstance(likelihood, Dataset):
        if isinstance(Q, Hyperparams):
            if likelihood.grid is None:
                raise ValueError("dataset has no grid to build the spatial prior")
            Q = joint_precision(Q, build_laplacian(likelihood.grid), likelihood.n_coef)
        likelihood = HurdleLikelihood(likelihood)
    p = Q.shape[0]
    if x0 is None:
        x0 = settings.initial_point
    x = np.zeros(p) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (p,):
        raise ValueError(f"initial point has shape {x.shape}, expected ({p},)")

    def objective(z):
        return likelihood.loglik(z) - 0.5 * float(z @ (Q @ z))

    def gradient(z):
        return likelihood.grad(z) - Q @ z

    obj = objective(x)
    if not np.isfinite(obj):
        raise ValueError("log full conditional is not finite at the initial point")
    g = gradient(x)
    trace = [obj]
    converged = stalled = False
    jitter = 0.0
    it = 0
    for it in range(1, int(settings.max_iterations) + 1):
        H = sp.csc_matrix(Q - likelihood.hess(x))
        chol, jitter = _factor(H, settings)
        step = chol.solve(g)
        alpha = 1.0
        x_new = x + step
        obj_new = objective(x_new)
        # step halving; NaN compares False so treat it as a decrease
        while not obj_new >= obj:
            if alpha <= settings.min_step:
                x_new, obj_new = x, obj
                stalled = True
                break
            alpha /= 2.0
            x_new = x + alpha * step
            obj_new = objective(x_new)
        g_new = gradient(x_new) if not stalled else g
        norm_ok = abs(np.linalg.norm(x_new) - np.linalg.norm(x)) < settings.tolerance
        grad_norm = float(np.max(np.abs(g_new))) if p else 0.0
        grad_ok = (not settings.check_gradient) or grad_norm < settings.grad_tol
        x, obj, g = x_new, obj_new, g_new
        trace.append(obj)
        if stalled:
            converged = grad_ok if settings.check_gradient else norm_ok
            break
        if norm_ok and grad_ok:
            converged = True
            break
    grad_norm = float(np.max(np.abs(g))) if p else 0.0
    H = sp.csc_matrix(Q - likelihood.hess(x))
    chol, jitter_final = _factor(H, settings)
    if not converged:
        logger.debug("Newton stopped after %d iterations, |grad|=%.3g", it, grad_norm)
    return ModeResult(
        x=x, hessian=H, chol=chol, objective=obj, iterations=it,
        converged=converged, stalled=stalled, grad_norm=grad_norm,
        trace=trace, jitter=max(jitter, jitter_final),
    )


def laplace_log_marginal(Q, likelihood, settings=None, x0=None, prior_chol=None):
    """Laplace approximation to ``log f(theta | y)`` under a flat hyperprior.

    Returns ``(value, mode)``.
    """
    mode = find_mode(Q, likelihood, settings, x0)
    if prior_chol is None:
        prior_chol = SparseCholesky(Q, (settings or NewtonSettings()).ordering)
    x = mode.x
    # log f(x|theta) = 1/2 logdet Q - p/2 log 2pi - 1/2 x'Qx
    # log f_G(x|theta,y) at its own mean = -p/2 log 2pi + 1/2 logdet H
    # the 2pi terms cancel; log f(theta) = 0
    value = (
        0.5 * prior_chol.logdet()
        - 0.5 * float(x @ (Q @ x))
        + likelihood.loglik(x)
        - 0.5 * mode.chol.logdet()
    )
    return value, mode


class MarginalPosterior:
    """Callable ``theta -> log f~(theta | y)`` for one dataset.

    With ``warm_start`` each inner Newton search starts at the mode found by
    the previous evaluation instead of zero.
    """

    def __init__(self, data, grid=None, settings=None, warm_start=False,
                 beta_precision=BETA_PRIOR_PRECISION, likelihood=None):
        self.data = data
        grid = grid if grid is not None else data.grid
        if grid is None:
            raise ValueError("a grid is required to build the spatial prior")
        self.grid = grid
        self.G = build_laplacian(grid)
        self.settings = settings or NewtonSettings()
        self.warm_start = warm_start
        self.beta_precision = beta_precision
        self.likelihood = likelihood if likelihood is not None else HurdleLikelihood(data)
        self.n_coef = data.n_coef
        self.n_evals = 0
        self.newton_iterations = 0
        self._last_x = None

    def precision(self, theta):
        return joint_precision(theta, self.G, self.n_coef, self.beta_precision)

    def evaluate(self, theta):
        Q = self.precision(theta)
        x0 = self._last_x if self.warm_start else None
        value, mode = laplace_log_marginal(Q, self.likelihood, self.settings, x0)
        self.n_evals += 1
        self.newton_iterations += mode.iterations
        if self.warm_start:
            self._last_x = mode.x
        return value, mode

    def __call__(self, theta):
        return self.evaluate(theta)[0]


def log_marginal_posterior(theta, data, settings=None, grid=None, beta_precision=BETA_PRIOR_PRECISION):
    """Laplace-approximate log marginal posterior of ``theta`` (cold start)."""
    if not isinstance(theta, Hyperparams):
        theta = Hyperparams(*theta)
    return MarginalPosterior(data, grid, settings, beta_precision=beta_precision)(theta)


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    n_iter: int
    n_fev: int
    converged: bool
    spread: float
    diameter: float


def nelder_mead(fun, x0, initial_step=0.5, tolerance=1e-7, max_iterations=1000):
    """Minimize ``fun`` with the downhill simplex method.

    Coefficients are reflection 1, expansion 2, contraction 1/2, shrink 1/2.
    The initial simplex is ``x0`` plus ``x0 + initial_step * e_j``.  Stops
    when the spread of objective values over the simplex drops below
    ``tolerance``.  Non-finite objective values are treated as ``+inf``.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    n_fev = 0

    def f(z):
        nonlocal n_fev
        n_fev += 1
        v = fun(z)
        return v if np.isfinite(v) else np.inf

    sim = np.vstack([x0] + [x0 + initial_step * e for e in np.eye(d)])
    fs = np.array([f(v) for v in sim])
    if not np.isfinite(fs[0]):
        raise ValueError("objective is not finite at the initial point")
    it = 0
    converged = False
    while it < max_iterations:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if fs[-1] - fs[0] < tolerance:
            converged = True
            break
        it += 1
        c = sim[:-1].mean(axis=0)
        xr = c + (c - sim[-1])
        fr = f(xr)
        if fr < fs[0]:
            xe = c + 2.0 * (c - sim[-1])
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = c + 0.5 * (xr - c)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = c + 0.5 * (sim[-1] - c)
            fc = f(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        for j in range(1, d + 1):
            sim[j] = sim[0] + 0.5 * (sim[j] - sim[0])
            fs[j] = f(sim[j])
    order = np.argsort(fs, kind="stable")
    sim, fs = sim[order], fs[order]
    diameter = max(np.linalg.norm(a - b) for a in sim for b in sim)
    return SimplexResult(sim[0], float(fs[0]), it, n_fev, converged,
                         float(fs[-1] - fs[0]), float(diameter))


@dataclass
class FitResult:
    theta_hat: Hyperparams
    x_hat: np.ndarray
    hessian_at_mode: sp.csc_matrix
    log_marginal_posterior: float
    std_errors: np.ndarray
    convergence_report: dict
    layout: LatentLayout
    names: tuple
    factor: SparseCholesky = field(default=None, repr=False)

    @property
    def converged(self):
        r = self.convergence_report
        return bool(r["simplex_converged"] and r["newton_converged"])

    @property
    def beta0(self):
        return self.x_hat[self.layout.beta0]

    @property
    def betaP(self):
        return self.x_hat[self.layout.betaP]

    @property
    def U0(self):
        return self.x_hat[self.layout.U0]

    @property
    def UP(self):
        return self.x_hat[self.layout.UP]

    def coefficient_labels(self):
        return [f"beta0_{nm}" for nm in self.names] + [f"betaP_{nm}" for nm in self.names]


def maximize_marginal(data, init=None, nm_settings=None, newton_settings=None,
                      grid=None, beta_precision=BETA_PRIOR_PRECISION):
    """Empirical Bayes fit: maximize the Laplace marginal over log-hyperparameters."""
    nm_settings = nm_settings or NelderMeadSettings()
    newton_settings = newton_settings or NewtonSettings()
    if init is None:
        init = Hyperparams(1.0, 1.0, 1.0, 1.0)
    elif not isinstance(init, Hyperparams):
        init = Hyperparams(*init)
    post = MarginalPosterior(data, grid, newton_settings, nm_settings.warm_start, beta_precision)

    def neg(log_theta):
        try:
            theta = Hyperparams.from_log(log_theta)
            return -post(theta)
        except (ValueError, NotPositiveDefiniteError, FloatingPointError):
            return np.inf

    init_value = post(init)
    if not np.isfinite(init_value):
        raise ValueError("log marginal posterior is not finite at the initial hyperparameters")
    simplex = nelder_mead(neg, init.to_log(), nm_settings.initial_step,
                          nm_settings.tolerance, nm_settings.max_iterations)
    theta_hat = Hyperparams.from_log(simplex.x)
    value, mode = post.evaluate(theta_hat)
    std_errors = np.sqrt(mode.chol.inverse_diagonal())
    report = dict(
        simplex_converged=simplex.converged,
        simplex_iterations=simplex.n_iter,
        objective_evaluations=post.n_evals,
        newton_iterations_total=post.newton_iterations,
        simplex_spread=simplex.spread,
        simplex_diameter=simplex.diameter,
        newton_converged=mode.converged,
        newton_iterations_final=mode.iterations,
        newton_stalled=mode.stalled,
        gradient_norm=mode.grad_norm,
        hessian_jitter=mode.jitter,
        initial_log_marginal=init_value,
    )
    return FitResult(theta_hat, mode.x, mode.hessian, value, std_errors, report,
                     LatentLayout(data.n, data.n_coef), data.names, mode.chol)


def coefficient_covariance(fit):
    """Posterior covariance of ``(beta0, betaP)`` from the Hessian at the mode."""
    factor = fit.factor if fit.factor is not None else SparseCholesky(fit.hessian_at_mode)
    m = 2 * fit.layout.n_coef
    cols = []
    for j in range(m):
        e = np.zeros(fit.layout.p)
        e[j] = 1.0
        cols.append(factor.solve(e)[:m])
    C = np.column_stack(cols)
    return 0.5 * (C + C.T)


@dataclass
class Intervals:
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def significant(self):
        return (self.lower > 0) | (self.upper < 0)


def normal_intervals(estimate, std_errors, alpha=0.05):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    estimate = np.asarray(estimate, dtype=float)
    std_errors = np.asarray(std_errors, dtype=float)
    return Intervals(
        estimate,
        estimate + norm.ppf(alpha / 2) * std_errors,
        estimate + norm.ppf(1 - alpha / 2) * std_errors,
    )


def confidence_intervals(fit, alpha=0.05):
    """Equal-tail asymptotic normal intervals for every latent coordinate."""
    return normal_intervals(fit.x_hat, fit.std_errors, alpha)
