import numpy as np
import pytest
import scipy.sparse as sp

from spatialhurdle.grid import GridSpec
from spatialhurdle.hurdle import Dataset


def random_instance(rng, n_max=6, k_max=2, x_range=2.0):
    """Random small dataset on a grid plus a latent vector with entries in [-x_range, x_range]."""
    rows = int(rng.integers(1, 3))
    cols = int(rng.integers(1, n_max // rows + 1))
    grid = GridSpec(rows, cols)
    n = grid.n
    k = int(rng.integers(0, k_max + 1))
    Z = np.column_stack([np.ones(n), rng.uniform(-1.5, 1.5, size=(n, k))])
    y = rng.integers(0, 6, size=n) * (rng.uniform(size=n) < 0.6)
    data = Dataset(y, Z, grid)
    x = rng.uniform(-x_range, x_range, size=data.p)
    return data, x


def central_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def central_jacobian(f, x, h=1e-6):
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def max_relative_error(approx, exact):
    """Largest ``|a - b| / max(|b|, 1)``; the unit floor keeps near-zero entries meaningful."""
    approx, exact = np.asarray(approx), np.asarray(exact)
    return float(np.max(np.abs(approx - exact) / np.maximum(np.abs(exact), 1.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


class GaussianLikelihood:
    """Conjugate stand-in for the hurdle likelihood: ``y = A x + noise``.

    ``A = [[Z, 0, I, 0], [0, Z, 0, I]]`` maps the latent vector onto both
    linear predictors, so the Laplace approximation is exact.
    """

    def __init__(self, Z, y, noise_sd=0.7):
        Z = np.asarray(Z, dtype=float)
        n, k1 = Z.shape
        I = sp.identity(n, format="csc")
        zero_z = sp.csc_matrix((n, k1))
        zero_i = sp.csc_matrix((n, n))
        Zs = sp.csc_matrix(Z)
        self.A = sp.bmat([[Zs, zero_z, I, zero_i], [zero_z, Zs, zero_i, I]], format="csc")
        self.y = np.asarray(y, dtype=float)
        self.s2 = noise_sd**2

    def loglik(self, x):
        r = self.y - self.A @ x
        return float(-0.5 * r @ r / self.s2 - 0.5 * r.size * np.log(2 * np.pi * self.s2))

    def grad(self, x):
        return self.A.T @ (self.y - self.A @ x) / self.s2

    def hess(self, x):
        return sp.csc_matrix(-(self.A.T @ self.A) / self.s2)

    def closed_form_log_marginal(self, Q):
        """``log N(y; 0, A Q^-1 A' + s^2 I)`` computed densely."""
        A = self.A.toarray()
        S = A @ np.linalg.inv(Q.toarray()) @ A.T + self.s2 * np.eye(A.shape[0])
        sign, logdet = np.linalg.slogdet(S)
        assert sign > 0
        quad = self.y @ np.linalg.solve(S, self.y)
        return float(-0.5 * (logdet + quad + self.y.size * np.log(2 * np.pi)))


class ZeroLikelihood:
    """No data at all: the full conditional is the prior."""

    def __init__(self, p):
        self.p = p

    def loglik(self, x):
        return 0.0

    def grad(self, x):
        return np.zeros(self.p)

    def hess(self, x):
        return sp.csc_matrix((self.p, self.p))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(RESULTS):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:>2}. {title}: {detail}")
