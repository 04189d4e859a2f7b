"""Sparse symmetric positive definite factorization.

SuperLU run in symmetric mode with diagonal pivoting disabled yields
``P A P^T = L D L^T`` (``L`` unit lower triangular, ``D`` the diagonal of
``U``).  All pivots are positive exactly when ``A`` is positive definite, so
this doubles as a Cholesky factorization with a fill-reducing ordering.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve_triangular

ORDERINGS = ("MMD_AT_PLUS_A", "NATURAL", "COLAMD", "MMD_ATA")


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix expected to be SPD has a non-positive pivot."""


class SparseCholesky:
    """Factorization of a sparse SPD matrix.

    Parameters
    ----------
    A : sparse matrix, shape (m, m)
        Symmetric positive definite matrix.
    ordering : str
        SuperLU column ordering; only affects fill-in, never returned values
        beyond rounding.
    """

    def __init__(self, A, ordering="MMD_AT_PLUS_A"):
        if ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {ordering!r}")
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        self.ordering = ordering
        try:
            self._lu = splu(
                A,
                permc_spec=ordering,
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:  # exactly singular
            raise NotPositiveDefiniteError(str(exc)) from exc
        d = self._lu.U.diagonal()
        if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
            raise NotPositiveDefiniteError(
                f"non-positive pivot {d.min():.3g} in Cholesky factorization"
            )
        self._d = d

    def logdet(self):
        """Log-determinant ``log |A|``."""
        return float(np.sum(np.log(self._d)))

    def solve(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))

    def inverse_diagonal(self):
        """Diagonal of ``A^{-1}`` by solving against every unit vector."""
        m = self.shape[0]
        out = np.empty(m)
        e = np.zeros(m)
        for j in range(m):
            e[j] = 1.0
            out[j] = self._lu.solve(e)[j]
            e[j] = 0.0
        return out

    def solve_upper_sqrt(self, z):
        """Return ``u`` with ``u ~ N(0, A^{-1})`` when ``z ~ N(0, I)``.

        With ``P A P^T = L D L^T`` this solves ``D^{1/2} L^T w = z`` and
        un-permutes, so ``Cov(u) = A^{-1}``.  ``z`` may hold one draw per column.
        """
        z = np.asarray(z, dtype=float)
        scale = np.sqrt(self._d) if z.ndim == 1 else np.sqrt(self._d)[:, None]
        U = sp.csr_matrix(self._lu.U)
        w = spsolve_triangular(U, scale * z, lower=False)
        # SuperLU factors A[q][:, q] with q = argsort(perm_c)
        return w[self._lu.perm_c]
