"""Linear operators ``R^p -> R^n`` used as regression design matrices.

Every operator offers a forward product, an adjoint product, column squared
norms and single-column access, and counts the products it performs (and the
time spent in them) so callers can report matvec cost.
"""
from __future__ import annotations

import time

import numpy as np
from scipy.special import comb

from .errors import DomainError


class DesignOperator:
    """Base class; subclasses implement ``_matvec`` and ``_rmatvec``."""

    kind = "abstract"

    def __init__(self, shape):
        self.shape = (int(shape[0]), int(shape[1]))
        self.reset_counters()

    def reset_counters(self):
        self.n_matvec = 0
        self.n_rmatvec = 0
        self.matvec_seconds = 0.0

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.shape[1],):
            raise DomainError(f"matvec expects a vector of length {self.shape[1]}, got {v.shape}")
        t0 = time.perf_counter()
        out = self._matvec(v)
        self.matvec_seconds += time.perf_counter() - t0
        self.n_matvec += 1
        return out

    def rmatvec(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.shape[0],):
            raise DomainError(f"rmatvec expects a vector of length {self.shape[0]}, got {w.shape}")
        t0 = time.perf_counter()
        out = self._rmatvec(w)
        self.matvec_seconds += time.perf_counter() - t0
        self.n_rmatvec += 1
        return out

    def column_sq_norms(self) -> np.ndarray:
        raise NotImplementedError

    def column(self, j: int) -> np.ndarray:
        e = np.zeros(self.shape[1])
        e[j] = 1.0
        return self._matvec(e)

    def todense(self) -> np.ndarray:
        return np.column_stack([self.column(j) for j in range(self.shape[1])])


class DenseOperator(DesignOperator):
    kind = "dense"

    def __init__(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2:
            raise DomainError("design matrix must be two-dimensional")
        self.X = X
        super().__init__(X.shape)

    def _matvec(self, v):
        return self.X @ v

    def _rmatvec(self, w):
        return self.X.T @ w

    def column_sq_norms(self):
        return np.einsum("ij,ij->j", self.X, self.X)

    def column(self, j):
        return self.X[:, j]

    def todense(self):
        return self.X


def _tf_sq_norms(n: int, k: int) -> np.ndarray:
    # column j (0-based) holds C(m + k, k) for m = 0..n-1-j
    m = np.arange(n, dtype=float)
    sq = comb(m + k, k, exact=False) ** 2
    return np.cumsum(sq)[::-1].copy()


class TrendFilterOperator(DesignOperator):
    """``H^(k+1)``: the (k+1)-fold composition of the cumulative-sum matrix.

    Column ``j`` is a degree-``k`` piecewise polynomial starting at row
    ``j``. With ``scaled=True`` the columns are rescaled so they all share
    the largest column norm (that of the first column).
    """

    kind = "trendfilter"

    def __init__(self, n: int, k: int = 0, scaled: bool = False):
        if k not in (0, 1, 2):
            raise DomainError(f"trend-filter order must be 0, 1 or 2, got {k!r}")
        if n < k + 2:
            raise DomainError(f"trend filtering of order {k} needs n >= {k + 2}")
        super().__init__((n, n))
        self.k = k
        self.scaled = bool(scaled)
        norms = _tf_sq_norms(n, k)
        if self.scaled:
            self.scale = np.sqrt(norms.max() / norms)
            self._sq_norms = np.full(n, norms.max())
        else:
            self.scale = None
            self._sq_norms = norms

    def _matvec(self, v):
        if self.scale is not None:
            v = v * self.scale
        out = np.cumsum(v)
        for _ in range(self.k):
            out = np.cumsum(out)
        return out

    def _rmatvec(self, w):
        out = np.cumsum(w[::-1])
        for _ in range(self.k):
            out = np.cumsum(out)
        out = out[::-1].copy()
        if self.scale is not None:
            out *= self.scale
        return out

    def column_sq_norms(self):
        return self._sq_norms.copy()

    def column(self, j):
        n = self.shape[0]
        col = np.zeros(n)
        col[j:] = comb(np.arange(n - j) + self.k, self.k, exact=False)
        if self.scale is not None:
            col *= self.scale[j]
        return col


def tf_operator(n: int, k: int = 0, scaled: bool = False) -> TrendFilterOperator:
    return TrendFilterOperator(n, k, scaled)


def dense_tf_matrix(n: int, k: int = 0) -> np.ndarray:
    """Explicit ``H^(k+1)`` built as a power of the lower-triangular ones matrix."""
    H1 = np.tril(np.ones((n, n)))
    return np.linalg.matrix_power(H1, k + 1)


def matvec(A: DesignOperator, v):
    return A.matvec(v)


def rmatvec(A: DesignOperator, w):
    return A.rmatvec(w)


def column_sq_norms(A: DesignOperator):
    return A.column_sq_norms()
