"""Exact and incomplete Cholesky factorizations."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .sparse import as_csr, triangular_solve

__all__ = [
    "NotPositiveDefiniteError",
    "LowerFactor",
    "chol_tridiag",
    "ichol_threshold",
    "ichol_shifted",
    "chol_dense",
    "SPDSolver",
]

log = logging.getLogger(__name__)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Non-positive pivot met during a Cholesky-type factorization."""

    def __init__(self, index, what="matrix"):
        self.index = int(index)
        super().__init__(f"{what} is not positive definite: pivot {self.index} <= 0")


@dataclass
class LowerFactor:
    """Lower triangular ``L`` with ``L L^T`` approximating an SPD matrix.

    ``kind`` is one of ``"exact-cholesky"``, ``"bidiagonal-cholesky"`` or
    ``"incomplete-cholesky"`` (``tau`` then holds the drop tolerance).
    """

    L: sp.csr_matrix
    kind: str
    tau: float = 0.0
    shift: float = 0.0
    _Lt: sp.csr_matrix = field(default=None, repr=False)

    def __post_init__(self):
        self.L = as_csr(self.L)
        self._Lt = as_csr(self.L.T)

    @property
    def nnz(self):
        return self.L.nnz

    def solve_lower(self, b):
        return triangular_solve(self.L, b, "lower")

    def solve_upper(self, b):
        """Solve ``L^T x = b``."""
        return triangular_solve(self._Lt, b, "upper")

    def solve(self, b):
        """Apply ``(L L^T)^{-1}``."""
        return self.solve_upper(self.solve_lower(b))


def chol_tridiag(T):
    """Bidiagonal Cholesky factor of a symmetric positive definite tridiagonal matrix."""
    T = sp.csr_matrix(T)
    k = T.shape[0]
    if T.shape != (k, k):
        raise ValueError("chol_tridiag needs a square matrix")
    coo = T.tocoo()
    if np.any(np.abs(coo.row - coo.col) > 1):
        raise ValueError("chol_tridiag needs a tridiagonal matrix")
    d = T.diagonal()
    e = T.diagonal(-1)
    diag = np.empty(k)
    sub = np.empty(max(k - 1, 0))
    piv = d[0]
    for i in range(k):
        if i > 0:
            sub[i - 1] = e[i - 1] / diag[i - 1]
            piv = d[i] - sub[i - 1] ** 2
        if not piv > 0.0:
            raise NotPositiveDefiniteError(i, "tridiagonal matrix")
        diag[i] = np.sqrt(piv)
    L = sp.diags([diag, sub], [0, -1], shape=(k, k), format="csr")
    return LowerFactor(L, "bidiagonal-cholesky")


def ichol_threshold(Msym, tau, drop="relative"):
    """Threshold incomplete Cholesky, left-looking by columns.

    Entries of column ``j`` of ``L`` smaller in magnitude than ``tau`` times
    the 2-norm of column ``j`` of ``Msym`` (``drop="relative"``), or than
    ``tau`` itself (``drop="absolute"``), are discarded; the diagonal is
    always kept.  ``tau = 0`` gives the exact Cholesky factor.

    Raises :class:`NotPositiveDefiniteError` carrying the column on a
    non-positive pivot.
    """
    if tau < 0:
        raise ValueError("drop tolerance must be non-negative")
    M = sp.csc_matrix(Msym, dtype=np.float64)
    M.sum_duplicates()
    M.sort_indices()
    k = M.shape[0]
    if M.shape != (k, k):
        raise ValueError("ichol_threshold needs a square matrix")
    if drop == "relative":
        thresh = tau * np.sqrt(np.asarray(M.multiply(M).sum(axis=0)).ravel())
    elif drop == "absolute":
        thresh = np.full(k, float(tau))
    else:
        raise ValueError(f"unknown drop rule {drop!r}")

    col_rows = [None] * k      # row indices of L[:, j], ascending, diagonal first
    col_vals = [None] * k
    ptr = np.zeros(k, dtype=np.int64)
    row_cols = [[] for _ in range(k)]   # row_cols[i]: columns q < i with L[i, q] != 0
    indptr, indices, data = M.indptr, M.indices, M.data

    for j in range(k):
        lo, hi = indptr[j], indptr[j + 1]
        r0 = indices[lo:hi]
        keep = r0 >= j
        rows_parts = [r0[keep]]
        vals_parts = [data[lo:hi][keep]]
        for q in row_cols[j]:
            pos = ptr[q]
            rq, vq = col_rows[q], col_vals[q]
            ljq = vq[pos]
            rows_parts.append(rq[pos:])
            vals_parts.append(-ljq * vq[pos:])
            ptr[q] = pos + 1
        rows = np.concatenate(rows_parts)
        vals = np.concatenate(vals_parts)
        urows, inv = np.unique(rows, return_inverse=True)
        acc = np.bincount(inv, weights=vals, minlength=urows.size)
        if urows.size == 0 or urows[0] != j or not acc[0] > 0.0:
            raise NotPositiveDefiniteError(j, "incomplete factorization")
        ljj = np.sqrt(acc[0])
        off = acc[1:] / ljj
        mask = np.abs(off) >= thresh[j]
        mask &= off != 0.0
        rows_j = np.concatenate(([j], urows[1:][mask]))
        vals_j = np.concatenate(([ljj], off[mask]))
        col_rows[j] = rows_j
        col_vals[j] = vals_j
        ptr[j] = 1
        for i in rows_j[1:]:
            row_cols[i].append(j)

    lens = np.array([r.size for r in col_rows], dtype=np.int64)
    colptr = np.concatenate(([0], np.cumsum(lens)))
    L = sp.csc_matrix((np.concatenate(col_vals), np.concatenate(col_rows), colptr), shape=(k, k))
    kind = "incomplete-cholesky" if tau > 0 else "exact-cholesky"
    return LowerFactor(L.tocsr(), kind, tau=float(tau))


def ichol_shifted(Msym, tau, drop="relative", alpha0=1e-3, max_retries=10):
    """:func:`ichol_threshold` with diagonal-shift recovery on breakdown.

    On breakdown the factorization is retried on ``Msym + alpha diag(Msym)``
    with ``alpha`` starting at ``alpha0`` and doubling.
    """
    try:
        return ichol_threshold(Msym, tau, drop)
    except NotPositiveDefiniteError as exc:
        err = exc
    D = sp.diags(sp.csr_matrix(Msym).diagonal())
    alpha = alpha0
    for _ in range(max_retries):
        log.warning("incomplete Cholesky broke down at column %d; retrying with shift %.3g",
                    err.index, alpha)
        try:
            F = ichol_threshold(Msym + alpha * D, tau, drop)
            F.shift = alpha
            return F
        except NotPositiveDefiniteError as exc:
            err = exc
            alpha *= 2.0
    raise err


def chol_dense(M):
    """Dense lower Cholesky factor; raises with the failing pivot index."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("chol_dense needs a square matrix")
    if M.shape[0] == 0:
        return M.copy()
    L, info = sla.lapack.dpotrf(M, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return L


class SPDSolver:
    """Repeated exact solves with a sparse SPD matrix.

    Rows and columns without off-diagonal entries are solved by division;
    the remaining coupled indices form a (typically small) block factored
    densely with :func:`chol_dense`.  Blocks larger than ``dense_limit``
    fall back to a sparse LU.
    """

    def __init__(self, A, dense_limit=3000):
        A = as_csr(A)
        self.n = A.shape[0]
        off = A - sp.diags(A.diagonal())
        off.eliminate_zeros()
        coupled = np.zeros(self.n, dtype=bool)
        coupled[np.diff(off.indptr) > 0] = True
        self.coupled = np.flatnonzero(coupled)
        self.free = np.flatnonzero(~coupled)
        d = A.diagonal()[self.free]
        bad = np.flatnonzero(~(d > 0))
        if bad.size:
            raise NotPositiveDefiniteError(self.free[bad[0]])
        self.dinv = 1.0 / d
        self._lu = None
        self._L = None
        if self.coupled.size > dense_limit:
            self._lu = spla.splu(A[self.coupled][:, self.coupled].tocsc())
        elif self.coupled.size:
            self._L = chol_dense(A[self.coupled][:, self.coupled].toarray())

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        x = np.empty_like(b)
        if b.ndim == 1:
            x[self.free] = self.dinv * b[self.free]
        else:
            x[self.free] = self.dinv[:, None] * b[self.free]
        if self.coupled.size:
            bc = b[self.coupled]
            if self._lu is not None:
                x[self.coupled] = self._lu.solve(bc)
            else:
                x[self.coupled] = sla.cho_solve((self._L, True), bc)
        return x
