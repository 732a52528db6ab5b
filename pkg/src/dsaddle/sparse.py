"""Sparse and dense kernels shared by the rest of the package.

Sparse matrices are ``scipy.sparse.csr_matrix`` objects kept in canonical
form: sorted column indices, duplicates summed, no stored zeros.  Vectors are
1-D float64 ``numpy`` arrays.  The ``*_dense`` functions are deliberately
naive loop implementations used as independent test oracles.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SingularFactorError",
    "as_csr",
    "spmv",
    "kron",
    "assemble_saddle",
    "triangular_solve",
    "tridiagonal_part",
    "read_matrix_market",
    "write_matrix_market",
    "read_vector",
    "write_vector",
    "spmv_dense",
    "kron_dense",
    "saddle_dense",
    "triangular_solve_dense",
]

_INDEX_LIMIT = np.iinfo(np.int64).max


class SingularFactorError(np.linalg.LinAlgError):
    """A triangular factor has a zero or subnormal diagonal entry."""

    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"triangular factor is singular at diagonal index {self.index}")


def as_csr(M):
    """Return ``M`` as a canonical float64 CSR matrix (a copy when needed)."""
    if sp.issparse(M):
        out = sp.csr_matrix(M, dtype=np.float64, copy=True)
    else:
        out = sp.csr_matrix(np.atleast_2d(np.asarray(M, dtype=np.float64)))
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def spmv(M, x, transpose=False):
    """Product ``M @ x`` (or ``M.T @ x``) with a dimension check."""
    x = np.asarray(x, dtype=np.float64)
    rows, cols = M.shape
    need = rows if transpose else cols
    if x.shape[0] != need:
        raise ValueError(f"dimension mismatch: operator {M.shape} "
                         f"{'transposed ' if transpose else ''}applied to length {x.shape[0]}")
    if transpose:
        return M.T @ x
    return M @ x


def kron(Ma, Mb):
    """Kronecker product of two sparse matrices, returned canonical CSR."""
    ra, ca = Ma.shape
    rb, cb = Mb.shape
    if min(ra, ca, rb, cb) == 0:
        raise ValueError("kron of an empty matrix")
    if ra * rb > _INDEX_LIMIT or ca * cb > _INDEX_LIMIT:
        raise OverflowError("Kronecker product dimensions overflow the index type")
    return as_csr(sp.kron(as_csr(Ma), as_csr(Mb), format="csr"))


def assemble_saddle(A, B, C):
    """Assemble ``[[A, B^T, 0], [B, 0, C^T], [0, C, 0]]`` as canonical CSR."""
    n = A.shape[0]
    m, l = B.shape[0], C.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"A must be square, got {A.shape}")
    if B.shape[1] != n:
        raise ValueError(f"B has {B.shape[1]} columns, expected n={n}")
    if C.shape[1] != m:
        raise ValueError(f"C has {C.shape[1]} columns, expected m={m}")
    K = sp.bmat([[A, B.T, None], [B, None, C.T], [None, C, None]], format="csr")
    # bmat leaves the empty blocks unallocated, so the shape must be forced
    if K.shape != (n + m + l, n + m + l):
        raise ValueError("block assembly produced an inconsistent shape")
    return as_csr(K)


def _check_diagonal(L):
    d = L.diagonal()
    bad = np.flatnonzero(~(np.abs(d) >= np.finfo(np.float64).tiny))
    if bad.size:
        raise SingularFactorError(bad[0])


def triangular_solve(L, b, mode="lower"):
    """Solve with a sparse triangular matrix.

    Parameters
    ----------
    L : sparse matrix
        Lower triangular for ``mode="lower"`` and ``"lower-transpose"``,
        upper triangular for ``mode="upper"``.
    b : ndarray
        Right-hand side, 1-D or 2-D (one column per system).
    mode : {"lower", "upper", "lower-transpose"}
        ``"lower-transpose"`` solves ``L^T x = b``.
    """
    L = L if sp.isspmatrix_csr(L) else as_csr(L)
    if L.shape[0] != L.shape[1]:
        raise ValueError("triangular_solve needs a square matrix")
    _check_diagonal(L)
    if mode == "lower":
        return spla.spsolve_triangular(L, b, lower=True)
    if mode == "upper":
        return spla.spsolve_triangular(L, b, lower=False)
    if mode == "lower-transpose":
        return spla.spsolve_triangular(L.T.tocsr(), b, lower=False)
    raise ValueError(f"unknown triangular mode {mode!r}")


def tridiagonal_part(M):
    """Entries of ``M`` with ``|i - j| <= 1``, as CSR."""
    M = sp.coo_matrix(M)
    keep = np.abs(M.row - M.col) <= 1
    return as_csr(sp.coo_matrix((M.data[keep], (M.row[keep], M.col[keep])), shape=M.shape))


# --------------------------------------------------------------------------
# I/O

def read_matrix_market(path):
    """Read a real coordinate Matrix Market file as canonical CSR."""
    try:
        M = scipy.io.mmread(str(path))
    except (ValueError, IndexError, OSError) as exc:
        raise ValueError(f"malformed Matrix Market file {path}: {exc}") from exc
    if not sp.issparse(M):
        M = sp.csr_matrix(M)
    if np.iscomplexobj(M.data):
        raise ValueError(f"{path}: complex Matrix Market data is not supported")
    return as_csr(M)


def write_matrix_market(path, M, symmetric=None):
    """Write ``M`` in coordinate format; symmetry is detected unless given."""
    M = as_csr(M)
    if symmetric is None:
        symmetric = M.shape[0] == M.shape[1] and (M != M.T).nnz == 0
    scipy.io.mmwrite(str(path), M.tocoo(), field="real",
                     symmetry="symmetric" if symmetric else "general")


def read_vector(path):
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
        if rows and rows[0][-1].strip().lower() == "value":
            rows = rows[1:]
        try:
            return np.array([float(row[-1]) for row in rows])
        except ValueError as exc:
            raise ValueError(f"malformed vector file {path}: {exc}") from exc
    return np.loadtxt(path, dtype=np.float64, ndmin=1)


def write_vector(path, x):
    path = Path(path)
    x = np.asarray(x, dtype=np.float64)
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "value"])
            for i, v in enumerate(x):
                w.writerow([i, repr(float(v))])
    else:
        np.savetxt(path, x, fmt="%.17g")


# --------------------------------------------------------------------------
# dense oracles (loop implementations, independent of the sparse paths)

def spmv_dense(M, x, transpose=False):
    M = np.asarray(M, dtype=np.float64)
    if transpose:
        M = M.T
    out = np.zeros(M.shape[0])
    for i in range(M.shape[0]):
        s = 0.0
        for j in range(M.shape[1]):
            s += M[i, j] * x[j]
        out[i] = s
    return out


def kron_dense(Ma, Mb):
    Ma = np.asarray(Ma, dtype=np.float64)
    Mb = np.asarray(Mb, dtype=np.float64)
    ra, ca = Ma.shape
    rb, cb = Mb.shape
    out = np.zeros((ra * rb, ca * cb))
    for i in range(ra):
        for j in range(ca):
            for k in range(rb):
                for q in range(cb):
                    out[i * rb + k, j * cb + q] = Ma[i, j] * Mb[k, q]
    return out


def saddle_dense(A, B, C):
    A, B, C = (np.asarray(X, dtype=np.float64) for X in (A, B, C))
    n, m, l = A.shape[0], B.shape[0], C.shape[0]
    N = n + m + l
    K = np.zeros((N, N))
    for i in range(n):
        for j in range(n):
            K[i, j] = A[i, j]
    for i in range(m):
        for j in range(n):
            K[n + i, j] = B[i, j]
            K[j, n + i] = B[i, j]
    for i in range(l):
        for j in range(m):
            K[n + m + i, n + j] = C[i, j]
            K[n + j, n + m + i] = C[i, j]
    return K


def triangular_solve_dense(L, b, lower=True):
    L = np.asarray(L, dtype=np.float64)
    n = L.shape[0]
    x = np.zeros(n)
    order = range(n) if lower else range(n - 1, -1, -1)
    for i in order:
        s = b[i]
        js = range(i) if lower else range(i + 1, n)
        for j in js:
            s -= L[i, j] * x[j]
        x[i] = s / L[i, i]
    return x
