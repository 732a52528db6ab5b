"""Test problems for double saddle-point systems and their right-hand sides."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sparse import as_csr, assemble_saddle, kron, read_matrix_market, write_matrix_market

__all__ = [
    "BlockSaddleSystem",
    "RhsSpec",
    "bidiagonal_e1",
    "gen_example1",
    "gen_example2",
    "make_rhs",
    "save_system",
    "load_system",
]

log = logging.getLogger(__name__)


@dataclass
class BlockSaddleSystem:
    """Blocks of ``[[A, B^T, 0], [B, 0, C^T], [0, C, 0]]``.

    ``meta`` carries provenance (generator name, parameters, seed, formula
    variants) and is written next to the matrices by :func:`save_system`.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A, self.B, self.C = as_csr(self.A), as_csr(self.B), as_csr(self.C)
        n, m, l = self.dims
        if self.A.shape != (n, n) or self.B.shape != (m, n) or self.C.shape != (l, m):
            raise ValueError(f"inconsistent block shapes A{self.A.shape} "
                             f"B{self.B.shape} C{self.C.shape}")
        self._K = None

    @property
    def dims(self):
        return self.A.shape[0], self.B.shape[0], self.C.shape[0]

    @property
    def size(self):
        return sum(self.dims)

    @property
    def matrix(self):
        """The assembled (cached) saddle-point matrix."""
        if self._K is None:
            self._K = assemble_saddle(self.A, self.B, self.C)
        return self._K

    def split(self, w):
        n, m, _ = self.dims
        return w[:n], w[n:n + m], w[n + m:]


@dataclass(frozen=True)
class RhsSpec:
    kind: str = "unit"  # "unit" | "random"
    seed: int = 0


def bidiagonal_e1(p):
    """``p x (p+1)`` matrix with 2 on the diagonal and -1 above it."""
    rows = np.repeat(np.arange(p), 2)
    cols = np.column_stack([np.arange(p), np.arange(1, p + 1)]).ravel()
    vals = np.tile([2.0, -1.0], p)
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(p, p + 1)))


def _d_diagonals(p1, variant):
    j = np.arange(1, 2 * p1 + 1, dtype=np.float64)
    if variant == "squared":
        d2 = np.where(j <= p1, 1.0, 1e-5 * (j - p1) ** 2)
        d3 = 1e-5 * (j + p1) ** 2
    elif variant == "literal":
        # as printed; D2 is then indefinite for every p >= 2
        d2 = np.where(j <= p1, 1.0, 1e-5 * (j - p1 ** 2))
        d3 = 1e-5 * (j + p1 ** 2)
    else:
        raise ValueError(f"unknown diagonal variant {variant!r}")
    return d2, d3


def gen_example1(p, d_variant="squared"):
    """The Kronecker-structured test problem of order ``8p^2 + 2p``.

    ``A = blkdiag(2 W^T W + I, D2, D3)``, ``B = [E, -I, I]`` and ``C = E^T``
    with ``E = [E1 kron I_p; I_p kron E1]``.  ``W`` is the rank-one matrix
    ``w_ij = exp(-2((i/3)^2 + (j/3)^2))`` (1-based ``i, j``), stored
    without its underflowed entries.
    """
    p = int(p)
    if p < 2:
        raise ValueError("gen_example1 needs p >= 2")
    p1, p2 = p * p, p * (p + 1)

    u = np.exp(-2.0 * (np.arange(1, p2 + 1) / 3.0) ** 2)
    W = as_csr(sp.csr_matrix(np.outer(u[u > 0], u[u > 0])))
    W.resize((p2, p2))
    A11 = as_csr(2.0 * (W.T @ W) + sp.identity(p2))
    # the product is symmetric in exact arithmetic; force it bitwise
    A11 = as_csr(0.5 * (A11 + A11.T))

    d2, d3 = _d_diagonals(p1, d_variant)
    A = as_csr(sp.block_diag([A11, sp.diags(d2), sp.diags(d3)]))

    E1 = bidiagonal_e1(p)
    Ip = sp.identity(p, format="csr")
    E = as_csr(sp.vstack([kron(E1, Ip), kron(Ip, E1)]))
    I2 = sp.identity(2 * p1, format="csr")
    B = as_csr(sp.hstack([E, -I2, I2]))
    C = as_csr(E.T)
    meta = {"problem": "ex1", "p": p, "d_variant": d_variant}
    if d_variant == "literal":
        log.warning("literal D2/D3 reading gives an indefinite A for p=%d", p)
    return BlockSaddleSystem(A, B, C, meta)


def _full_row_rank(M):
    return np.linalg.matrix_rank(M) == M.shape[0]


def gen_example2(n=100, m=80, l=60, seed=0):
    """Random dense problem with diagonal ``A`` and uniform ``B``, ``C``.

    ``z ~ U(1, 11)``, ``a = 0.1 + sort(z * U(0,1)^n)`` with its first ten
    entries set to the first one; ``B``, ``C`` have ``U(0,1)`` entries.  A
    rank-deficient draw is retried with ``seed + 1`` (recorded in ``meta``).
    """
    if not n >= m >= l >= 1:
        raise ValueError("gen_example2 needs n >= m >= l >= 1")
    s = int(seed)
    while True:
        rng = np.random.default_rng(s)
        z = 1.0 + 10.0 * rng.random()
        a = 0.1 + np.sort(z * rng.random(n))
        a[:min(10, n)] = a[0]
        B = rng.random((m, n))
        C = rng.random((l, m))
        if _full_row_rank(B) and _full_row_rank(C):
            break
        log.warning("example 2 draw with seed %d is rank deficient, retrying", s)
        s += 1
    meta = {"problem": "ex2", "n": n, "m": m, "l": l, "seed": int(seed), "seed_used": s}
    return BlockSaddleSystem(sp.diags(a), B, C, meta)


def make_rhs(system, spec=RhsSpec()):
    """Exact solution ``w*`` (ones or seeded ``U(0,1)``) and ``b = K w*``."""
    N = system.size
    if spec.kind in ("unit", "ones"):
        w = np.ones(N)
    elif spec.kind == "random":
        w = np.random.default_rng(spec.seed).random(N)
    else:
        raise ValueError(f"unknown rhs kind {spec.kind!r}")
    return system.matrix @ w, w


def save_system(system, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name in "ABC":
        write_matrix_market(outdir / f"{name}.mtx", getattr(system, name))
    n, m, l = system.dims
    meta = dict(system.meta, n=n, m=m, l=l)
    (outdir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return outdir


def load_system(indir):
    indir = Path(indir)
    for name in "ABC":
        if not (indir / f"{name}.mtx").exists():
            raise FileNotFoundError(indir / f"{name}.mtx")
    blocks = [read_matrix_market(indir / f"{name}.mtx") for name in "ABC"]
    meta_path = indir / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {"problem": "file"}
    return BlockSaddleSystem(*blocks, meta=meta)
