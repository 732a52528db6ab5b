"""Block preconditioners for double saddle-point systems.

Every preconditioner is applied by block substitution using three solvers,
one per diagonal block: with ``A``, with the Schur complement ``S`` (or its
approximation) and with the second Schur complement ``X`` (or its
approximation).  Exact mode uses dense ``S = B A^{-1} B^T`` and
``X = C S^{-1} C^T``; inexact mode uses

* ``S_hat = tridiag(B diag(A)^{-1} B^T)`` solved through its bidiagonal
  Cholesky factor ``L_S``;
* ``X_hat = C L_S^{-T} L_S^{-1} C^T``, never formed, solved by PCG
  preconditioned with an incomplete Cholesky factor of
  ``C diag(S_hat)^{-1} C^T``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .factor import (LowerFactor, NotPositiveDefiniteError, SPDSolver, chol_dense,
                     chol_tridiag, ichol_shifted)
from .krylov import pcg
from .sparse import as_csr

__all__ = [
    "Tag",
    "PreconditionerKind",
    "ExactSchurSet",
    "ApproximationSet",
    "BlockPreconditioner",
    "build_exact",
    "build_approximations",
    "apply_exact",
    "apply_inexact",
    "apply_qbar",
    "parse_kind",
]

log = logging.getLogger(__name__)


class Tag(str, enum.Enum):
    P_D = "P_D"
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    Q1 = "Q1"
    Q2 = "Q2"
    Q3minus = "Q3minus"
    Q3plus = "Q3plus"   # the triangular preconditioner with +X in the (3,3) block
    Q4minus = "Q4minus"
    Q4plus = "Q4plus"
    Q5 = "Q5"
    P_ASB = "P_ASB"


@dataclass(frozen=True)
class PreconditionerKind:
    tag: Tag
    mode: str = "exact"  # "exact" | "inexact"

    def __post_init__(self):
        object.__setattr__(self, "tag", Tag(self.tag))
        if self.mode not in ("exact", "inexact"):
            raise ValueError(f"unknown preconditioner mode {self.mode!r}")


# short names accepted on the command line; plain q3/q4 carry the negative
# (3,3) block and qa/qb the positive one
ALIASES = {
    "pd": Tag.P_D, "p1": Tag.P1, "p2": Tag.P2, "p3": Tag.P3,
    "q1": Tag.Q1, "q2": Tag.Q2, "q3": Tag.Q3minus, "q3minus": Tag.Q3minus,
    "qa": Tag.Q3plus, "q3plus": Tag.Q3plus, "q4": Tag.Q4minus, "q4minus": Tag.Q4minus,
    "qb": Tag.Q4plus, "q4plus": Tag.Q4plus, "q5": Tag.Q5, "pasb": Tag.P_ASB,
}


def parse_kind(name, mode="exact"):
    key = name.strip()
    tag = ALIASES.get(key.lower())
    if tag is None:
        try:
            tag = Tag(key)
        except ValueError:
            raise ValueError(f"unknown preconditioner {name!r}") from None
    return PreconditionerKind(tag, mode)


# --------------------------------------------------------------------------
# block data

@dataclass
class ExactSchurSet:
    """Dense exact Schur complements and their Cholesky factors."""

    S: np.ndarray
    X: np.ndarray
    LS: np.ndarray
    LX: np.ndarray
    A_solver: SPDSolver
    _asb: tuple = field(default=None, repr=False)

    def solve_S(self, v):
        return sla.cho_solve((self.LS, True), v)

    def solve_X(self, v):
        return sla.cho_solve((self.LX, True), v)


def _sym(M):
    return 0.5 * (M + M.T)


def build_exact(system):
    """Dense ``S = B A^{-1} B^T`` and ``X = C S^{-1} C^T`` (desk scale only).

    Raises :class:`NotPositiveDefiniteError` if either is not SPD, which
    means ``A`` is not SPD or ``B``/``C`` lack full row rank.
    """
    Asol = SPDSolver(system.A)
    Bt = system.B.T.toarray()
    S = _sym(system.B @ Asol.solve(Bt))
    LS = chol_dense(S)
    Ct = system.C.T.toarray()
    X = _sym(system.C @ sla.cho_solve((LS, True), Ct))
    LX = chol_dense(X)
    return ExactSchurSet(np.asarray(S), np.asarray(X), LS, LX, Asol)


@dataclass
class ApproximationSet:
    """Block approximations prepared once before the outer iteration.

    Attributes
    ----------
    a_hat : diagonal of ``A``.
    S_hat : tridiagonal part of ``B diag(A)^{-1} B^T``.
    LS : bidiagonal Cholesky factor of ``S_hat``.
    X0 : ``C diag(S_hat)^{-1} C^T``, explicit.
    M : incomplete Cholesky factor of ``X0``.
    A_solver : exact solver with ``A``.
    """

    a_hat: np.ndarray
    S_hat: sp.csr_matrix
    LS: LowerFactor
    X0: sp.csr_matrix
    M: LowerFactor
    A_solver: SPDSolver
    C: sp.csr_matrix
    Ct: sp.csr_matrix
    ic_tau: float = 1e-4
    ic_drop: str = "relative"
    s_shift: float = 0.0
    _asb: tuple = field(default=None, repr=False)

    def xhat(self, v):
        """``X_hat v = C L_S^{-T} L_S^{-1} C^T v``."""
        return self.C @ self.LS.solve(self.Ct @ v)

    def xhat_dense(self):
        return np.asarray(_sym(self.C @ self.LS.solve(self.Ct.toarray())))


def schur_tridiag(B, a_diag):
    """``tridiag(B diag(a)^{-1} B^T)`` without forming the full product."""
    G = as_csr(B @ sp.diags(1.0 / np.sqrt(a_diag)))
    d = np.asarray(G.multiply(G).sum(axis=1)).ravel()
    e = np.asarray(G[:-1].multiply(G[1:]).sum(axis=1)).ravel() if G.shape[0] > 1 else np.zeros(0)
    return as_csr(sp.diags([e, d, e], [-1, 0, 1], shape=(G.shape[0], G.shape[0])))


def build_approximations(system, ic_tau=1e-4, ic_drop="relative"):
    """Diagonal ``A_hat``, tridiagonal ``S_hat`` with factor, ``X0`` and its IC factor."""
    a_hat = system.A.diagonal()
    if not np.all(a_hat > 0):
        raise NotPositiveDefiniteError(int(np.flatnonzero(~(a_hat > 0))[0]), "diag(A)")
    S_hat = schur_tridiag(system.B, a_hat)
    shift = 0.0
    try:
        LS = chol_tridiag(S_hat)
    except NotPositiveDefiniteError as exc:
        m = S_hat.shape[0]
        shift = 1e-12 * S_hat.diagonal().sum() / m
        log.warning("S_hat not positive definite (pivot %d); shifting by %.3g", exc.index, shift)
        S_hat = as_csr(S_hat + shift * sp.identity(m))
        try:
            LS = chol_tridiag(S_hat)
        except NotPositiveDefiniteError as exc2:
            raise NotPositiveDefiniteError(
                exc2.index, "tridiagonal Schur approximation (even after shift)") from exc
    C = system.C
    X0 = as_csr(C @ sp.diags(1.0 / S_hat.diagonal()) @ C.T)
    X0 = as_csr(_sym(X0))
    M = ichol_shifted(X0, ic_tau, ic_drop)
    return ApproximationSet(a_hat, S_hat, LS, X0, M, SPDSolver(system.A), C, as_csr(C.T),
                            ic_tau, ic_drop, shift)


# --------------------------------------------------------------------------
# application

def _substitute(tag, B, C, sA, sS, sX, r1, r2, r3):
    """Block substitution for ``w = P^{-1} r`` given the three block solvers."""
    Bt = lambda v: B.T @ v
    Ct = lambda v: C.T @ v
    if tag is Tag.P_D:
        return sA(r1), sS(r2), sX(r3)
    if tag in (Tag.P1, Tag.P2):
        w1 = sA(r1)
        w3 = -sX(r3) if tag is Tag.P1 else sX(r3)
        w2 = sS(B @ w1 + Ct(w3) - r2)
        return w1, w2, w3
    if tag is Tag.P3:
        # [[A, B^T], [B, -S]] has Schur complement -(S + B A^{-1} B^T) = -2S
        w3 = -sX(r3)
        w2 = 0.5 * sS(B @ sA(r1) - r2)
        w1 = sA(r1 - Bt(w2))
        return w1, w2, w3
    if tag is Tag.Q1:
        w3 = sX(r3)
        w2 = -sS(r2)
        w1 = sA(r1 - Bt(w2))
        return w1, w2, w3
    if tag is Tag.Q2:
        w3 = -sX(r3)
        w2 = sS(r2 - Ct(w3))
        w1 = sA(r1 - Bt(w2))
        return w1, w2, w3
    if tag in (Tag.Q3plus, Tag.Q3minus, Tag.P_ASB):
        w3 = sX(r3) if tag is not Tag.Q3minus else -sX(r3)
        w2 = sS(Ct(w3) - r2)
        w1 = sA(r1 - Bt(w2))
        return w1, w2, w3
    if tag in (Tag.Q4plus, Tag.Q4minus, Tag.Q5):
        # leading [[A, B^T], [B, 0]] solved through its Schur complement -S
        w2 = sS(B @ sA(r1) - r2)
        w1 = sA(r1 - Bt(w2))
        if tag is Tag.Q5:
            w3 = sX(r3)
        elif tag is Tag.Q4plus:
            w3 = sX(r3 - C @ w2)
        else:
            w3 = -sX(r3 - C @ w2)
        return w1, w2, w3
    raise ValueError(f"unknown preconditioner tag {tag!r}")


def _columnwise(fn, v):
    if v.ndim == 1:
        return fn(v)
    return np.column_stack([fn(v[:, j]) for j in range(v.shape[1])])


def _asb_exact(system, es):
    if es._asb is None:
        X = np.asarray((system.C @ system.C.T).toarray())
        es._asb = (chol_dense(X),)
    return es._asb


def _asb_inexact(ap):
    if ap._asb is None:
        X = as_csr(ap.C @ ap.Ct)
        ap._asb = (X, ichol_shifted(X, ap.ic_tau, ap.ic_drop))
    return ap._asb


class BlockPreconditioner:
    """Callable ``r -> P^{-1} r`` for one catalogue entry.

    ``data`` is an :class:`ExactSchurSet` for exact mode and an
    :class:`ApproximationSet` for inexact mode.  In inexact mode the solve
    with ``X_hat`` is an inner PCG run to ``inner_tol``, so successive
    applications are not the same linear map; pair it with a flexible
    outer method.  ``block11="diag"`` replaces the exact solve with ``A``
    by division with ``diag(A)``.

    The ``P_ASB`` entry uses the upper triangular ``Q3plus`` layout with the
    identity in place of the first Schur complement, so its last block is
    ``C C^T``.
    """

    def __init__(self, system, kind, data, inner_tol=1e-4, inner_maxit=200, block11="exact"):
        self.system = system
        self.kind = kind
        self.data = data
        self.inner_tol = inner_tol
        self.inner_maxit = inner_maxit
        self.block11 = block11
        self.applications = 0
        self.inner_iterations = 0
        self.inner_failures = 0
        tag = kind.tag
        B, C = system.B, system.C
        if kind.mode == "exact":
            if not isinstance(data, ExactSchurSet):
                raise TypeError("exact mode needs an ExactSchurSet")
            sA = data.A_solver.solve
            if tag is Tag.P_ASB:
                (LX,) = _asb_exact(system, data)
                sS = lambda v: v
                sX = lambda v: sla.cho_solve((LX, True), v)
            else:
                sS, sX = data.solve_S, data.solve_X
        else:
            if not isinstance(data, ApproximationSet):
                raise TypeError("inexact mode needs an ApproximationSet")
            if block11 == "exact":
                sA = data.A_solver.solve
            elif block11 == "diag":
                sA = lambda v: (v.T / data.a_hat).T
            else:
                raise ValueError(f"unknown block11 option {block11!r}")
            if tag is Tag.P_ASB:
                X, MX = _asb_inexact(data)
                sS = lambda v: v
                sX = lambda v: _columnwise(lambda c: self._inner(lambda u: X @ u, MX, c), v)
            else:
                sS = data.LS.solve
                sX = lambda v: _columnwise(lambda c: self._inner(data.xhat, data.M, c), v)
        self._solvers = (sA, sS, sX)

    def _inner(self, op, factor, r):
        res = pcg(op, r, factor.solve, tol=self.inner_tol, maxit=self.inner_maxit)
        self.inner_iterations += res.iterations
        if not res.converged:
            self.inner_failures += 1
            log.debug("inner PCG stopped with flag %s after %d iterations",
                      res.flag, res.iterations)
        return res.x

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        self.applications += 1
        r1, r2, r3 = self.system.split(r)
        w = _substitute(self.kind.tag, self.system.B, self.system.C, *self._solvers, r1, r2, r3)
        return np.concatenate(w, axis=0)

    matvec = __call__


def apply_exact(kind, es, system, r):
    """``P^{-1} r`` for an exact-mode preconditioner."""
    return BlockPreconditioner(system, PreconditionerKind(kind.tag, "exact"), es)(r)


def apply_inexact(kind, ap, system, r, inner_tol=1e-4, block11="exact"):
    """``P^{-1} r`` with the approximate blocks of ``ap``."""
    return BlockPreconditioner(system, PreconditionerKind(kind.tag, "inexact"), ap,
                               inner_tol=inner_tol, block11=block11)(r)


def apply_qbar(ap, system, r, inner_tol=1e-4, block11="exact"):
    """Inexact upper triangular preconditioner application.

    Solves ``X_hat w3 = r3`` by PCG, then ``w2 = L_S^{-T} L_S^{-1}(C^T w3 - r2)``
    and ``A w1 = r1 - B^T w2``.
    """
    return apply_inexact(PreconditionerKind(Tag.Q3plus, "inexact"), ap, system, r,
                         inner_tol=inner_tol, block11=block11)
