"""Flexible GMRES and preconditioned conjugate gradients."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "IndefiniteOperatorError",
    "KrylovResult",
    "as_operator",
    "fgmres",
    "pcg",
    "tolerance_schedule",
    "write_history",
]


class IndefiniteOperatorError(np.linalg.LinAlgError):
    """CG met a direction with non-positive curvature."""


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    rel_residual_history: list = field(default_factory=list)
    final_rel_residual: float = np.nan
    rel_error: float | None = None
    wall_time: float = 0.0
    flag: str = "converged"  # "converged" | "maxit" | "breakdown"

    @property
    def converged(self):
        return self.flag == "converged"


def as_operator(op):
    """Return a callable ``v -> op v`` for a matrix, sparse matrix or callable."""
    if op is None:
        return lambda v: v
    if callable(op) and not hasattr(op, "shape"):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda v: op @ v


def tolerance_schedule(N):
    """Outer tolerance ``10 / N^2`` for a system of order ``N``."""
    if N < 1:
        raise ValueError("system order must be positive")
    return 10.0 / float(N) ** 2


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def fgmres(op, b, precond=None, tol=1e-8, maxit=None, x_true=None, reorth=False):
    """Right-preconditioned flexible GMRES without restart, zero initial guess.

    The preconditioner may change from one application to the next; one
    preconditioned vector is kept per iteration.  Convergence is declared
    only after the true relative residual ``||b - A x|| / ||b||`` of the
    reconstructed iterate drops below ``tol``; it is checked whenever the
    least-squares estimate does.

    Parameters
    ----------
    op, precond : matrix or callable
        The system operator and the (right) preconditioner application.
    x_true : ndarray, optional
        Known solution; fills ``rel_error``.
    reorth : bool
        Run a second modified Gram-Schmidt pass.
    """
    t0 = time.perf_counter()
    A = as_operator(op)
    M = as_operator(precond)
    b = np.asarray(b, dtype=np.float64)
    N = b.shape[0]
    if tol <= 0:
        raise ValueError("tol must be positive")
    if maxit is None:
        maxit = min(N, 500)
    bnorm = np.linalg.norm(b)

    def finish(x, its, hist, flag):
        res = np.linalg.norm(b - A(x)) / bnorm if bnorm > 0 else 0.0
        if hist:
            hist[-1] = res
        if flag == "maxit" and res < tol:
            flag = "converged"
        err = None
        if x_true is not None:
            err = np.linalg.norm(x - x_true) / np.linalg.norm(x_true)
        return KrylovResult(x, its, hist, res, err, time.perf_counter() - t0, flag)

    x = np.zeros(N)
    if bnorm == 0.0:
        return finish(x, 0, [0.0], "converged")

    V = np.zeros((maxit + 1, N))
    Z = np.zeros((maxit, N))
    H = np.zeros((maxit + 1, maxit))
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)
    g = np.zeros(maxit + 1)
    g[0] = bnorm
    V[0] = b / bnorm
    hist = []

    def iterate(k):
        y = np.linalg.solve(np.triu(H[:k, :k]), g[:k])
        return Z[:k].T @ y

    for j in range(maxit):
        Z[j] = M(V[j])
        w = A(Z[j])
        if not np.all(np.isfinite(w)):
            return finish(iterate(j) if j else x, j, hist, "breakdown")
        for _ in range(2 if reorth else 1):
            for i in range(j + 1):
                h = V[i] @ w
                H[i, j] += h
                w -= h * V[i]
        hnext = np.linalg.norm(w)
        H[j + 1, j] = hnext
        for i in range(j):
            a, c = H[i, j], H[i + 1, j]
            H[i, j] = cs[i] * a + sn[i] * c
            H[i + 1, j] = -sn[i] * a + cs[i] * c
        cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        est = abs(g[j + 1]) / bnorm
        hist.append(est)
        happy = hnext <= 1e-14 * bnorm
        if est < tol or happy:
            xk = iterate(j + 1)
            res = np.linalg.norm(b - A(xk)) / bnorm
            hist[-1] = res
            if res < tol:
                return finish(xk, j + 1, hist, "converged")
            if happy:
                return finish(xk, j + 1, hist, "breakdown")
        if not np.isfinite(est):
            return finish(iterate(j) if j else x, j, hist, "breakdown")
        V[j + 1] = w / hnext
    return finish(iterate(maxit), maxit, hist, "maxit")


def pcg(op, b, precond=None, tol=1e-8, maxit=200, criterion="residual", x_true=None):
    """Preconditioned conjugate gradients from a zero initial guess.

    ``criterion="residual"`` stops on ``||r|| / ||b|| < tol``;
    ``"preconditioned"`` on ``sqrt(r^T M r / b^T M b) < tol``.
    Raises :class:`IndefiniteOperatorError` when ``p^T A p <= 0``.
    """
    t0 = time.perf_counter()
    A = as_operator(op)
    M = as_operator(precond)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    z = M(r)
    rz = r @ z
    if criterion == "residual":
        ref = np.linalg.norm(b)
        measure = lambda r, rz: np.linalg.norm(r)
    elif criterion == "preconditioned":
        ref = np.sqrt(abs(rz))
        measure = lambda r, rz: np.sqrt(abs(rz))
    else:
        raise ValueError(f"unknown stopping criterion {criterion!r}")
    hist = []
    flag = "maxit"
    its = 0
    if ref == 0.0:
        flag = "converged"
        hist.append(0.0)
    else:
        p = z.copy()
        for its in range(1, maxit + 1):
            q = A(p)
            curv = p @ q
            if not curv > 0.0:
                raise IndefiniteOperatorError(f"p^T A p = {curv:.3e} at CG iteration {its}")
            alpha = rz / curv
            x += alpha * p
            r -= alpha * q
            z = M(r)
            rz_new = r @ z
            rel = measure(r, rz_new) / ref
            hist.append(rel)
            if rel < tol:
                flag = "converged"
                break
            p = z + (rz_new / rz) * p
            rz = rz_new
    err = None
    if x_true is not None:
        err = np.linalg.norm(x - x_true) / np.linalg.norm(x_true)
    final = hist[-1] if hist else np.nan
    return KrylovResult(x, its, hist, final, err, time.perf_counter() - t0, flag)


def write_history(path, result):
    """Write ``iteration,relative_residual`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "relative_residual"])
        for i, r in enumerate(result.rel_residual_history, start=1):
            w.writerow([i, repr(float(r))])
