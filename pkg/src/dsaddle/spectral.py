"""Spectra of preconditioned matrices and the bounds they should obey.

The quantities behind every bound are three ranges of generalized
eigenvalues, for SPD pencils built from the preconditioner's blocks:

* ``gammaA`` of ``A_hat^{-1} A``;
* ``gammaS`` of ``S_hat^{-1} S_tilde``, with ``S_tilde = B A_hat^{-1} B^T``;
* ``gammaX`` of ``X_hat^{-1} X_tilde``, with ``X_tilde = C S_hat^{-1} C^T``.

``A_hat`` is whatever the preconditioner actually solves with in its
leading block: ``A`` itself when that solve is exact.  Setting
``x_tilde="stilde"`` uses ``X_tilde = C S_tilde^{-1} C^T`` instead; that
reading reproduces the published interval for the Kronecker test problem
but is not a valid bound in general.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .eig import block_groups, block_partition_eigs, eig_dense, eig_symmetric
from .factor import chol_dense
from .precond import (ApproximationSet, BlockPreconditioner, ExactSchurSet, PreconditionerKind,
                      Tag)

__all__ = [
    "Spectrum",
    "GammaRanges",
    "BoundReport",
    "eig_sym_pencil_extremes",
    "gamma_ranges_dense",
    "gamma_ranges",
    "preconditioner_inverse",
    "preconditioned_spectrum",
    "qbar_dense",
    "simplified_spectrum",
    "complex_disc_bound",
    "real_interval_general",
    "synthetic_interval",
    "cubic_real_roots",
    "cubic_root_range",
    "lambda_plus",
    "simplified_bounds",
    "verify_bounds",
]

REAL_TOL = 1e-8


@dataclass
class Spectrum:
    values: np.ndarray
    source: str = ""
    groups: list = field(default_factory=list)

    @property
    def real_mask(self):
        v = self.values
        return np.abs(v.imag) <= REAL_TOL * np.maximum(1.0, np.abs(v))

    @property
    def real(self):
        return self.values[self.real_mask].real

    @property
    def complex(self):
        return self.values[~self.real_mask]


@dataclass
class GammaRanges:
    gammaA: tuple
    gammaS: tuple
    gammaX: tuple

    def to_dict(self):
        return {k: [float(x) for x in v] for k, v in asdict(self).items()}


@dataclass
class BoundReport:
    """Bounds evaluated against a stored spectrum."""

    variant: str                       # "general" | "simplified"
    complex_radius: float              # disc |lam - 1| < radius checked for complex eigenvalues
    real_interval: tuple
    complex_pass: np.ndarray
    real_pass: np.ndarray
    real_range: tuple
    gamma: GammaRanges | None = None
    synthetic_interval: tuple | None = None
    assumption_one_in_gammaA: bool | None = None
    extras: dict = field(default_factory=dict)
    offending: list = field(default_factory=list)

    @property
    def passed(self):
        return bool(np.all(self.complex_pass) and np.all(self.real_pass))

    def to_dict(self):
        def f(x):
            return None if x is None else [float(t) for t in x]
        return {
            "variant": self.variant,
            "passed": self.passed,
            "complex_radius": float(self.complex_radius),
            "real_interval": f(self.real_interval),
            "synthetic_interval": f(self.synthetic_interval),
            "real_range": f(self.real_range),
            "n_real": int(self.real_pass.size),
            "n_complex": int(self.complex_pass.size),
            "n_real_fail": int(np.count_nonzero(~self.real_pass)),
            "n_complex_fail": int(np.count_nonzero(~self.complex_pass)),
            "gamma": None if self.gamma is None else self.gamma.to_dict(),
            "assumption_one_in_gammaA": self.assumption_one_in_gammaA,
            "offending": [[float(np.real(z)), float(np.imag(z))] for z in self.offending],
            **{k: (float(v) if np.isscalar(v) else v) for k, v in self.extras.items()},
        }


# --------------------------------------------------------------------------
# gamma ranges

def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=np.float64)


def eig_sym_pencil_extremes(Msym, Nspd):
    """``(min, max)`` eigenvalue of ``N^{-1} M`` for symmetric ``M`` and SPD ``N``.

    Uses the symmetric form ``L^{-1} M L^{-T}`` with ``N = L L^T``.  Raises
    :class:`~dsaddle.factor.NotPositiveDefiniteError` if ``N`` is not SPD.
    """
    M = _dense(Msym)
    N = _dense(Nspd)
    if M.shape != N.shape or M.shape[0] != M.shape[1]:
        raise ValueError("pencil matrices must be square and of equal order")
    L = chol_dense(0.5 * (N + N.T))
    Y = sla.solve_triangular(L, 0.5 * (M + M.T), lower=True)
    T = sla.solve_triangular(L, Y.T, lower=True)
    ev = eig_symmetric(T)
    return float(ev[0]), float(ev[-1])


def gamma_ranges_dense(A, A_hat, B, C, S_hat, X_hat, x_tilde="shat"):
    """Gamma ranges from explicit blocks (``A_hat``, ``S_hat``, ``X_hat`` SPD)."""
    A, A_hat, B, C = _dense(A), _dense(A_hat), _dense(B), _dense(C)
    S_hat, X_hat = _dense(S_hat), _dense(X_hat)
    S_t = B @ np.linalg.solve(A_hat, B.T)
    if x_tilde == "shat":
        X_t = C @ np.linalg.solve(S_hat, C.T)
    elif x_tilde == "stilde":
        X_t = C @ np.linalg.solve(S_t, C.T)
    else:
        raise ValueError(f"unknown x_tilde option {x_tilde!r}")
    return GammaRanges(eig_sym_pencil_extremes(A, A_hat),
                       eig_sym_pencil_extremes(S_t, S_hat),
                       eig_sym_pencil_extremes(X_t, X_hat))


def gamma_ranges(system, ap, block11="exact", x_tilde="shat"):
    """Gamma ranges of the inexact preconditioner built from ``ap``.

    With ``block11="exact"`` the leading block is solved with ``A`` exactly,
    so ``A_hat = A`` and ``gammaA = (1, 1)``; ``"diag"`` uses ``diag(A)``.
    ``X_hat = C S_hat^{-1} C^T`` is the operator the inner PCG inverts.
    """
    A = system.A.toarray()
    if block11 == "exact":
        A_hat = A
    elif block11 == "diag":
        A_hat = np.diag(ap.a_hat)
    else:
        raise ValueError(f"unknown block11 option {block11!r}")
    return gamma_ranges_dense(A, A_hat, system.B, system.C, ap.S_hat, ap.xhat_dense(), x_tilde)


# --------------------------------------------------------------------------
# spectra

def preconditioner_inverse(system, kind, data, inner_tol=1e-12, block11="exact"):
    """Dense ``P^{-1}``, from one application per unit vector.

    Inexact solves run to ``inner_tol`` so the result is a fixed linear map.
    """
    P = BlockPreconditioner(system, kind, data, inner_tol=inner_tol,
                            inner_maxit=max(1000, system.dims[2]), block11=block11)
    return P(np.eye(system.size))


def _spectrum_of(M, sizes, structured, source):
    if structured:
        vals, groups = block_partition_eigs(M, sizes)
        return Spectrum(vals, source, groups)
    return Spectrum(eig_dense(M), source, [list(range(len(sizes)))])


def preconditioned_spectrum(system, kind, data, side="auto", inner_tol=1e-12,
                            block11="exact", structured=True):
    """Eigenvalues of ``P^{-1} K`` (``side="left"``) or ``K P^{-1}`` (``"right"``).

    Both have the same spectrum.  With ``structured=True`` any block
    triangular structure over the ``(n, m, l)`` partition is used to split
    the eigenproblem; ``side="auto"`` picks whichever product splits into
    more pieces, which matters for preconditioners whose preconditioned
    matrix is defective.
    """
    if isinstance(kind, str):
        from .precond import parse_kind
        kind = parse_kind(kind, "exact" if isinstance(data, ExactSchurSet) else "inexact")
    Pinv = preconditioner_inverse(system, kind, data, inner_tol, block11)
    K = system.matrix
    sizes = system.dims
    name = f"{kind.tag.value}/{kind.mode}"
    if side == "left":
        return _spectrum_of(np.asarray((K.T @ Pinv.T).T), sizes, structured, name + " left")
    if side == "right":
        return _spectrum_of(np.asarray(K @ Pinv), sizes, structured, name + " right")
    if side != "auto":
        raise ValueError(f"unknown side {side!r}")
    left = np.asarray((K.T @ Pinv.T).T)
    right = np.asarray(K @ Pinv)
    if not structured:
        return _spectrum_of(left, sizes, False, name + " left")
    gl, gr = block_groups(left, sizes), block_groups(right, sizes)
    s, M, groups = ("left", left, gl) if len(gl) >= len(gr) else ("right", right, gr)
    vals, groups = block_partition_eigs(M, sizes, groups=groups)
    return Spectrum(vals, f"{name} {s}", groups)


def qbar_dense(A_hat, B, C, S_hat, X_hat):
    """``[[A_hat, B^T, 0], [0, -S_hat, C^T], [0, 0, X_hat]]`` as a dense array."""
    A_hat, B, C, S_hat, X_hat = (_dense(M) for M in (A_hat, B, C, S_hat, X_hat))
    n, m, l = A_hat.shape[0], B.shape[0], C.shape[0]
    Q = np.zeros((n + m + l, n + m + l))
    Q[:n, :n] = A_hat
    Q[:n, n:n + m] = B.T
    Q[n:n + m, n:n + m] = -S_hat
    Q[n:n + m, n + m:] = C.T
    Q[n + m:, n + m:] = X_hat
    return Q


def simplified_spectrum(system, A_hat=None):
    """Spectrum and gamma ranges for ``S_hat = S_tilde`` and ``X_hat = X_tilde``.

    ``A_hat`` defaults to the identity.
    """
    A = system.A.toarray()
    B, C = system.B.toarray(), system.C.toarray()
    A_hat = np.eye(A.shape[0]) if A_hat is None else _dense(A_hat)
    S_t = B @ np.linalg.solve(A_hat, B.T)
    X_t = C @ np.linalg.solve(S_t, C.T)
    Q = qbar_dense(A_hat, B, C, S_t, X_t)
    M = np.linalg.solve(Q, system.matrix.toarray())
    g = gamma_ranges_dense(A, A_hat, B, C, S_t, X_t)
    return Spectrum(eig_dense(M), "simplified Qbar left"), g


# --------------------------------------------------------------------------
# bounds

def complex_disc_bound(gammaA_min):
    """Radius ``sqrt(1 - gammaA_min)`` of the disc about 1 (0 when ``gammaA_min >= 1``)."""
    if gammaA_min <= 0:
        raise ValueError("gammaA_min must be positive")
    return math.sqrt(1.0 - gammaA_min) if gammaA_min <= 1.0 else 0.0


def synthetic_interval(g):
    """Interval for real eigenvalues with a nonzero third component."""
    aL, aU = g.gammaA
    sL, sU = g.gammaS
    xL, xU = g.gammaX
    lo = min(sL / (aU + sL), aL * xL / (xL + sU + aL * xL))
    return lo, aU + sU + xU


def real_interval_general(g):
    """Interval containing every real eigenvalue of the inexact preconditioned matrix.

    Union of the synthetic interval, the interval for eigenvectors with a
    vanishing third component and ``[gammaA_min, gammaA_max]``.
    """
    aL, aU = g.gammaA
    sL, sU = g.gammaS
    lo, hi = synthetic_interval(g)
    return min(lo, aL, sL / (aU + sL)), max(hi, aU + sU, aU)


def _polish(coef, x, steps=8):
    # Newton on the monic cubic x^3 + c2 x^2 + c1 x + c0, keeping the best iterate
    c2, c1, c0 = coef
    f = lambda t: ((t + c2) * t + c1) * t + c0
    best, fbest = x, abs(f(x))
    for _ in range(steps):
        d = (3.0 * x + 2.0 * c2) * x + c1
        if d == 0.0 or fbest == 0.0:
            break
        x = x - f(x) / d
        fx = abs(f(x))
        if fx < fbest:
            best, fbest = x, fx
        else:
            break
    return best


def cubic_real_roots(gA, gS, gX):
    """Real roots of ``lam^3 - (gA+gS+gX) lam^2 + (gS+gX+gA gX) lam - gA gX``.

    Closed form on the depressed cubic, each root refined by Newton's
    method.  Returned ascending, with multiplicity when the closed form
    produces it.
    """
    c2 = -(gA + gS + gX)
    c1 = gS + gX + gA * gX
    c0 = -gA * gX
    return _cubic_roots((c2, c1, c0))


def _cubic_roots(coef):
    c2, c1, c0 = coef
    sh = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * sh ** 3 - sh * c1 + c0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    scale = max((q / 2.0) ** 2, abs(p / 3.0) ** 3, np.finfo(float).tiny)
    if p == 0.0 and q == 0.0:
        ts = [0.0, 0.0, 0.0]
    elif disc > 1e-14 * scale:
        sq = math.sqrt(disc)
        u = np.cbrt(-q / 2.0 - math.copysign(sq, q))
        ts = [u - p / (3.0 * u)]
    else:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (p * r)))
        phi = math.acos(arg) / 3.0
        ts = [r * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)]
    roots = [_polish(coef, t - sh) for t in ts]
    return np.sort(np.array(roots))


def cubic_root_range(g, k=20):
    """``(min, max)`` real cubic root over a ``k^3`` grid spanning the gamma ranges."""
    grids = [np.linspace(lo, hi, k) if hi > lo else np.array([lo])
             for lo, hi in (g.gammaA, g.gammaS, g.gammaX)]
    lo, hi = np.inf, -np.inf
    for a in grids[0]:
        for s in grids[1]:
            for x in grids[2]:
                r = cubic_real_roots(a, s, x)
                lo, hi = min(lo, r[0]), max(hi, r[-1])
    return lo, hi


def _p_simplified(lam, gamma):
    # lam^3 - (2+g) lam^2 + (2+g) lam - g, written to be exact at g = 1
    return (lam - 1.0) ** 3 + (1.0 - gamma) * (lam * lam - lam + 1.0)


def lambda_plus(gamma, tol=1e-15, maxit=200):
    """Unique positive root of ``lam^3 - (2+g) lam^2 + (2+g) lam - g``.

    Safeguarded Newton inside the bracket ``(0, g + 2)``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    lo, hi = 0.0, gamma + 2.0
    x = min(gamma, 1.0)
    for _ in range(maxit):
        fx = _p_simplified(x, gamma)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        d = 3.0 * x * x - 2.0 * (2.0 + gamma) * x + (2.0 + gamma)
        xn = x - fx / d if d != 0.0 else 0.5 * (lo + hi)
        if not lo < xn < hi:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol * max(1.0, abs(x)) or hi - lo <= tol * max(1.0, hi):
            return xn
        x = xn
    return 0.5 * (lo + hi)


def simplified_bounds(gammaA):
    """Sharp and synthetic real-eigenvalue intervals when only ``A`` is approximated."""
    gmin, gmax = gammaA
    lp_min, lp_max = lambda_plus(gmin), lambda_plus(gmax)
    sharp = (min(lp_min, gmin, 1.0 / (gmax + 1.0)), max(lp_max, gmax + 1.0))
    synth = (gmin / 2.0, gmax + 1.0)
    return {"sharp_interval": sharp, "synthetic_interval": synth,
            "lambda_plus_min": lp_min, "lambda_plus_max": lp_max,
            "gammaA_min_half": gmin / 2.0, "gammaA_max_plus_one": gmax + 1.0}


def _inside(x, interval, rtol):
    lo, hi = interval
    return (x >= lo - rtol * abs(lo)) & (x <= hi + rtol * abs(hi))


def verify_bounds(spectrum, g, variant="general", rtol=1e-10):
    """Check a spectrum against the bounds implied by the gamma ranges.

    Complex eigenvalues must satisfy ``|lam - 1| < 1``.  Real eigenvalues
    must lie in :func:`real_interval_general` (``variant="general"``) or in
    both the sharp and synthetic intervals (``"simplified"``).  ``rtol``
    loosens interval ends by a relative margin for rounding.
    """
    vals = np.asarray(spectrum.values)
    mask = np.abs(vals.imag) <= REAL_TOL * np.maximum(1.0, np.abs(vals))
    real = vals[mask].real
    cplx = vals[~mask]
    complex_pass = np.abs(cplx - 1.0) < 1.0
    aL, aU = g.gammaA
    extras = {"ky0_disc_radius": complex_disc_bound(aL) if aL > 0 else float("nan")}
    if variant == "general":
        interval = real_interval_general(g)
        synth = synthetic_interval(g)
        real_pass = _inside(real, interval, rtol)
    elif variant == "simplified":
        sb = simplified_bounds(g.gammaA)
        interval = sb["sharp_interval"]
        synth = sb["synthetic_interval"]
        real_pass = _inside(real, interval, rtol) & _inside(real, synth, rtol)
        extras.update({k: v for k, v in sb.items() if np.isscalar(v)})
    else:
        raise ValueError(f"unknown bound variant {variant!r}")
    rng = (float(real.min()), float(real.max())) if real.size else (float("nan"),) * 2
    offending = list(cplx[~complex_pass]) + list(real[~real_pass])
    return BoundReport(variant, 1.0, tuple(interval), complex_pass, real_pass, rng, g,
                       tuple(synth), bool(aL <= 1.0 <= aU), extras, offending)
