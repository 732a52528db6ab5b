"""Dense eigenvalue solvers.

General matrices go through balancing, Householder reduction to upper
Hessenberg form and the Francis implicit double-shift QR iteration;
symmetric matrices through Householder tridiagonalization and the implicit
QL iteration.  The kernels are compiled with numba.
"""
from __future__ import annotations

import numba
import numpy as np
import scipy.linalg as sla

__all__ = [
    "EigenConvergenceError",
    "balance",
    "hessenberg",
    "eig_dense",
    "eig_symmetric",
    "block_groups",
    "block_partition_eigs",
    "backward_errors",
]


class EigenConvergenceError(np.linalg.LinAlgError):
    """QR/QL iteration did not converge within its iteration budget."""


# --------------------------------------------------------------------------
# kernels

@numba.njit(cache=True)
def _balance(a):
    # radix-2 diagonal similarity balancing, in place
    n = a.shape[0]
    scale = np.ones(n)
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            r = 0.0
            c = 0.0
            for j in range(n):
                if j != i:
                    c += abs(a[j, i])
                    r += abs(a[i, j])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    g = 1.0 / f
                    scale[i] *= f
                    for j in range(n):
                        a[i, j] *= g
                    for j in range(n):
                        a[j, i] *= f
    return scale


@numba.njit(cache=True)
def _hessenberg(a):
    # Householder reduction to upper Hessenberg form, in place
    n = a.shape[0]
    v = np.empty(n)
    w = np.empty(n)
    for k in range(n - 2):
        alpha = 0.0
        for i in range(k + 1, n):
            alpha += a[i, k] * a[i, k]
        alpha = np.sqrt(alpha)
        if alpha == 0.0:
            continue
        if a[k + 1, k] > 0.0:
            alpha = -alpha
        vnorm2 = 0.0
        for i in range(k + 1, n):
            v[i] = a[i, k]
        v[k + 1] -= alpha
        for i in range(k + 1, n):
            vnorm2 += v[i] * v[i]
        if vnorm2 == 0.0:
            continue
        beta = 2.0 / vnorm2
        # rows: a[k+1:, k:] -= beta v (v^T a[k+1:, k:])
        for j in range(k, n):
            w[j] = 0.0
        for i in range(k + 1, n):
            vi = v[i]
            for j in range(k, n):
                w[j] += vi * a[i, j]
        for i in range(k + 1, n):
            bv = beta * v[i]
            for j in range(k, n):
                a[i, j] -= bv * w[j]
        # columns: a[:, k+1:] -= beta (a[:, k+1:] v) v^T
        for i in range(n):
            s = 0.0
            for j in range(k + 1, n):
                s += a[i, j] * v[j]
            s *= beta
            for j in range(k + 1, n):
                a[i, j] -= s * v[j]
        a[k + 1, k] = alpha
        for i in range(k + 2, n):
            a[i, k] = 0.0


@numba.njit(cache=True)
def _hqr(h, maxit):
    # Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
    # Works on a 1-based padded copy so the indexing follows the classical
    # formulation; returns (wr, wi, status) with status -1 on non-convergence.
    n = h.shape[0]
    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = h
    wr = np.zeros(n + 1)
    wi = np.zeros(n + 1)
    anorm = 0.0
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i, j])
    nn = n
    t = 0.0
    total = 0
    p = q = r = s = w = x = y = z = 0.0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            for ll in range(nn, 1, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = np.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + (z if p >= 0.0 else -z)
                        wr[nn - 1] = x + z
                        wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = 0.0
                        wi[nn] = 0.0
                    else:
                        wr[nn - 1] = x + p
                        wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if total >= maxit:
                        return wr[1:], wi[1:], -1
                    if its > 0 and its % 10 == 0:
                        # exceptional shift
                        t += x
                        for i in range(1, nn + 1):
                            a[i, i] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        x = 0.75 * s
                        y = x
                        w = -0.4375 * s * s
                    its += 1
                    total += 1
                    m = nn - 2
                    while m >= l:
                        z = a[m, m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                        q = a[m + 1, m + 1] - z - r - s
                        r = a[m + 2, m + 1]
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                        if u + v == v:
                            break
                        m -= 1
                    for i in range(m + 2, nn + 1):
                        a[i, i - 2] = 0.0
                        if i != m + 2:
                            a[i, i - 3] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = 0.0
                            if k != nn - 1:
                                r = a[k + 2, k - 1]
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = np.sqrt(p * p + q * q + r * r)
                        if p < 0.0:
                            s = -s
                        if s != 0.0:
                            if k == m:
                                if l != m:
                                    a[k, k - 1] = -a[k, k - 1]
                            else:
                                a[k, k - 1] = -s * x
                            p += s
                            x = p / s
                            y = q / s
                            z = r / s
                            q /= p
                            r /= p
                            for j in range(k, nn + 1):
                                p = a[k, j] + q * a[k + 1, j]
                                if k != nn - 1:
                                    p += r * a[k + 2, j]
                                    a[k + 2, j] -= p * z
                                a[k + 1, j] -= p * y
                                a[k, j] -= p * x
                            mmin = nn if nn < k + 3 else k + 3
                            for i in range(l, mmin + 1):
                                p = x * a[i, k] + y * a[i, k + 1]
                                if k != nn - 1:
                                    p += z * a[i, k + 2]
                                    a[i, k + 2] -= p * r
                                a[i, k + 1] -= p * q
                                a[i, k] -= p
            if l >= nn - 1:
                break
    return wr[1:], wi[1:], 0


@numba.njit(cache=True)
def _tridiagonalize(a):
    # Householder reduction of a symmetric matrix; returns (diag, subdiag)
    n = a.shape[0]
    v = np.empty(n)
    pvec = np.empty(n)
    for k in range(n - 2):
        alpha = 0.0
        for i in range(k + 1, n):
            alpha += a[i, k] * a[i, k]
        alpha = np.sqrt(alpha)
        if alpha == 0.0:
            continue
        if a[k + 1, k] > 0.0:
            alpha = -alpha
        for i in range(k + 1, n):
            v[i] = a[i, k]
        v[k + 1] -= alpha
        vnorm2 = 0.0
        for i in range(k + 1, n):
            vnorm2 += v[i] * v[i]
        if vnorm2 == 0.0:
            continue
        beta = 2.0 / vnorm2
        # p = beta A v, w = p - (beta/2)(p.v) v, A -= v w^T + w v^T
        for i in range(k + 1, n):
            s = 0.0
            for j in range(k + 1, n):
                s += a[i, j] * v[j]
            pvec[i] = beta * s
        kk = 0.0
        for i in range(k + 1, n):
            kk += pvec[i] * v[i]
        kk *= 0.5 * beta
        for i in range(k + 1, n):
            pvec[i] -= kk * v[i]
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i, j] -= v[i] * pvec[j] + pvec[i] * v[j]
        a[k + 1, k] = alpha
        a[k, k + 1] = alpha
        for i in range(k + 2, n):
            a[i, k] = 0.0
            a[k, i] = 0.0
    d = np.empty(n)
    e = np.zeros(n)
    for i in range(n):
        d[i] = a[i, i]
    for i in range(n - 1):
        e[i] = a[i + 1, i]
    return d, e


@numba.njit(cache=True)
def _tqli(d, e, maxit):
    # implicit QL with Wilkinson-type shifts on (d, e); e[i] couples i and i+1
    n = d.shape[0]
    total = 0
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) + dd == dd:
                    break
                m += 1
            if m == l:
                break
            if total >= maxit:
                return -1
            total += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0.0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            early = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    early = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if early:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return 0


# --------------------------------------------------------------------------
# drivers

def _square(M):
    M = np.array(M, dtype=np.float64, copy=True)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("eigensolver needs a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def balance(M):
    """Return ``(D^{-1} M D, d)`` with ``D = diag(d)`` a power-of-two scaling."""
    M = _square(M)
    d = _balance(M)
    return M, d


def hessenberg(M):
    """Upper Hessenberg matrix orthogonally similar to ``M``."""
    M = _square(M)
    _hessenberg(M)
    return M


def backward_errors(M, values, sample=8, rng=None):
    """Relative residuals ``||M v - lam v|| / ||M||`` of eigenvectors from inverse iteration.

    One vector per sampled eigenvalue, obtained by two steps of inverse
    iteration with a slightly perturbed shift.
    """
    M = np.asarray(M, dtype=np.float64)
    values = np.asarray(values)
    n = M.shape[0]
    if n == 0 or values.size == 0:
        return np.zeros(0)
    rng = np.random.default_rng(0) if rng is None else rng
    idx = rng.choice(values.size, size=min(sample, values.size), replace=False)
    normM = max(np.linalg.norm(M, 1), np.finfo(float).tiny)
    out = []
    for i in idx:
        lam = complex(values[i])
        shift = lam + 1e-10 * max(1.0, abs(lam)) * (1 + 1j)
        lu = sla.lu_factor(M - shift * np.eye(n), check_finite=False)
        v = rng.standard_normal(n) + 0j
        for _ in range(2):
            v = sla.lu_solve(lu, v, check_finite=False)
            v /= np.linalg.norm(v)
        out.append(np.linalg.norm(M @ v - lam * v) / normM)
    return np.array(out)


def eig_dense(M, check=True, sample=8, tol=1e-6):
    """All eigenvalues of a real square matrix, as a complex array.

    Parameters
    ----------
    check : bool
        Verify ``||M v - lam v|| <= tol ||M||`` on ``sample`` eigenvalues.

    Raises
    ------
    EigenConvergenceError
        If the QR iteration needs more than ``30 n`` iterations, or the
        backward-error check fails.
    """
    A = _square(M)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    _balance(A)
    _hessenberg(A)
    wr, wi, status = _hqr(A, 30 * n)
    if status != 0:
        raise EigenConvergenceError(f"QR iteration did not converge within {30 * n} iterations")
    vals = wr + 1j * wi
    if check:
        err = backward_errors(M, vals, sample=sample)
        if err.size and err.max() > tol:
            raise EigenConvergenceError(f"eigenvalue backward error {err.max():.2e} exceeds {tol:g}")
    return vals


def eig_symmetric(M):
    """Eigenvalues of a symmetric matrix, ascending."""
    A = _square(M)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    A = 0.5 * (A + A.T)
    d, e = _tridiagonalize(A)
    if _tqli(d, e, 30 * n) != 0:
        raise EigenConvergenceError(f"QL iteration did not converge within {30 * n} iterations")
    return np.sort(d)


def _components(nonzero):
    # strongly connected components of the block graph, in topological order
    k = nonzero.shape[0]
    reach = nonzero | np.eye(k, dtype=bool)
    for q in range(k):
        reach |= reach[:, [q]] & reach[[q], :]
    comps, seen = [], set()
    for i in range(k):
        if i not in seen:
            comp = [j for j in range(k) if reach[i, j] and reach[j, i]]
            seen.update(comp)
            comps.append(comp)
    return comps


def block_groups(M, sizes, rtol=1e-9):
    """Diagonal groups of a block triangular form of ``M`` over the partition ``sizes``.

    Off-diagonal blocks with norm below ``rtol * ||M||_F`` count as zero.
    Groups are lists of block indices in a triangular order.
    """
    M = np.asarray(M, dtype=np.float64)
    bounds = np.concatenate(([0], np.cumsum(sizes)))
    if bounds[-1] != M.shape[0]:
        raise ValueError("block sizes do not add up to the matrix order")
    k = len(sizes)
    thresh = rtol * np.linalg.norm(M)
    nz = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(k):
            blk = M[bounds[i]:bounds[i + 1], bounds[j]:bounds[j + 1]]
            nz[i, j] = blk.size > 0 and np.linalg.norm(blk) > thresh
    return _components(nz)


def block_partition_eigs(M, sizes, rtol=1e-9, groups=None, **kwargs):
    """Eigenvalues of ``M`` exploiting block triangular structure.

    The eigenvalues are those of the diagonal blocks found by
    :func:`block_groups`.  This avoids the large perturbation of defective
    eigenvalues that an unstructured solve of the whole matrix incurs.

    Returns ``(values, groups)``.
    """
    M = np.asarray(M, dtype=np.float64)
    if groups is None:
        groups = block_groups(M, sizes, rtol)
    bounds = np.concatenate(([0], np.cumsum(sizes)))
    vals = []
    for g in groups:
        idx = np.concatenate([np.arange(bounds[b], bounds[b + 1]) for b in g])
        if idx.size:
            vals.append(eig_dense(M[np.ix_(idx, idx)], **kwargs))
    return np.concatenate(vals) if vals else np.zeros(0, dtype=complex), groups
