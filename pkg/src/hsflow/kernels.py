"""Fused pointwise kernels for the flow right-hand side.

These compute, point by point, the same quantities as the reference
functions in :mod:`hsflow.algebra` (normalised Q, induced metric, raised
Q^-1 omega) without numpy temporaries.  Every point is independent, so
results do not depend on the thread count.
"""
import numba
import numpy as np

from .algebra import PD_RTOL

# the bundled TBB is too old for numba; skip it rather than warn
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# e01, e02, e03, e23, e31, e12
_PA = np.array([0, 0, 0, 2, 3, 1])
_PB = np.array([1, 2, 3, 3, 1, 2])
_CHUNK = 256


@numba.njit(cache=True, inline="always")
def _to_mat(w, out):
    for a in range(4):
        for b in range(4):
            out[a, b] = 0.0
    for c in range(6):
        out[_PA[c], _PB[c]] = w[c]
        out[_PB[c], _PA[c]] = -w[c]


@numba.njit(cache=True, error_model="numpy", inline="always")
def _inv3(A, out):
    c00 = A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1]
    c01 = A[1, 2] * A[2, 0] - A[1, 0] * A[2, 2]
    c02 = A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]
    det = A[0, 0] * c00 + A[0, 1] * c01 + A[0, 2] * c02
    if det == 0.0:
        return det
    out[0, 0] = c00 / det
    out[1, 0] = c01 / det
    out[2, 0] = c02 / det
    out[0, 1] = (A[0, 2] * A[2, 1] - A[0, 1] * A[2, 2]) / det
    out[1, 1] = (A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]) / det
    out[2, 1] = (A[0, 1] * A[2, 0] - A[0, 0] * A[2, 1]) / det
    out[0, 2] = (A[0, 1] * A[1, 2] - A[0, 2] * A[1, 1]) / det
    out[1, 2] = (A[0, 2] * A[1, 0] - A[0, 0] * A[1, 2]) / det
    out[2, 2] = (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]) / det
    return det


@numba.njit(cache=True, error_model="numpy", inline="always")
def _inv4(m, inv):
    # cofactor expansion, symmetric input
    inv[0, 0] = (m[1, 1] * m[2, 2] * m[3, 3] - m[1, 1] * m[2, 3] * m[3, 2] - m[2, 1] * m[1, 2] * m[3, 3]
                 + m[2, 1] * m[1, 3] * m[3, 2] + m[3, 1] * m[1, 2] * m[2, 3] - m[3, 1] * m[1, 3] * m[2, 2])
    inv[1, 0] = (-m[1, 0] * m[2, 2] * m[3, 3] + m[1, 0] * m[2, 3] * m[3, 2] + m[2, 0] * m[1, 2] * m[3, 3]
                 - m[2, 0] * m[1, 3] * m[3, 2] - m[3, 0] * m[1, 2] * m[2, 3] + m[3, 0] * m[1, 3] * m[2, 2])
    inv[2, 0] = (m[1, 0] * m[2, 1] * m[3, 3] - m[1, 0] * m[2, 3] * m[3, 1] - m[2, 0] * m[1, 1] * m[3, 3]
                 + m[2, 0] * m[1, 3] * m[3, 1] + m[3, 0] * m[1, 1] * m[2, 3] - m[3, 0] * m[1, 3] * m[2, 1])
    inv[3, 0] = (-m[1, 0] * m[2, 1] * m[3, 2] + m[1, 0] * m[2, 2] * m[3, 1] + m[2, 0] * m[1, 1] * m[3, 2]
                 - m[2, 0] * m[1, 2] * m[3, 1] - m[3, 0] * m[1, 1] * m[2, 2] + m[3, 0] * m[1, 2] * m[2, 1])
    inv[1, 1] = (m[0, 0] * m[2, 2] * m[3, 3] - m[0, 0] * m[2, 3] * m[3, 2] - m[2, 0] * m[0, 2] * m[3, 3]
                 + m[2, 0] * m[0, 3] * m[3, 2] + m[3, 0] * m[0, 2] * m[2, 3] - m[3, 0] * m[0, 3] * m[2, 2])
    inv[2, 1] = (-m[0, 0] * m[2, 1] * m[3, 3] + m[0, 0] * m[2, 3] * m[3, 1] + m[2, 0] * m[0, 1] * m[3, 3]
                 - m[2, 0] * m[0, 3] * m[3, 1] - m[3, 0] * m[0, 1] * m[2, 3] + m[3, 0] * m[0, 3] * m[2, 1])
    inv[3, 1] = (m[0, 0] * m[2, 1] * m[3, 2] - m[0, 0] * m[2, 2] * m[3, 1] - m[2, 0] * m[0, 1] * m[3, 2]
                 + m[2, 0] * m[0, 2] * m[3, 1] + m[3, 0] * m[0, 1] * m[2, 2] - m[3, 0] * m[0, 2] * m[2, 1])
    inv[2, 2] = (m[0, 0] * m[1, 1] * m[3, 3] - m[0, 0] * m[1, 3] * m[3, 1] - m[1, 0] * m[0, 1] * m[3, 3]
                 + m[1, 0] * m[0, 3] * m[3, 1] + m[3, 0] * m[0, 1] * m[1, 3] - m[3, 0] * m[0, 3] * m[1, 1])
    inv[3, 2] = (-m[0, 0] * m[1, 1] * m[3, 2] + m[0, 0] * m[1, 2] * m[3, 1] + m[1, 0] * m[0, 1] * m[3, 2]
                 - m[1, 0] * m[0, 2] * m[3, 1] - m[3, 0] * m[0, 1] * m[1, 2] + m[3, 0] * m[0, 2] * m[1, 1])
    inv[3, 3] = (m[0, 0] * m[1, 1] * m[2, 2] - m[0, 0] * m[1, 2] * m[2, 1] - m[1, 0] * m[0, 1] * m[2, 2]
                 + m[1, 0] * m[0, 2] * m[2, 1] + m[2, 0] * m[0, 1] * m[1, 2] - m[2, 0] * m[0, 2] * m[1, 1])
    det = m[0, 0] * inv[0, 0] + m[0, 1] * inv[1, 0] + m[0, 2] * inv[2, 0] + m[0, 3] * inv[3, 0]
    if det == 0.0:
        return det
    for a in range(4):
        for b in range(a + 1):
            v = inv[a, b] / det
            inv[a, b] = v
            inv[b, a] = v
    return det


@numba.njit(cache=True, error_model="numpy", inline="always")
def _point(w, m_out, Q_out, Qinv_out, g_out, ginv_out, X_out, p,
           gram, Ginv, W, Wt, wt, g, T, gi, E, Y, eta):
    for i in range(3):
        for j in range(i + 1):
            s = (w[i, 0] * w[j, 3] + w[i, 3] * w[j, 0] + w[i, 1] * w[j, 4]
                 + w[i, 4] * w[j, 1] + w[i, 2] * w[j, 5] + w[i, 5] * w[j, 2])
            gram[i, j] = 0.5 * s
            gram[j, i] = 0.5 * s
    det = _inv3(gram, Ginv)
    if not det > 0.0 or not gram[0, 0] > 0.0:
        return 1
    m = np.cbrt(det)
    # Cholesky pivots of Q = gram / m against the same tolerance as the numpy check
    big = 0.0
    for i in range(3):
        for j in range(3):
            big = max(big, abs(gram[i, j]))
    tol = PD_RTOL * (1.0 + big / m) * m
    d1 = gram[1, 1] - gram[0, 1] * gram[0, 1] / gram[0, 0]
    if not (gram[0, 0] > tol and d1 > tol and det / (gram[0, 0] * d1) > tol):
        return 1
    m_out[p] = m
    for i in range(3):
        for j in range(3):
            Q_out[p, i, j] = gram[i, j] / m
            Qinv_out[p, i, j] = Ginv[i, j] * m
    for i in range(3):
        _to_mat(w[i], W[i])
        for c in range(6):
            wt[c] = w[i, (c + 3) % 6]
        _to_mat(wt, Wt[i])
    for u in range(4):
        for v in range(4):
            g[u, v] = 0.0
    for cyc in range(3):
        i = cyc
        j = (cyc + 1) % 3
        k = (cyc + 2) % 3
        for a in range(4):
            for b in range(4):
                s = 0.0
                for c in range(4):
                    s += W[i, a, c] * Wt[k, c, b]
                T[a, b] = s
        for u in range(4):
            for v in range(4):
                s = 0.0
                for b in range(4):
                    s += T[u, b] * W[j, v, b]
                g[u, v] += s
                g[v, u] += s
    for u in range(4):
        for v in range(u + 1):
            s = 0.5 * (g[u, v] + g[v, u]) / (6.0 * m)
            g[u, v] = s
            g[v, u] = s
    if _inv4(g, gi) == 0.0:
        return 1
    for u in range(4):
        for v in range(4):
            g_out[p, u, v] = g[u, v]
            ginv_out[p, u, v] = gi[u, v]
    for k in range(3):
        for c in range(6):
            s = 0.0
            for l in range(3):
                s += Qinv_out[p, k, l] * w[l, c]
            eta[c] = s
        _to_mat(eta, E)
        for a in range(4):
            for b in range(4):
                s = 0.0
                for c in range(4):
                    s += E[a, c] * gi[c, b]
                Y[a, b] = s
        for c in range(6):
            a = _PA[c]
            b = _PB[c]
            s = 0.0
            for e in range(4):
                s += gi[a, e] * Y[e, b]
            X_out[p, k, c] = m * s
    return 0


@numba.njit(cache=True, parallel=True, error_model="numpy")
def triple_pieces(omega, m_out, Q_out, Qinv_out, g_out, ginv_out, X_out):
    """Per point: m, Q, Q^-1, g, g^-1 and X_k = m g^-1 (Q^-1 omega)_k g^-1.

    ``omega`` has shape (P, 3, 6); X is returned in 2-form component order.
    Returns the number of points whose wedge Gram determinant is not positive.
    """
    P = omega.shape[0]
    nchunk = (P + _CHUNK - 1) // _CHUNK
    bad = np.zeros(nchunk, dtype=np.int64)
    for ch in numba.prange(nchunk):
        # scratch is per chunk; per-point allocation dominates otherwise
        gram = np.empty((3, 3))
        Ginv = np.empty((3, 3))
        W = np.empty((3, 4, 4))
        Wt = np.empty((3, 4, 4))
        wt = np.empty(6)
        g = np.empty((4, 4))
        T = np.empty((4, 4))
        gi = np.empty((4, 4))
        E = np.empty((4, 4))
        Y = np.empty((4, 4))
        eta = np.empty(6)
        for p in range(ch * _CHUNK, min(P, (ch + 1) * _CHUNK)):
            bad[ch] += _point(omega[p], m_out, Q_out, Qinv_out, g_out, ginv_out, X_out, p,
                              gram, Ginv, W, Wt, wt, g, T, gi, E, Y, eta)
    return bad.sum()


@numba.njit(cache=True, parallel=True)
def min_eig_sym3(A, out):
    """Smallest eigenvalue of each symmetric 3x3 matrix (closed-form trigonometric solution)."""
    P = A.shape[0]
    for p in numba.prange(P):
        a = A[p]
        p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
        q = (a[0, 0] + a[1, 1] + a[2, 2]) / 3.0
        if p1 == 0.0:
            out[p] = min(a[0, 0], min(a[1, 1], a[2, 2]))
            continue
        p2 = (a[0, 0] - q) ** 2 + (a[1, 1] - q) ** 2 + (a[2, 2] - q) ** 2 + 2.0 * p1
        pp = np.sqrt(p2 / 6.0)
        b00 = (a[0, 0] - q) / pp
        b11 = (a[1, 1] - q) / pp
        b22 = (a[2, 2] - q) / pp
        b01 = a[0, 1] / pp
        b02 = a[0, 2] / pp
        b12 = a[1, 2] / pp
        r = 0.5 * (b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02)
                   + b02 * (b01 * b12 - b11 * b02))
        r = min(1.0, max(-1.0, r))
        phi = np.arccos(r) / 3.0
        lam = q + 2.0 * pp * np.cos(phi + 2.0 * np.pi / 3.0)
        # Newton polish on det(A - lam I)
        for _ in range(2):
            d0 = a[0, 0] - lam
            d1 = a[1, 1] - lam
            d2 = a[2, 2] - lam
            f = (d0 * (d1 * d2 - a[1, 2] ** 2) - a[0, 1] * (a[0, 1] * d2 - a[1, 2] * a[0, 2])
                 + a[0, 2] * (a[0, 1] * a[1, 2] - d1 * a[0, 2]))
            fp = -(d1 * d2 - a[1, 2] ** 2) - (d0 * d2 - a[0, 2] ** 2) - (d0 * d1 - a[0, 1] ** 2)
            if fp != 0.0:
                lam -= f / fp
        out[p] = lam


@numba.njit(cache=True, parallel=True)
def torsion_from_divergence(div, g, m, Q, tau_out):
    """tau_i = Q_ik d*(eta_k) with (d* eta_k)_b = -g_bc div_k^c / m."""
    P = div.shape[0]
    for p in numba.prange(P):
        ds = np.empty((3, 4))
        for k in range(3):
            for b in range(4):
                s = 0.0
                for c in range(4):
                    s += g[p, b, c] * div[p, k, c]
                ds[k, b] = -s / m[p]
        for i in range(3):
            for b in range(4):
                s = 0.0
                for k in range(3):
                    s += Q[p, i, k] * ds[k, b]
                tau_out[p, i, b] = s


@numba.njit(cache=True, parallel=True)
def spectral_divergence(Xh, k0, k1, k2, k3, out):
    """sum_a i k_a Xh^{ac} with Xh of shape (n0, n1, n2, n3, B, 6) in 2-form order."""
    n0 = Xh.shape[0]
    for i0 in numba.prange(n0):
        for i1 in range(Xh.shape[1]):
            for i2 in range(Xh.shape[2]):
                for i3 in range(Xh.shape[3]):
                    a0 = 1j * k0[i0]
                    a1 = 1j * k1[i1]
                    a2 = 1j * k2[i2]
                    a3 = 1j * k3[i3]
                    for b in range(Xh.shape[4]):
                        x = Xh[i0, i1, i2, i3, b]
                        o = out[i0, i1, i2, i3, b]
                        # pairs 01 02 03 23 31 12
                        o[0] = -(a1 * x[0] + a2 * x[1] + a3 * x[2])
                        o[1] = a0 * x[0] + a3 * x[4] - a2 * x[5]
                        o[2] = a0 * x[1] - a3 * x[3] + a1 * x[5]
                        o[3] = a0 * x[2] + a2 * x[3] - a1 * x[4]


@numba.njit(cache=True, parallel=True)
def spectral_exterior1(ah, k0, k1, k2, k3, out):
    """d of 1-forms in Fourier space: (n0, n1, n2, n3, B, 4) -> (..., B, 6)."""
    n0 = ah.shape[0]
    for i0 in numba.prange(n0):
        for i1 in range(ah.shape[1]):
            for i2 in range(ah.shape[2]):
                for i3 in range(ah.shape[3]):
                    a0 = 1j * k0[i0]
                    a1 = 1j * k1[i1]
                    a2 = 1j * k2[i2]
                    a3 = 1j * k3[i3]
                    for b in range(ah.shape[4]):
                        x = ah[i0, i1, i2, i3, b]
                        o = out[i0, i1, i2, i3, b]
                        o[0] = a0 * x[1] - a1 * x[0]
                        o[1] = a0 * x[2] - a2 * x[0]
                        o[2] = a0 * x[3] - a3 * x[0]
                        o[3] = a2 * x[3] - a3 * x[2]
                        o[4] = a3 * x[1] - a1 * x[3]
                        o[5] = a1 * x[2] - a2 * x[1]


def set_threads(workers):
    numba.set_num_threads(max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS)))


@numba.njit(cache=True, parallel=True)
def curvature_pieces(ginv, g, dg, ddg, gamma_out, R_out, ric_out, scal_out, rm2_out, ric2_out):
    """Christoffels, symmetrised Riemann, Ricci, scalar, |Rm|^2 and |Ric|^2 per point.

    ``dg[p, a, b, c]`` is d_c g_ab and ``ddg[p, a, b, c, d]`` is d_c d_d g_ab.
    Conventions match :func:`hsflow.curvature.riemann_from`.
    """
    P = g.shape[0]
    nchunk = (P + _CHUNK - 1) // _CHUNK
    for ch in numba.prange(nchunk):
        low = np.empty((4, 4, 4))
        gl = np.empty((4, 4, 4))
        R0 = np.empty((4, 4, 4, 4))
        A = np.empty((4, 4, 4, 4))
        B = np.empty((4, 4, 4, 4))
        for p in range(ch * _CHUNK, min(P, (ch + 1) * _CHUNK)):
            gi = ginv[p]
            for d in range(4):
                for a in range(4):
                    for b in range(4):
                        low[d, a, b] = 0.5 * (dg[p, d, b, a] + dg[p, d, a, b] - dg[p, a, b, d])
            for c in range(4):
                for a in range(4):
                    for b in range(4):
                        s = 0.0
                        for d in range(4):
                            s += gi[c, d] * low[d, a, b]
                        gamma_out[p, c, a, b] = s
            # gl[e, a, d] = g_ef Gamma^f_ad
            for e in range(4):
                for a in range(4):
                    for d in range(4):
                        s = 0.0
                        for f in range(4):
                            s += g[p, e, f] * gamma_out[p, f, a, d]
                        gl[e, a, d] = s
            for a in range(4):
                for b in range(4):
                    for c in range(4):
                        for d in range(4):
                            s = 0.5 * (ddg[p, a, d, b, c] + ddg[p, b, c, a, d]
                                       - ddg[p, a, c, b, d] - ddg[p, b, d, a, c])
                            for e in range(4):
                                s += (gamma_out[p, e, b, c] * gl[e, a, d]
                                      - gamma_out[p, e, b, d] * gl[e, a, c])
                            R0[a, b, c, d] = s
            for a in range(4):
                for b in range(4):
                    for c in range(4):
                        for d in range(4):
                            x = 0.25 * (R0[a, b, c, d] - R0[b, a, c, d] - R0[a, b, d, c] + R0[b, a, d, c])
                            y = 0.25 * (R0[c, d, a, b] - R0[d, c, a, b] - R0[c, d, b, a] + R0[d, c, b, a])
                            R_out[p, a, b, c, d] = 0.5 * (x + y)
            for b in range(4):
                for d in range(4):
                    s = 0.0
                    for a in range(4):
                        for c in range(4):
                            s += gi[a, c] * R_out[p, a, b, c, d]
                    ric_out[p, b, d] = s
            for b in range(4):
                for d in range(b):
                    s = 0.5 * (ric_out[p, b, d] + ric_out[p, d, b])
                    ric_out[p, b, d] = s
                    ric_out[p, d, b] = s
            s = 0.0
            for b in range(4):
                for d in range(4):
                    s += gi[b, d] * ric_out[p, b, d]
            scal_out[p] = s
            # raise all four indices one at a time
            for a in range(4):
                for b in range(4):
                    for c in range(4):
                        for d in range(4):
                            s = 0.0
                            for e in range(4):
                                s += gi[a, e] * R_out[p, e, b, c, d]
                            A[a, b, c, d] = s
            for a in range(4):
                for b in range(4):
                    for c in range(4):
                        for d in range(4):
                            s = 0.0
                            for e in range(4):
                                s += gi[b, e] * A[a, e, c, d]
                            B[a, b, c, d] = s
            for a in range(4):
                for b in range(4):
                    for c in range(4):
                        for d in range(4):
                            s = 0.0
                            for e in range(4):
                                s += gi[c, e] * B[a, b, e, d]
                            A[a, b, c, d] = s
            s2 = 0.0
            for a in range(4):
                for b in range(4):
                    for c in range(4):
                        for d in range(4):
                            s = 0.0
                            for e in range(4):
                                s += gi[d, e] * A[a, b, c, e]
                            s2 += s * R_out[p, a, b, c, d]
            rm2_out[p] = s2
            s2 = 0.0
            for a in range(4):
                for b in range(4):
                    for c in range(4):
                        for d in range(4):
                            s2 += gi[a, c] * gi[b, d] * ric_out[p, a, b] * ric_out[p, c, d]
            ric2_out[p] = s2
