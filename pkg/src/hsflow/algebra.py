"""Pointwise linear algebra of hypersymplectic triples.

All functions broadcast over leading axes.  A 2-form is stored as its six
components on the basis

    e01, e02, e03, e23, e31, e12

(``eab`` meaning e^a ^ e^b) with orientation e0123 > 0.  A triple carries
the form index before the component index, i.e. shape ``(..., 3, 6)``.
Matrices are stored with the matrix indices last.
"""
import itertools

import numpy as np

from .errors import NonFiniteInput, NotHypersymplectic

PAIRS = ((0, 1), (0, 2), (0, 3), (2, 3), (3, 1), (1, 2))
# Euclidean Hodge star on the basis above is the swap e01 <-> e23 etc.
STAR0 = np.array([3, 4, 5, 0, 1, 2])

LEVI3 = np.zeros((3, 3, 3))
for _p in itertools.permutations(range(3)):
    LEVI3[_p] = np.linalg.det(np.eye(3)[list(_p)])

LEVI4 = np.zeros((4, 4, 4, 4))
for _p in itertools.permutations(range(4)):
    LEVI4[_p] = np.linalg.det(np.eye(4)[list(_p)])

PD_RTOL = 1e-12


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput("non-finite input")


def standard_triple():
    """The flat hyperkaehler triple (e01+e23, e02+e31, e03+e12)."""
    t = np.zeros((3, 6))
    for i in range(3):
        t[i, i] = t[i, i + 3] = 1.0
    return t


def form2_to_matrix(w):
    """Antisymmetric 4x4 matrix W with w = 1/2 W_ab e^a ^ e^b."""
    w = np.asarray(w)
    W = np.zeros(w.shape[:-1] + (4, 4), dtype=w.dtype)
    for c, (a, b) in enumerate(PAIRS):
        W[..., a, b] = w[..., c]
        W[..., b, a] = -w[..., c]
    return W


def matrix_to_form2(W):
    W = np.asarray(W)
    return np.stack([W[..., a, b] for a, b in PAIRS], axis=-1)


def wedge(a, b):
    """Coefficient of e0123 in a ^ b for two 2-forms."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.sum(a * b[..., STAR0], axis=-1)


def wedge_gram(triple, mu=1.0):
    """Matrix of wedge pairings (w_i ^ w_j) / (2 mu)."""
    triple = np.asarray(triple, dtype=float)
    _check_finite(triple, mu)
    gram = np.einsum("...ic,...jc->...ij", triple, triple[..., STAR0])
    return 0.5 * gram / np.asarray(mu)[..., None, None]


def cholesky_pivots(M):
    """Pivots (squared diagonal of the Cholesky factor) of symmetric ``M``.

    Runs an unpivoted outer-product Cholesky vectorised over leading axes.
    Non-positive pivots are carried through as they are, so the caller can
    compare against a tolerance.
    """
    A = np.array(M, dtype=float, copy=True)
    n = A.shape[-1]
    piv = np.empty(A.shape[:-1])
    for k in range(n):
        d = A[..., k, k].copy()
        piv[..., k] = d
        safe = np.where(d > 0, d, 1.0)
        col = A[..., k + 1:, k] / safe[..., None]
        A[..., k + 1:, k + 1:] -= col[..., :, None] * A[..., k, k + 1:][..., None, :]
    return piv


def is_positive_definite(M, rtol=PD_RTOL):
    """Cholesky test with pivot tolerance ``rtol * (1 + |M|_inf)``."""
    M = np.asarray(M, dtype=float)
    scale = 1.0 + np.max(np.abs(M), axis=(-2, -1))
    return np.all(cholesky_pivots(M) > rtol * scale[..., None], axis=-1)


def is_hypersymplectic(triple):
    """Return ``(flag, margin)``; margin is the smallest Gram eigenvalue."""
    gram = wedge_gram(triple, 1.0)
    margin = np.linalg.eigvalsh(gram)[..., 0]
    flag = is_positive_definite(gram) & (margin > 0)
    return flag, margin


def normalize_volume(triple):
    """Return ``(m, Q)`` with ``m e0123`` the volume form making det Q = 1."""
    gram = wedge_gram(triple, 1.0)
    ok = is_positive_definite(gram)
    if not np.all(ok):
        bad = np.argwhere(~np.atleast_1d(ok))[0]
        margin = np.linalg.eigvalsh(np.reshape(gram, (-1, 3, 3)))[:, 0].min()
        raise NotHypersymplectic(
            "wedge Gram matrix not positive definite", index=tuple(bad), margin=margin
        )
    m = np.cbrt(np.linalg.det(gram))
    return m, gram / m[..., None, None]


def metric_from_triple(triple, m=None):
    """Induced metric g(u, v) = eps^{ijk} i_u w_i ^ i_v w_j ^ w_k / (6 mu).

    ``m`` may be passed when the normalised volume coefficient is already
    known.
    """
    triple = np.asarray(triple, dtype=float)
    if m is None:
        m, _ = normalize_volume(triple)
    W = form2_to_matrix(triple)
    Wt = form2_to_matrix(triple[..., STAR0])
    g = np.zeros(triple.shape[:-2] + (4, 4))
    for i, j, k in itertools.permutations(range(3)):
        s = LEVI3[i, j, k]
        g += s * (W[..., i, :, :] @ Wt[..., k, :, :] @ np.swapaxes(W[..., j, :, :], -1, -2))
    g /= 6.0 * np.asarray(m)[..., None, None]
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def hodge_star_2(g, w, ginv=None, sqrtg=None):
    """Hodge star of 2-forms with respect to ``g`` and orientation e0123."""
    g = np.asarray(g, dtype=float)
    if ginv is None:
        ginv = np.linalg.inv(g)
    if sqrtg is None:
        sqrtg = np.sqrt(np.linalg.det(g))
    W = form2_to_matrix(w)
    raised = ginv @ W @ ginv
    return np.asarray(sqrtg)[..., None] * matrix_to_form2(raised)[..., STAR0]


def inner2(g, a, b, ginv=None):
    """Pointwise inner product of 2-forms, normalised so |e01|^2 = 1 for g = delta."""
    if ginv is None:
        ginv = np.linalg.inv(g)
    A = form2_to_matrix(a)
    B = form2_to_matrix(b)
    return 0.5 * np.einsum("...ab,...ac,...bd,...cd->...", A, ginv, ginv, B)


def seven_metric(g, Q):
    """Block-diagonal metric g + Q_ij dt^i dt^j on M x T^3."""
    g = np.asarray(g, dtype=float)
    Q = np.asarray(Q, dtype=float)
    out = np.zeros(np.broadcast_shapes(g.shape[:-2], Q.shape[:-2]) + (7, 7))
    out[..., :4, :4] = g
    out[..., 4:, 4:] = Q
    return out


def seven_volume_density(g, Q):
    return np.sqrt(np.linalg.det(seven_metric(g, Q)))


def sym6_to_matrix(s):
    """Symmetric 3x3 matrix from (Q11, Q22, Q33, Q23, Q13, Q12)."""
    s = np.asarray(s, dtype=float)
    M = np.empty(s.shape[:-1] + (3, 3))
    M[..., 0, 0], M[..., 1, 1], M[..., 2, 2] = s[..., 0], s[..., 1], s[..., 2]
    M[..., 1, 2] = M[..., 2, 1] = s[..., 3]
    M[..., 0, 2] = M[..., 2, 0] = s[..., 4]
    M[..., 0, 1] = M[..., 1, 0] = s[..., 5]
    return M


def matrix_to_sym6(M):
    M = np.asarray(M)
    return np.stack(
        [M[..., 0, 0], M[..., 1, 1], M[..., 2, 2], M[..., 1, 2], M[..., 0, 2], M[..., 0, 1]],
        axis=-1,
    )
