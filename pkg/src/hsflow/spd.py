"""Geometry of the space of positive-definite symmetric 3x3 matrices.

The invariant metric is <A, B>_P = tr(P^-1 A P^-1 B).  Its Levi-Civita
connection is Gamma_P(A, B) = -(A P^-1 B + B P^-1 A) / 2, which is what the
target-side covariant derivatives below use.

Derivative arrays put the base index before the matrix indices:
``dQ[..., a, :, :]`` is d_a Q and ``ddQ[..., a, b, :, :]`` is d_a d_b Q.
"""
from dataclasses import dataclass

import numpy as np

from .algebra import cholesky_pivots
from .errors import SingularBase

SINGULAR_RTOL = 1e-13


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def checked_inverse(P):
    """Inverse of SPD ``P``; raises SingularBase on a tiny Cholesky pivot."""
    P = np.asarray(P, dtype=float)
    scale = 1.0 + np.max(np.abs(P), axis=(-2, -1))
    piv = cholesky_pivots(P)
    if np.any(piv <= SINGULAR_RTOL * scale[..., None]):
        raise SingularBase("base point is not positive definite")
    return _sym(np.linalg.inv(P))


@dataclass
class QJet:
    """Value, first and second derivatives of a P-valued map, plus the base metric."""

    Q: np.ndarray
    dQ: np.ndarray
    ddQ: np.ndarray
    g: np.ndarray
    ginv: np.ndarray = None
    Qinv: np.ndarray = None

    def __post_init__(self):
        if self.ginv is None:
            self.ginv = np.linalg.inv(self.g)
        if self.Qinv is None:
            self.Qinv = checked_inverse(self.Q)


def p_inner(P, A, B):
    Pinv = checked_inverse(P)
    return np.einsum("...ij,...jk,...kl,...li->...", Pinv, A, Pinv, B)


def _flat(A, n):
    """Merge the trailing ``n`` axes."""
    return A.reshape(A.shape[: A.ndim - n] + (-1,))


def _raise(ginv, X):
    """g^ab X_b... over the first non-batch axis of X (shape ..., 4, *rest)."""
    nb = ginv.ndim - 2
    return (ginv @ X.reshape(X.shape[:nb] + (4, -1))).reshape(X.shape)


def _gamma_dq(christoffel, dQ):
    """Gamma^c_ab d_c Q, shape (..., a, b, 3, 3)."""
    G = np.swapaxes(_flat(christoffel, 2), -1, -2)
    return (G @ _flat(dQ, 2)).reshape(dQ.shape[:-3] + (4, 4, 3, 3))


def dq_outer(jet):
    """The 2-tensor <d_a Q, d_b Q>_Q."""
    X = jet.Qinv[..., None, :, :] @ jet.dQ
    return _flat(X, 2) @ np.swapaxes(_flat(np.swapaxes(X, -1, -2), 2), -1, -2)


def dq_norm_sq(jet):
    return np.einsum("...ab,...ab->...", jet.ginv, dq_outer(jet))


def harmonic_laplacian(jet, christoffel=None):
    """Tension field: Delta(Q_ij) - g^ab (d_a Q Q^-1 d_b Q)_ij.

    ``christoffel[..., c, a, b]`` is Gamma^c_ab of the base metric; ``None``
    means a flat base in Cartesian coordinates.
    """
    hess = jet.ddQ
    if christoffel is not None:
        hess = hess - _gamma_dq(christoffel, jet.dQ)
    gi = jet.ginv
    batch = hess.shape[:-4]
    lap = (_flat(gi, 2)[..., None, :] @ hess.reshape(batch + (16, 9))).reshape(batch + (3, 3))
    Y = jet.dQ @ jet.Qinv[..., None, :, :]
    Z = _raise(gi, jet.dQ)
    quad = (Y @ Z).sum(axis=-3)
    return _sym(lap - quad)


def map_hessian(jet, christoffel=None):
    """Second fundamental form (covariant Hessian) of Q as a map into P."""
    hess = jet.ddQ
    if christoffel is not None:
        hess = hess - _gamma_dq(christoffel, jet.dQ)
    Y = jet.dQ @ jet.Qinv[..., None, :, :]
    cross = Y[..., :, None, :, :] @ jet.dQ[..., None, :, :, :]
    return hess - 0.5 * (cross + np.swapaxes(cross, -4, -3))


def target_covariant(Q, Qinv, dQ, V, dV):
    """Covariant derivative along the map of a section V of Q^*TP.

    ``dV[..., a, :, :]`` is the coordinate derivative d_a V.
    """
    A = dQ @ Qinv[..., None, :, :] @ V[..., None, :, :]
    return dV - 0.5 * (A + np.swapaxes(A, -1, -2))


def p_norm_sq_2tensor(H, Qinv, ginv):
    """|H|^2 for a symmetric 2-tensor H_ab with values in Q^*TP."""
    X = Qinv[..., None, None, :, :] @ H
    Y = _raise(ginv, X)
    Y = (ginv[..., None, :, :] @ _flat(Y, 2)).reshape(Y.shape)
    XT = np.swapaxes(X, -1, -2)
    return np.sum(_flat(Y, 4) * _flat(XT, 4), axis=-1)
