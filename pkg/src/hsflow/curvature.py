"""Riemannian curvature of a 4-metric field by high-order differences.

Index conventions: ``christoffel[..., c, a, b]`` is Gamma^c_ab and
``riemann[..., a, b, c, d]`` is R_abcd with Ric_bd = g^ac R_abcd, so the
round sphere has positive Ricci curvature.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .torus import Grid, integrate, metric_pieces

# (a, b) index pairs of the ten independent entries of a symmetric 4x4 matrix
SYM4 = [(a, b) for a in range(4) for b in range(a, 4)]


def derivative_grid(grid, deriv="fd4"):
    """The grid used to differentiate the metric; fd4 unless asked otherwise."""
    if deriv == grid.backend:
        return grid
    return Grid(grid.shape, grid.spacing, grid.periodic, deriv, grid.workers,
                dealias=False, origin=grid.origin)


def _unpack_sym(packed):
    """(..., 10, *rest) packed symmetric -> (..., 4, 4, *rest)."""
    out = np.empty(packed.shape[:4] + (4, 4) + packed.shape[5:])
    for p, (a, b) in enumerate(SYM4):
        out[:, :, :, :, a, b] = out[:, :, :, :, b, a] = packed[:, :, :, :, p]
    return out


def metric_derivatives(grid, g, deriv="fd4", second=True):
    """d_c g_ab and (optionally) d_c d_d g_ab, as [..., a, b, c(, d)]."""
    dg_grid = derivative_grid(grid, deriv)
    packed = np.stack([g[..., a, b] for a, b in SYM4], axis=-1)
    dg = _unpack_sym(dg_grid.grad(packed, dealias=False))
    if not second:
        return dg, None
    return dg, _unpack_sym(dg_grid.hessian(packed, dealias=False))


def christoffel_from(ginv, dg):
    """Gamma^c_ab = g^cd (d_a g_db + d_b g_da - d_d g_ab) / 2."""
    # dg[..., a, b, c] = d_c g_ab
    lower = 0.5 * (np.einsum("...dba->...dab", dg) + dg - np.einsum("...abd->...dab", dg))
    return np.einsum("...cd,...dab->...cab", ginv, lower)


def christoffel(grid, g, deriv="fd4", ginv=None):
    if ginv is None:
        ginv, _ = metric_pieces(g)
    dg, _ = metric_derivatives(grid, g, deriv, second=False)
    return christoffel_from(ginv, dg)


@dataclass
class CurvatureBundle:
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    ginv: np.ndarray
    rm2: np.ndarray = None
    ric2: np.ndarray = None

    def bianchi_residual(self):
        R = self.riemann
        return np.abs(R + np.einsum("...abcd->...acdb", R) + np.einsum("...abcd->...adbc", R)).max()

    def pair_symmetry_residual(self):
        R = self.riemann
        return np.abs(R - np.einsum("...abcd->...cdab", R)).max()

    def independent_riemann(self):
        """The 20 algebraically independent components R_abcd, a<b, c<d, (ab)<=(cd), minus Bianchi."""
        pairs = [(a, b) for a in range(4) for b in range(a + 1, 4)]
        comps = []
        for i, (a, b) in enumerate(pairs):
            for (c, d) in pairs[i:]:
                if (a, b, c, d) == (0, 3, 1, 2):
                    continue  # fixed by the first Bianchi identity
                comps.append(self.riemann[..., a, b, c, d])
        return np.stack(comps, axis=-1)


def riemann_from(g, dg, ddg, gamma):
    """R_abcd from metric second derivatives and Christoffel symbols."""
    lin = 0.5 * (np.einsum("...adbc->...abcd", ddg) + np.einsum("...bcad->...abcd", ddg)
                 - np.einsum("...acbd->...abcd", ddg) - np.einsum("...bdac->...abcd", ddg))
    gl = np.einsum("...ef,...fad->...ead", g, gamma)  # Gamma_{e,ad} lowered on first slot
    quad = (np.einsum("...ebc,...ead->...abcd", gamma, gl)
            - np.einsum("...ebd,...eac->...abcd", gamma, gl))
    return lin + quad


def curvature_of_reference(grid, g, deriv="fd4"):
    """Numpy evaluation of :func:`curvature_of`, kept as an independent check."""
    ginv, _ = metric_pieces(g)
    dg, ddg = metric_derivatives(grid, g, deriv)
    gamma = christoffel_from(ginv, dg)
    R = riemann_from(g, dg, ddg, gamma)
    R = 0.5 * (R - np.einsum("...abcd->...bacd", R))
    R = 0.5 * (R - np.einsum("...abcd->...abdc", R))
    R = 0.5 * (R + np.einsum("...abcd->...cdab", R))
    ric = np.einsum("...ac,...abcd->...bd", ginv, R)
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    scal = np.einsum("...bd,...bd->...", ginv, ric)
    return CurvatureBundle(gamma, R, ric, scal, ginv)


def curvature_of(grid, g, deriv="fd4"):
    """Christoffels, Riemann, Ricci and scalar curvature of ``g``.

    Pair and skew symmetries of Riemann are imposed by averaging; the first
    Bianchi identity is left to be checked.
    """
    ginv, _ = metric_pieces(g)
    dg, ddg = metric_derivatives(grid, g, deriv)
    shape = g.shape[:-2]
    P = int(np.prod(shape))
    flat = lambda a: np.ascontiguousarray(a).reshape((P,) + a.shape[len(shape):])
    gamma = np.empty((P, 4, 4, 4))
    R = np.empty((P, 4, 4, 4, 4))
    ric = np.empty((P, 4, 4))
    scal = np.empty(P)
    rm2 = np.empty(P)
    ric2 = np.empty(P)
    kernels.curvature_pieces(flat(ginv), flat(g), flat(dg), flat(ddg), gamma, R, ric, scal, rm2, ric2)
    return CurvatureBundle(gamma.reshape(shape + (4, 4, 4)), R.reshape(shape + (4,) * 4),
                           ric.reshape(shape + (4, 4)), scal.reshape(shape), ginv,
                           rm2.reshape(shape), ric2.reshape(shape))


def ricci_of(grid, g, deriv="fd4", ginv=None):
    """Ricci tensor without storing the full Riemann tensor."""
    if ginv is None:
        ginv, _ = metric_pieces(g)
    dg, ddg = metric_derivatives(grid, g, deriv)
    gamma = christoffel_from(ginv, dg)
    ric = np.empty(g.shape)
    for s in range(g.shape[0]):
        R = riemann_from(g[s], dg[s], ddg[s], gamma[s])
        ric[s] = np.einsum("...ac,...abcd->...bd", ginv[s], R)
    return 0.5 * (ric + np.swapaxes(ric, -1, -2)), gamma


def rm_norm_sq(bundle):
    gi = bundle.ginv
    Rup = np.einsum("...ae,...bf,...cg,...dh,...efgh->...abcd", gi, gi, gi, gi, bundle.riemann,
                    optimize=True)
    return np.einsum("...abcd,...abcd->...", bundle.riemann, Rup)


def ric_norm_sq(ricci, ginv):
    return np.einsum("...ac,...bd,...ab,...cd->...", ginv, ginv, ricci, ricci)


def curvature_norms(grid, bundle, mu):
    """(sup|Rm|, int |Rm|^2 mu, sup|Ric|, int |Ric|^4 mu)."""
    rm2 = rm_norm_sq(bundle) if bundle.rm2 is None else bundle.rm2
    ric2 = ric_norm_sq(bundle.ricci, bundle.ginv) if bundle.ric2 is None else bundle.ric2
    return (float(np.sqrt(rm2.max())), integrate(grid, rm2 * mu),
            float(np.sqrt(ric2.max())), integrate(grid, ric2 ** 2 * mu))
