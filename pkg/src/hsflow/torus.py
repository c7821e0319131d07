"""Discrete fields and exterior calculus on the flat 4-torus.

Fields are numpy arrays whose first four axes are the grid axes
(x0, x1, x2, x3) and whose trailing axes are components.  Derivative
indices produced by :meth:`Grid.grad` and :meth:`Grid.hessian` are appended
after the components.

Two derivative backends are available: ``"spectral"`` (FFT per axis, with
optional 2/3-rule truncation) and ``"fd4"`` (centred fourth-order
stencils).  Chart grids for local constructions are non-periodic and always
use ``fd4``; values within :attr:`Grid.margin` points of the boundary are
polluted by wrap-around and must be excluded by the consumer.
"""
import numpy as np
import scipy.fft as sfft

from . import kernels
from .algebra import PAIRS, form2_to_matrix, matrix_to_form2
from .errors import DegenerateMetric

BACKENDS = ("spectral", "fd4")
# 3-form basis indexed by the omitted direction: e123, e023, e013, e012
THREE_FORM = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


def pairwise_sum(x):
    """Sum in numpy's fixed pairwise order over a contiguous copy."""
    return float(np.sum(np.ascontiguousarray(x).ravel()))


class Grid:
    """A uniform 4D grid, periodic (torus) or not (chart)."""

    def __init__(self, shape, spacing, periodic=True, backend="spectral",
                 workers=1, dealias=True, origin=(0.0, 0.0, 0.0, 0.0)):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "spectral" and not periodic:
            raise ValueError("spectral backend needs a periodic grid")
        self.shape = tuple(int(n) for n in shape)
        self.spacing = tuple(float(h) for h in spacing)
        self.periodic = periodic
        self.backend = backend
        self.workers = int(workers)
        self.dealias_enabled = dealias and backend == "spectral"
        self.origin = tuple(float(o) for o in origin)
        self.lengths = tuple(n * h for n, h in zip(self.shape, self.spacing))
        if backend == "spectral":
            self._setup_spectral()

    @classmethod
    def torus(cls, N, L=2 * np.pi, backend="spectral", workers=1, dealias=True):
        if N < 8 or N % 2:
            raise ValueError("torus grids need an even N >= 8")
        return cls((N,) * 4, (L / N,) * 4, True, backend, workers, dealias)

    @property
    def h(self):
        return self.spacing[-1]

    @property
    def N(self):
        return self.shape[-1]

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def margin(self):
        """Grid points per derivative order that are unreliable on a chart."""
        return 0 if self.periodic else 2

    def coords(self):
        """Coordinate arrays x0..x3, each broadcastable to the grid shape."""
        out = []
        for a, (n, h, o) in enumerate(zip(self.shape, self.spacing, self.origin)):
            s = [1, 1, 1, 1]
            s[a] = n
            out.append((o + h * np.arange(n)).reshape(s))
        return out

    def mesh(self):
        return np.broadcast_arrays(*self.coords())

    # -- spectral machinery -------------------------------------------------

    def _setup_spectral(self):
        ks = []
        masks = []
        for a, (n, L) in enumerate(zip(self.shape, self.lengths)):
            k = sfft.rfftfreq(n, 1.0 / n) if a == 3 else sfft.fftfreq(n, 1.0 / n)
            keep = np.abs(k) <= n // 3
            k = k.copy()
            k[np.abs(k) == n // 2] = 0.0
            s = [1, 1, 1, 1]
            s[a] = k.size
            ks.append((2 * np.pi / L) * k.reshape(s))
            masks.append(keep.reshape(s))
        self._k = ks
        self._k1d = [np.ascontiguousarray(k.ravel()) for k in ks]
        self._mask = masks[0] & masks[1] & masks[2] & masks[3]

    def _fft(self, f):
        return sfft.rfftn(f, axes=(0, 1, 2, 3), workers=self.workers)

    def _ifft(self, fh):
        return sfft.irfftn(fh, s=self.shape, axes=(0, 1, 2, 3), workers=self.workers)

    def _spec(self, f, dealias):
        fh = self._fft(f)
        if dealias:
            fh *= self._mask.reshape(self._mask.shape + (1,) * (f.ndim - 4))
        return fh

    def _kk(self, a, ndim):
        k = self._k[a]
        return k.reshape(k.shape + (1,) * (ndim - 4))

    def dealias(self, f):
        """2/3-rule truncation (identity for fd4 grids)."""
        if self.backend != "spectral":
            return f
        return self._ifft(self._spec(np.asarray(f, dtype=float), True))

    # -- derivatives ---------------------------------------------------------

    def _use_dealias(self, dealias):
        return self.dealias_enabled if dealias is None else (dealias and self.backend == "spectral")

    def diff(self, f, axis, dealias=None):
        f = np.asarray(f, dtype=float)
        if self.backend == "spectral":
            fh = self._spec(f, self._use_dealias(dealias))
            return self._ifft(1j * self._kk(axis, f.ndim) * fh)
        h = self.spacing[axis]
        return (8.0 * (np.roll(f, -1, axis) - np.roll(f, 1, axis))
                - (np.roll(f, -2, axis) - np.roll(f, 2, axis))) / (12.0 * h)

    def diff2(self, f, axis, dealias=None):
        f = np.asarray(f, dtype=float)
        if self.backend == "spectral":
            fh = self._spec(f, self._use_dealias(dealias))
            return self._ifft(-self._kk(axis, f.ndim) ** 2 * fh)
        h = self.spacing[axis]
        return (16.0 * (np.roll(f, -1, axis) + np.roll(f, 1, axis))
                - (np.roll(f, -2, axis) + np.roll(f, 2, axis)) - 30.0 * f) / (12.0 * h * h)

    def grad(self, f, dealias=None):
        """All first partials; derivative index appended last."""
        f = np.asarray(f, dtype=float)
        if self.backend == "spectral":
            fh = self._spec(f, self._use_dealias(dealias))
            return np.stack([self._ifft(1j * self._kk(a, f.ndim) * fh) for a in range(4)], axis=-1)
        return np.stack([self.diff(f, a) for a in range(4)], axis=-1)

    def hessian(self, f, dealias=None):
        """All second partials; two derivative indices appended last."""
        f = np.asarray(f, dtype=float)
        out = np.empty(f.shape + (4, 4))
        if self.backend == "spectral":
            fh = self._spec(f, self._use_dealias(dealias))
            for a in range(4):
                for b in range(a, 4):
                    kk = self._kk(a, f.ndim) * self._kk(b, f.ndim)
                    out[..., a, b] = out[..., b, a] = self._ifft(-kk * fh)
            return out
        first = [self.diff(f, a) for a in range(4)]
        for a in range(4):
            out[..., a, a] = self.diff2(f, a)
            for b in range(a + 1, 4):
                out[..., a, b] = out[..., b, a] = self.diff(first[a], b)
        return out

    def exterior1(self, alpha, dealias=None):
        """d of 1-form components (..., 4) -> 2-form components (..., 6)."""
        alpha = np.asarray(alpha, dtype=float)
        if self.backend == "spectral":
            ah = self._spec(alpha, self._use_dealias(dealias))
            flat = ah.reshape(ah.shape[:4] + (-1, 4))
            out = np.empty(flat.shape[:5] + (6,), dtype=complex)
            kernels.spectral_exterior1(flat, *self._k1d, out)
            return self._ifft(out.reshape(ah.shape[:-1] + (6,)))
        return np.stack([self.diff(alpha[..., b], a) - self.diff(alpha[..., a], b)
                         for a, b in PAIRS], axis=-1)

    def divergence2(self, X, dealias=None):
        """sum_a d_a X^{ac} for antisymmetric X given as 2-form components."""
        X = np.asarray(X, dtype=float)
        if self.backend == "spectral":
            Xh = self._spec(X, self._use_dealias(dealias))
            flat = Xh.reshape(Xh.shape[:4] + (-1, 6))
            out = np.empty(flat.shape[:5] + (4,), dtype=complex)
            kernels.spectral_divergence(flat, *self._k1d, out)
            return self._ifft(out.reshape(Xh.shape[:-1] + (4,)))
        out = np.zeros(X.shape[:-1] + (4,))
        for p, (x, y) in enumerate(PAIRS):
            out[..., y] += self.diff(X[..., p], x)
            out[..., x] -= self.diff(X[..., p], y)
        return out

    def jet3(self, f, dealias=None):
        """First, second and third partials (spectral, or composed fd4)."""
        f = np.asarray(f, dtype=float)
        d3 = np.empty(f.shape + (4, 4, 4))
        if self.backend == "spectral":
            fh = self._spec(f, self._use_dealias(dealias))
            k = [self._kk(a, f.ndim) for a in range(4)]
            d1 = np.stack([self._ifft(1j * k[a] * fh) for a in range(4)], axis=-1)
            d2 = np.empty(f.shape + (4, 4))
            for a in range(4):
                for b in range(a, 4):
                    d2[..., a, b] = d2[..., b, a] = self._ifft(-k[a] * k[b] * fh)
                    for c in range(b, 4):
                        v = self._ifft(-1j * k[a] * k[b] * k[c] * fh)
                        for p in {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}:
                            d3[(...,) + p] = v
            return d1, d2, d3
        d1 = self.grad(f)
        d2 = self.hessian(f)
        for c in range(4):
            dc = self.hessian(d1[..., c])
            for a in range(4):
                for b in range(4):
                    if c <= a and c <= b:
                        for p in {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}:
                            d3[(...,) + p] = dc[..., a, b]
        return d1, d2, d3


def ext_d(grid, field, degree, dealias=None):
    """Exterior derivative of a 0-, 1- or 2-form field."""
    field = np.asarray(field, dtype=float)
    if degree == 0:
        return grid.grad(field, dealias)
    if degree == 1:
        return grid.exterior1(field, dealias)
    if degree == 2:
        D = grid.grad(form2_to_matrix(field), dealias)  # [..., x, y, a] = d_a w_xy
        out = []
        for a, b, c in THREE_FORM:
            out.append(D[..., b, c, a] - D[..., a, c, b] + D[..., a, b, c])
        return np.stack(out, axis=-1)
    raise ValueError("degree must be 0, 1 or 2")


def metric_pieces(g):
    """Inverse and sqrt(det) of a metric field, checking definiteness."""
    g = np.asarray(g, dtype=float)
    det = np.linalg.det(g)
    if np.any(det <= 0) or np.any(np.linalg.eigvalsh(g)[..., 0] <= 0):
        raise DegenerateMetric("metric not positive definite")
    return np.linalg.inv(g), np.sqrt(det)


def codifferential_2(grid, g, w, ginv=None, sqrtg=None, dealias=None):
    """d* = -*d* on 2-forms, evaluated in divergence form.

    (d*w)_b = -(1/sqrt g) g_bc d_a(sqrt g w^{ac}).  The 2/3 truncation (if
    enabled) is applied to the nonlinear product sqrt g w^{ac} before
    differentiating.
    """
    if ginv is None or sqrtg is None:
        ginv, sqrtg = metric_pieces(g)
    W = form2_to_matrix(w)
    gi = ginv.reshape(ginv.shape[:4] + (1,) * (W.ndim - 6) + (4, 4))
    sg = np.asarray(sqrtg).reshape(np.shape(sqrtg)[:4] + (1,) * (W.ndim - 6))
    raised = sg[..., None, None] * (gi @ W @ gi)
    div = grid.divergence2(matrix_to_form2(raised), dealias)
    gg = g.reshape(g.shape[:4] + (1,) * (W.ndim - 6) + (4, 4))
    return -np.einsum("...bc,...c->...b", gg, div) / sg[..., None]


def laplace_beltrami(grid, f, ginv, sqrtg, dealias=None):
    """Delta f = (1/sqrt g) d_a(sqrt g g^{ab} d_b f) for a scalar field."""
    df = grid.grad(f, dealias)
    flux = sqrtg[..., None] * np.einsum("...ab,...b->...a", ginv, df)
    div = sum(grid.diff(flux[..., a], a, dealias) for a in range(4))
    return div / sqrtg


def integrate(grid, density):
    """Integral of a 4-form given by its e0123 coefficient."""
    return grid.cell_volume * pairwise_sum(density)


def cohomology_pairings(grid, w):
    """Pairings of 2-form(s) with the six coordinate 2-tori.

    For each plane (a, b) this is the average over the complementary
    directions of the integral of w_ab over the (a, b) torus.
    """
    w = np.asarray(w, dtype=float)
    n = np.prod(grid.shape)
    sums = np.array([pairwise_sum(c) for c in np.moveaxis(w.reshape((n, -1)), -1, 0)])
    areas = np.array([grid.lengths[a] * grid.lengths[b] for a, b in PAIRS])
    out = sums.reshape(w.shape[4:]) / n
    return out * areas
