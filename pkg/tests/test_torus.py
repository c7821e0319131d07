import numpy as np
import pytest
import sympy as sp

from hsflow import algebra
from hsflow.errors import DegenerateMetric
from hsflow.torus import (Grid, codifferential_2, cohomology_pairings, ext_d, integrate,
                          laplace_beltrami, metric_pieces)

from conftest import PAIRS, trig_field


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid.torus(7)
    with pytest.raises(ValueError):
        Grid.torus(6)
    with pytest.raises(ValueError):
        Grid((8,) * 4, (1.0,) * 4, periodic=False, backend="spectral")


def test_ext_d_constant_and_single_mode(grid16):
    c = np.ones(grid16.shape + (4,)) * np.array([1.0, 2.0, 3.0, 4.0])
    assert np.abs(ext_d(grid16, c, 1)).max() < 1e-13
    x = grid16.mesh()
    alpha = np.zeros(grid16.shape + (4,))
    alpha[..., 1] = np.sin(x[0])
    da = ext_d(grid16, alpha, 1)
    expect = np.zeros(grid16.shape + (6,))
    expect[..., 0] = np.cos(x[0])
    assert np.abs(da - expect).max() < 1e-12


@pytest.mark.parametrize("backend", ["spectral", "fd4"])
def test_single_mode_fd4_and_spectral(backend):
    G = Grid.torus(16, backend=backend)
    x = G.mesh()
    alpha = np.zeros(G.shape + (4,))
    alpha[..., 1] = np.sin(x[0])
    err = np.abs(ext_d(G, alpha, 1)[..., 0] - np.cos(x[0])).max()
    assert err < (1e-12 if backend == "spectral" else 2e-3)


def test_d_squared_vanishes(grid16, rng):
    f = trig_field(grid16, rng)
    df = ext_d(grid16, f, 0)
    assert np.abs(ext_d(grid16, df, 1)).max() <= 1e-10 * np.abs(f).max()
    alpha = trig_field(grid16, rng, (4,))
    assert np.abs(ext_d(grid16, ext_d(grid16, alpha, 1), 2)).max() <= 1e-10 * np.abs(alpha).max()


def test_fd4_order():
    errs = []
    for N in (16, 32):
        G = Grid.torus(N, backend="fd4")
        x = G.coords()[2]
        f = np.broadcast_to(np.sin(2 * x), G.shape)
        errs.append(np.abs(G.diff(f, 2) - 2 * np.cos(2 * x)).max())
    assert np.log2(errs[0] / errs[1]) > 3.8


def _sym_codiff(expr_w):
    """Euclidean d*w = -*d* w as (d*w)_b = -sum_a d_a w_ab, via sympy."""
    xs = sp.symbols("x0:4")
    W = sp.zeros(4, 4)
    for (a, b), e in zip(PAIRS, expr_w):
        W[a, b] = e
        W[b, a] = -e
    return xs, [sp.simplify(-sum(sp.diff(W[a, b], xs[a]) for a in range(4))) for b in range(4)]


def _eval(grid, xs, exprs):
    x = grid.mesh()
    out = np.zeros(grid.shape + (len(exprs),))
    for i, e in enumerate(exprs):
        out[..., i] = sp.lambdify(xs, e, "numpy")(*x) if e != 0 else 0.0
    return out


def test_codifferential_euclidean_examples(grid8):
    g = np.broadcast_to(np.eye(4), grid8.shape + (4, 4))
    w = np.zeros(grid8.shape + (6,))
    w[..., 0] = 1.0
    assert np.abs(codifferential_2(grid8, g, w)).max() < 1e-13
    xs = sp.symbols("x0:4")
    for exprs in ([sp.sin(xs[2]), 0, 0, 0, 0, 0],
                  [0, sp.sin(xs[2]), 0, 0, 0, 0],
                  [sp.cos(xs[1]), sp.sin(xs[3]), 0, sp.cos(xs[0] + xs[3]), sp.sin(xs[1]), 0]):
        xs, oracle = _sym_codiff(exprs)
        w = _eval(grid8, xs, exprs)
        got = codifferential_2(grid8, g, w)
        assert np.abs(got - _eval(grid8, xs, oracle)).max() < 1e-12


def _smooth_metric(grid, eps=0.2):
    x = grid.mesh()
    g = np.zeros(grid.shape + (4, 4))
    for a in range(4):
        g[..., a, a] = 1.0 + eps * np.sin(x[(a + 1) % 4] + a)
    g[..., 0, 1] = g[..., 1, 0] = eps * 0.5 * np.cos(x[2] + x[3])
    g[..., 2, 3] = g[..., 3, 2] = eps * 0.5 * np.sin(x[0] - x[1])
    return g


def _adjoint_residual(N):
    G = Grid.torus(N, backend="fd4")
    x = G.mesh()
    alpha = np.stack([np.sin(x[1] + x[2]), np.cos(x[3]), np.sin(x[0]) * np.cos(x[2]),
                      np.cos(x[0] + x[1])], axis=-1)
    w = np.stack([np.cos(x[2]), np.sin(x[3] - x[0]), np.cos(x[1]), np.sin(x[0]),
                  np.cos(x[1] + x[3]), np.sin(x[2])], axis=-1)
    g = _smooth_metric(G)
    ginv, sg = metric_pieces(g)
    da = ext_d(G, alpha, 1)
    lhs = integrate(G, algebra.inner2(g, da, w, ginv) * sg)
    dsw = codifferential_2(G, g, w, ginv, sg)
    rhs = integrate(G, np.einsum("...a,...ab,...b->...", alpha, ginv, dsw) * sg)
    return abs(lhs - rhs)


def test_codifferential_adjointness_fd4():
    # central stencils are skew-adjoint, so summation by parts holds exactly and
    # the residual sits at roundoff for every N, well inside any C h^4 envelope
    for N in (8, 16, 32):
        assert _adjoint_residual(N) <= 1e-10


def test_codifferential_adjointness_spectral(grid16):
    x = grid16.mesh()
    alpha = np.stack([np.sin(x[1]), np.cos(x[3]), np.sin(x[0]), np.cos(x[2])], axis=-1)
    w = np.stack([np.cos(x[2]), np.sin(x[3]), np.cos(x[1]), np.sin(x[0]),
                  np.cos(x[1]), np.sin(x[2])], axis=-1)
    g = np.broadcast_to(np.eye(4), grid16.shape + (4, 4))
    lhs = integrate(grid16, algebra.inner2(g, ext_d(grid16, alpha, 1), w))
    rhs = integrate(grid16, np.einsum("...a,...a->...", alpha, codifferential_2(grid16, g, w)))
    assert abs(lhs - rhs) < 1e-9


def test_metric_pieces_rejects_indefinite(grid8):
    g = np.broadcast_to(np.diag([1.0, 1.0, 1.0, -1.0]), grid8.shape + (4, 4))
    with pytest.raises(DegenerateMetric):
        metric_pieces(g)


def test_laplace_beltrami_flat(grid16):
    x = grid16.mesh()
    f = np.sin(x[0]) * np.cos(2 * x[3])
    g = np.broadcast_to(np.eye(4), grid16.shape + (4, 4))
    lap = laplace_beltrami(grid16, f, g, np.ones(grid16.shape))
    assert np.abs(lap + 5 * f).max() < 1e-11


def test_integrate_examples(grid16, rng):
    L = 2 * np.pi
    assert integrate(grid16, np.ones(grid16.shape)) == pytest.approx(L ** 4, rel=1e-14)
    x = grid16.mesh()
    assert integrate(grid16, 1 + np.sin(x[0])) == pytest.approx(L ** 4, rel=1e-13)
    f, h = trig_field(grid16, rng), trig_field(grid16, rng)
    assert integrate(grid16, 2 * f - 3 * h) == pytest.approx(
        2 * integrate(grid16, f) - 3 * integrate(grid16, h), abs=1e-9)


def test_pairings_examples(grid16, rng):
    L = 2 * np.pi
    w1 = np.broadcast_to(algebra.standard_triple()[0], grid16.shape + (6,))
    assert np.allclose(cohomology_pairings(grid16, w1), [L * L, 0, 0, L * L, 0, 0], atol=1e-12)
    alpha = trig_field(grid16, rng, (4,))
    da = ext_d(grid16, alpha, 1)
    assert np.abs(cohomology_pairings(grid16, da)).max() < 1e-11
    a, b = trig_field(grid16, rng, (6,)), trig_field(grid16, rng, (6,))
    assert np.allclose(cohomology_pairings(grid16, a + b),
                       cohomology_pairings(grid16, a) + cohomology_pairings(grid16, b), atol=1e-11)
