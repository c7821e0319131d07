import numpy as np
import pytest
import sympy as sp

from hsflow.curvature import (curvature_norms, curvature_of, curvature_of_reference, ricci_of,
                              rm_norm_sq)
from hsflow.torus import Grid

X = sp.symbols("x0:4")


def sym_scalar(gs):
    """Scalar curvature of a sympy 4x4 metric (textbook Christoffel contraction)."""
    gi = gs.inv()
    gam = [[[sp.simplify(sum(gi[c, d] * (sp.diff(gs[d, a], X[b]) + sp.diff(gs[d, b], X[a])
                                          - sp.diff(gs[a, b], X[d])) for d in range(4)) / 2)
             for b in range(4)] for a in range(4)] for c in range(4)]
    ric = sp.zeros(4, 4)
    for a in range(4):
        for b in range(4):
            ric[a, b] = sum(sp.diff(gam[c][a][b], X[c]) - sp.diff(gam[c][a][c], X[b])
                            + sum(gam[c][c][d] * gam[d][a][b] - gam[c][b][d] * gam[d][a][c]
                                  for d in range(4)) for c in range(4))
    return sp.simplify(sum(gi[a, b] * ric[a, b] for a in range(4) for b in range(4)))


def line_grid(N, axis, backend="fd4"):
    shape = [8, 8, 8, 8]
    shape[axis] = N
    return Grid(shape, [2 * np.pi / n for n in shape], True, backend, dealias=False)


def sample(grid, gs):
    x = grid.mesh()
    g = np.zeros(grid.shape + (4, 4))
    for a in range(4):
        for b in range(4):
            e = gs[a, b]
            g[..., a, b] = sp.lambdify(X, e, "numpy")(*x) if e.free_symbols else float(e)
    return g


def test_flat_everything_zero(grid8):
    g = np.broadcast_to(np.eye(4), grid8.shape + (4, 4)).copy()
    b = curvature_of(grid8, g)
    for arr in (b.christoffel, b.riemann, b.ricci, b.scalar):
        assert np.abs(arr).max() == 0.0
    assert curvature_norms(grid8, b, np.ones(grid8.shape)) == (0.0, 0.0, 0.0, 0.0)


def _conformal_errors(Ns):
    f = sp.Rational(3, 10) * sp.sin(X[0])
    gs = sp.exp(2 * f) * sp.eye(4)
    R = sym_scalar(gs)
    # textbook 4D conformal formula as a cross-check of the oracle itself
    alt = -6 * sp.exp(-2 * f) * (sp.diff(f, X[0], 2) + sp.diff(f, X[0]) ** 2)
    assert sp.simplify(R - alt) == 0
    errs, hs = [], []
    for N in Ns:
        G = line_grid(N, 0)
        b = curvature_of(G, sample(G, gs))
        exact = sp.lambdify(X, R, "numpy")(*G.mesh())
        errs.append(np.abs(b.scalar - exact).max())
        hs.append(2 * np.pi / N)
    return np.array(hs), np.array(errs)


def test_conformal_scalar_curvature_order():
    h, e = _conformal_errors((16, 24, 32, 48))
    slope = np.polyfit(np.log(h), np.log(e), 1)[0]
    assert slope >= 3.8
    C = np.max(e / h ** 4)
    assert np.all(e <= C * h ** 4)


def test_warped_one_dimensional():
    a = 1 + sp.Rational(1, 4) * sp.cos(X[1])
    gs = sp.diag(a, 1, 1, 1)
    R = sym_scalar(gs)
    G = line_grid(48, 1)
    b = curvature_of(G, sample(G, gs))
    exact = sp.lambdify(X, R, "numpy")(*G.mesh())
    assert np.abs(b.scalar - exact).max() < 1e-4
    Gs = line_grid(16, 1, "spectral")
    bs = curvature_of(Gs, sample(Gs, gs), deriv="spectral")
    assert np.abs(bs.scalar - sp.lambdify(X, R, "numpy")(*Gs.mesh())).max() < 1e-9


def _random_metric(grid, rng, eps=0.15):
    x = grid.mesh()
    g = np.zeros(grid.shape + (4, 4))
    for a in range(4):
        for b in range(a, 4):
            k = rng.integers(-1, 2, 4)
            v = eps * rng.normal() * np.cos(sum(k[i] * x[i] for i in range(4)) + rng.uniform(0, 6))
            g[..., a, b] = g[..., b, a] = v + (a == b)
    return g


def test_kernel_matches_reference_and_symmetries(grid8, rng):
    g = _random_metric(grid8, rng)
    b = curvature_of(grid8, g)
    r = curvature_of_reference(grid8, g)
    for key in ("christoffel", "riemann", "ricci", "scalar"):
        assert np.abs(getattr(b, key) - getattr(r, key)).max() < 1e-11, key
    assert np.allclose(b.rm2, rm_norm_sq(r), rtol=1e-10, atol=1e-12)
    assert b.pair_symmetry_residual() < 1e-12
    assert b.bianchi_residual() < 1e-10
    ric, _ = ricci_of(grid8, g)
    assert np.abs(ric - b.ricci).max() < 1e-11
    assert b.independent_riemann().shape[-1] == 20


def test_norms_scale_invariance_and_axis_relabel(grid8, rng):
    g = _random_metric(grid8, rng)
    mu = np.sqrt(np.linalg.det(g))
    base = curvature_norms(grid8, curvature_of(grid8, g), mu)
    lam = 2.5
    scaled = curvature_norms(grid8, curvature_of(grid8, lam * g), lam ** 2 * mu)
    assert scaled[1] == pytest.approx(base[1], rel=1e-12)
    assert scaled[0] == pytest.approx(base[0] / lam, rel=1e-12)
    p = [1, 2, 3, 0]
    gp = np.transpose(g, p + [4, 5])[..., p, :][..., :, p]
    perm = curvature_norms(grid8, curvature_of(grid8, gp), np.transpose(mu, p))
    assert np.allclose(perm, base, rtol=1e-10)
