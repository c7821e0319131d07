import numpy as np
import pytest
import sympy as sp
from scipy.linalg import expm

from hsflow import spd
from hsflow.errors import SingularBase


def random_spd(rng, n=(), spread=0.5):
    A = rng.normal(size=n + (3, 3)) * spread
    A = A + np.swapaxes(A, -1, -2)
    lam, V = np.linalg.eigh(A)
    return np.einsum("...ik,...k,...jk->...ij", V, np.exp(lam), V)


def random_sym(rng, n=()):
    A = rng.normal(size=n + (3, 3))
    return A + np.swapaxes(A, -1, -2)


def random_jet(rng, n=(7,)):
    Q = random_spd(rng, n)
    dQ = random_sym(rng, n + (4,))
    ddQ = random_sym(rng, n + (4, 4))
    ddQ = 0.5 * (ddQ + np.swapaxes(ddQ, -4, -3))
    B = rng.normal(size=n + (4, 4))
    g = B @ np.swapaxes(B, -1, -2) + 4 * np.eye(4)
    return spd.QJet(Q, dQ, ddQ, g)


def einsum_outer(jet):
    Qi = jet.Qinv
    return np.einsum("...ij,...ajk,...kl,...bli->...ab", Qi, jet.dQ, Qi, jet.dQ)


def test_p_inner_examples(rng):
    assert spd.p_inner(np.eye(3), np.eye(3), np.eye(3)) == pytest.approx(3.0)
    A, B = random_sym(rng), random_sym(rng)
    assert spd.p_inner(np.eye(3), A, B) == pytest.approx(np.trace(A @ B))
    P = random_spd(rng)
    c = 2.7
    assert spd.p_inner(c * P, c * A, c * B) == pytest.approx(spd.p_inner(P, A, B), rel=1e-12)


def test_p_inner_positive(rng):
    P = random_spd(rng, (1000,))
    A = random_sym(rng, (1000,))
    assert np.all(spd.p_inner(P, A, A) > 0)


def test_singular_base():
    P = np.diag([1.0, 1.0, 1e-16])
    with pytest.raises(SingularBase):
        spd.checked_inverse(P)


def test_dq_norm_constant_and_exponential():
    g = np.eye(4)
    jet = spd.QJet(np.eye(3) * 2, np.zeros((4, 3, 3)), np.zeros((4, 4, 3, 3)), g)
    assert spd.dq_norm_sq(jet) == 0.0
    for x in (-1.0, 0.3, 2.0):
        Q = np.diag([np.exp(x), np.exp(-x), 1.0])
        dQ = np.zeros((4, 3, 3))
        dQ[0] = np.diag([np.exp(x), -np.exp(-x), 0.0])
        jet = spd.QJet(Q, dQ, np.zeros((4, 4, 3, 3)), g)
        assert spd.dq_norm_sq(jet) == pytest.approx(2.0, rel=1e-14)


def test_dq_norm_congruence_invariance(rng):
    jet = random_jet(rng)
    G = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    moved = spd.QJet(G @ jet.Q @ G.T, G @ jet.dQ @ G.T, G @ jet.ddQ @ G.T, jet.g)
    assert np.allclose(spd.dq_norm_sq(moved), spd.dq_norm_sq(jet), rtol=1e-11)


def test_dq_outer_trace_rank_psd(rng):
    jet = random_jet(rng)
    D = spd.dq_outer(jet)
    assert np.allclose(D, einsum_outer(jet), rtol=1e-12, atol=1e-12)
    assert np.allclose(np.einsum("...ab,...ab->...", jet.ginv, D), spd.dq_norm_sq(jet))
    assert np.allclose(D, np.swapaxes(D, -1, -2))
    assert np.all(np.linalg.eigvalsh(D)[..., 0] > -1e-10 * np.abs(D).max())
    zero = spd.QJet(jet.Q, np.zeros_like(jet.dQ), jet.ddQ, jet.g)
    assert np.all(spd.dq_outer(zero) == 0)


def test_harmonic_laplacian_constant_and_geodesic(rng):
    jet = random_jet(rng)
    const = spd.QJet(jet.Q, np.zeros_like(jet.dQ), np.zeros_like(jet.ddQ), jet.g)
    gam = rng.normal(size=(7, 4, 4, 4))
    assert np.all(spd.harmonic_laplacian(const, gam) == 0)
    # Q(x0) = exp(x0 A) with symmetric A is a geodesic; it is harmonic for flat g
    A = np.array([[0.3, 0.1, 0.0], [0.1, -0.2, 0.05], [0.0, 0.05, 0.4]])
    for xv in (0.0, 0.7):
        Q = expm(xv * A)
        dQ = np.zeros((4, 3, 3))
        ddQ = np.zeros((4, 4, 3, 3))
        dQ[0] = A @ Q
        ddQ[0, 0] = A @ A @ Q
        t = spd.harmonic_laplacian(spd.QJet(Q, dQ, ddQ, np.eye(4)))
        assert np.abs(t).max() < 1e-13


def test_harmonic_laplacian_diagonal_one_variable():
    x = sp.symbols("x")
    qs = [sp.exp(sp.sin(x)), 2 + sp.cos(x), sp.exp(-sp.sin(x)) / (2 + sp.cos(x))]
    xv = 0.4
    Q = np.diag([float(q.subs(x, xv)) for q in qs])
    dQ = np.zeros((4, 3, 3))
    ddQ = np.zeros((4, 4, 3, 3))
    dQ[1] = np.diag([float(q.diff(x).subs(x, xv)) for q in qs])
    ddQ[1, 1] = np.diag([float(q.diff(x, 2).subs(x, xv)) for q in qs])
    t = spd.harmonic_laplacian(spd.QJet(Q, dQ, ddQ, np.eye(4)))
    expect = [float((q.diff(x, 2) - q.diff(x) ** 2 / q).subs(x, xv)) for q in qs]
    assert np.allclose(np.diag(t), expect, atol=1e-13)
    assert np.allclose(t - np.diag(np.diag(t)), 0)


def test_harmonic_laplacian_congruence(rng):
    jet = random_jet(rng)
    gam = rng.normal(size=(7, 4, 4, 4))
    gam = 0.5 * (gam + np.swapaxes(gam, -1, -2))
    G = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    moved = spd.QJet(G @ jet.Q @ G.T, G @ jet.dQ @ G.T, G @ jet.ddQ @ G.T, jet.g)
    assert np.allclose(spd.harmonic_laplacian(moved, gam),
                       G @ spd.harmonic_laplacian(jet, gam) @ G.T, rtol=1e-10, atol=1e-10)


def test_harmonic_laplacian_against_einsum(rng):
    jet = random_jet(rng)
    gam = rng.normal(size=(7, 4, 4, 4))
    hess = jet.ddQ - np.einsum("...cab,...cij->...abij", gam, jet.dQ)
    ref = (np.einsum("...ab,...abij->...ij", jet.ginv, hess)
           - np.einsum("...ab,...aik,...kl,...blj->...ij", jet.ginv, jet.dQ, jet.Qinv, jet.dQ))
    ref = 0.5 * (ref + np.swapaxes(ref, -1, -2))
    assert np.allclose(spd.harmonic_laplacian(jet, gam), ref, rtol=1e-12, atol=1e-12)


def test_axis_relabel_invariance(rng):
    jet = random_jet(rng)
    p = [2, 0, 3, 1]
    P = np.eye(4)[p]
    moved = spd.QJet(jet.Q, jet.dQ[:, p], jet.ddQ[:, p][:, :, p], P @ jet.g @ P.T)
    assert np.allclose(spd.dq_norm_sq(moved), spd.dq_norm_sq(jet))
    assert np.allclose(spd.harmonic_laplacian(moved), spd.harmonic_laplacian(jet))


def test_map_hessian_and_norm_against_einsum(rng):
    jet = random_jet(rng)
    H = spd.map_hessian(jet)
    cross = np.einsum("...aik,...kl,...blj->...abij", jet.dQ, jet.Qinv, jet.dQ)
    ref = jet.ddQ - 0.5 * (cross + np.swapaxes(cross, -4, -3))
    assert np.allclose(H, ref, rtol=1e-12, atol=1e-12)
    n2 = spd.p_norm_sq_2tensor(H, jet.Qinv, jet.ginv)
    ref2 = np.einsum("...ac,...bd,...ij,...abjk,...kl,...cdli->...", jet.ginv, jet.ginv,
                     jet.Qinv, H, jet.Qinv, H)
    assert np.allclose(n2, ref2, rtol=1e-12)
    assert np.all(n2 >= 0)
