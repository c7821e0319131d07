import numpy as np
import pytest
import sympy as sp

from hsflow import donaldson as dn
from hsflow import algebra
from hsflow.errors import DomainError, NonIntegrableAlpha


@pytest.fixture(scope="module")
def wsol():
    return dn.solve_w_ode(1.0)


def test_w_second_derivative_at_origin():
    for w0 in (0.5, 1.0, 2.0):
        s = dn.solve_w_ode(w0)
        w, w1, w2 = s(0.0)
        assert w == pytest.approx(w0) and w1 == 0.0
        assert w2 == pytest.approx(27 / (16 * w0 ** 2), rel=1e-12)


def test_w_even_and_residual(wsol):
    x = np.linspace(0, wsol.x_max, 37)
    wp, w1p, w2p = wsol(x)
    wm, w1m, w2m = wsol(-x)
    assert np.array_equal(wp, wm) and np.array_equal(w1p, -w1m) and np.array_equal(w2p, w2m)
    assert np.abs(wsol.residual).max() <= 1e-10
    assert np.allclose(wsol.nodes, -wsol.nodes[::-1])
    # dense output between nodes is held to the same equation
    assert np.abs(dn.w_residual(wp, w1p, w2p)).max() < 1e-8


def test_w_domain(wsol):
    assert wsol.x_max < wsol.delta
    assert wsol.delta == pytest.approx(0.763, abs=5e-3)
    with pytest.raises(DomainError):
        wsol(wsol.x_max * 1.01)
    with pytest.raises(DomainError):
        dn.solve_w_ode(-1.0)
    short = dn.solve_w_ode(1.0, delta_request=0.3)
    assert short.x_max == pytest.approx(0.3)


def test_quadratic_chart_is_flat_hyperkaehler():
    ct = dn.build_chart_triple(dn.quadratic_potential(), 13)
    assert np.abs(ct.U - np.eye(3)).max() == 0.0
    assert np.allclose(ct.omega[0, 0, 0, 0], algebra.standard_triple())
    rep = dn.verify_torsion_free(ct)
    for key in ("closedness", "q_minus_u", "tau", "tension", "ric_identity", "scalar_error"):
        assert getattr(rep, key) <= 1e-12, key
    A = np.array([[2.0, 0.3, 0], [0.3, 1.0, 0], [0, 0, 1 / (2.0 - 0.09)]])
    rep = dn.verify_torsion_free(dn.build_chart_triple(dn.quadratic_potential(A), 13))
    assert rep.tau <= 1e-12 and rep.q_minus_u <= 1e-12 and rep.hypersymplectic


def test_quadratic_needs_unit_determinant():
    with pytest.raises(DomainError):
        dn.quadratic_potential(2 * np.eye(3))


def test_ansatz_chart(wsol):
    pd = dn.ansatz_potential(wsol)
    H = pd.hessian(np.array(0.1), np.array(0.7), np.array(0.2))
    assert np.linalg.det(H) == pytest.approx(1.0, rel=1e-8)
    ct = dn.build_chart_triple(pd, 16)
    flag, _ = algebra.is_hypersymplectic(ct.omega)
    assert flag.all()
    assert np.ptp(ct.U[..., 0, 0]) > 1e-2
    rep = dn.verify_torsion_free(ct)
    assert rep.q_minus_u < 1e-9
    assert rep.closedness < 1e-2
    assert rep.tau < 1e-2 and rep.tension < 0.2 and rep.ric_identity < 5e-2
    assert rep.scalar_max > 0


def test_ansatz_closedness_is_fourth_order(wsol):
    pd = dn.ansatz_potential(wsol)
    a, b = (dn.verify_torsion_free(dn.build_chart_triple(pd, n)) for n in (16, 25))
    order = np.log(a.closedness / b.closedness) / np.log(a.h / b.h)
    assert order > 3.5


def test_chart_errors(wsol):
    pd = dn.ansatz_potential(wsol)
    with pytest.raises(DomainError):
        dn.build_chart_triple(pd, 10)
    pd.S = np.array([1.0, 2.0])
    with pytest.raises(NonIntegrableAlpha):
        dn.build_chart_triple(pd, 16)
    with pytest.raises(DomainError):
        dn.ansatz_potential(wsol, box=((-1, 1), (0.5, 1.0), (-0.2, 0.2)))
    bad = dn.ansatz_potential(wsol, box=((-0.1, 0.1), (0.0, 0.5), (0.0, 0.5)))
    with pytest.raises(DomainError):
        dn.build_chart_triple(bad, 13)


def test_calabi_examples():
    assert dn.calabi_comparison(1.0, 0.0) == 1.0
    assert dn.calabi_pole(4.0) == pytest.approx(np.sqrt(2), rel=1e-15)
    a, x = sp.symbols("a x", positive=True)
    v = 32 * a / (32 - a ** 2 * x ** 2)
    ode = sp.diff(v, x, 2) + 3 * sp.diff(v, x) / x - v ** 3 / 4
    assert sp.simplify(ode) == 0
    # closed form against the symbolic expression at x = 1, a = 1
    assert dn.calabi_comparison(1.0, 1.0) == pytest.approx(float(v.subs({a: 1, x: 1})), rel=1e-15)
    with pytest.raises(DomainError):
        dn.calabi_comparison(4.0, np.sqrt(2))
    with pytest.raises(DomainError):
        dn.calabi_comparison(-1.0, 0.1)
