"""Torsion-free hypersymplectic structures from S^1-invariant convex potentials.

On a domain P in R^3 with coordinates x^1, x^2, x^3 and an extra circle
coordinate t, a convex u with det Hess u = 1 and constant S give the triple

    omega_i = dt ^ dx^i + (S/2) U^{ij} eps_{jkl} dx^k ^ dx^l,   U = (Hess u)^-1,

which is closed, hypersymplectic, torsion free and has Q = U.  Grids for
these charts have shape (1, n, n, n): the t axis is a single point, so every
t derivative vanishes exactly.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import flow
from .curvature import curvature_of
from .errors import DomainCollapse, DomainError, NonIntegrableAlpha
from .spd import QJet, dq_outer, harmonic_laplacian
from .torus import Grid, ext_d

MA_CONST = 16.0 / 27.0
BLOWUP_SLOPE = 1e4


def _w_rhs(x, y):
    # d/dx of w'' = 27/(16 w^2) + 4 w'^2 / w, carried as a third-order system
    w, w1, w2 = y
    return [w1, w2, -27.0 * w1 / (8.0 * w ** 3) + 8.0 * w1 * w2 / w - 4.0 * w1 ** 3 / w ** 2]


def _blowup(x, y):
    return y[1] - BLOWUP_SLOPE


_blowup.terminal = True


def w_residual(w, w1, w2):
    """(16/27)(w^2 w'' - 4 w w'^2) - 1."""
    return MA_CONST * (w * w * w2 - 4.0 * w * w1 * w1) - 1.0


@dataclass
class WSolution:
    """Even solution of the reduced Monge-Ampere ODE, sampled on (-x_max, x_max)."""

    w0: float
    delta: float
    x_max: float
    nodes: np.ndarray
    residual: np.ndarray
    _dense: object = field(repr=False)

    def __call__(self, x):
        """(w, w', w'') at ``x`` using evenness of w."""
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > self.x_max * (1 + 1e-12)):
            raise DomainError(f"|x| beyond the sampled interval {self.x_max}")
        w, w1, w2 = self._dense(np.abs(x).ravel())
        sgn = np.sign(x).ravel()
        return (w.reshape(x.shape), (sgn * w1).reshape(x.shape), w2.reshape(x.shape))


def solve_w_ode(w0=1.0, delta_request=np.inf, tol=1e-10, fraction=0.9):
    """Even solution of (16/27)(w^2 w'' - 4 w w'^2) = 1 with w(0)=w0, w'(0)=0.

    w'' is carried as a state of the differentiated system, so the residual at
    the accepted nodes measures integration error rather than restating the
    equation.  The solution blows up at finite x; ``delta`` is the smaller of
    the detected blow-up point and ``delta_request``, and the sample covers
    ``|x| <= fraction * delta`` (or all of ``delta_request`` if that is
    smaller).
    """
    if not w0 > 0:
        raise DomainError("w0 must be positive")
    y0 = [w0, 0.0, 27.0 / (16.0 * w0 * w0)]
    probe = solve_ivp(_w_rhs, (0.0, 1e3), y0, method="DOP853", rtol=tol, atol=tol,
                      events=_blowup)
    blow = float(probe.t[-1])
    delta = min(float(delta_request), blow)
    x_max = delta if delta_request < fraction * blow else fraction * blow
    inner = 1e-2 * tol
    for _ in range(4):
        sol = solve_ivp(_w_rhs, (0.0, x_max), y0, method="DOP853", rtol=inner, atol=inner,
                        dense_output=True)
        w, w1, w2 = sol.y
        res = w_residual(w, w1, w2)
        if np.abs(res).max() <= tol:
            break
        inner *= 0.1
    if np.any(w <= 0) or np.any(w2 <= 0):
        raise DomainCollapse("strict convexity lost before the detected blow-up")
    nodes = np.concatenate([-sol.t[:0:-1], sol.t])
    residual = np.concatenate([res[:0:-1], res])
    return WSolution(w0, delta, x_max, nodes, residual, sol.sol)


# -- potentials -------------------------------------------------------------

@dataclass
class PotentialData:
    """A convex potential on a box of R^3 with its Hessian available pointwise.

    ``kind`` is "quadratic" (constant Hessian ``A``) or "ansatz"
    (u = r^(4/3) w(x1), r^2 = x2^2 + x3^2).
    """

    box: np.ndarray
    kind: str
    S: object = 1.0
    A: np.ndarray = None
    wsol: WSolution = None

    def hessian(self, x1, x2, x3):
        if self.kind == "quadratic":
            return np.broadcast_to(self.A, np.shape(x1) + (3, 3)).copy()
        w, w1, w2 = self.wsol(x1)
        r2 = x2 * x2 + x3 * x3
        if np.any(r2 <= 0):
            raise DomainError("ansatz chart must avoid the axis r = 0")
        r = np.sqrt(r2)
        H = np.empty(np.shape(x1) + (3, 3))
        rm = r ** (-2.0 / 3.0)
        H[..., 0, 0] = r ** (4.0 / 3.0) * w2
        xs = (x2, x3)
        for a in range(2):
            H[..., 0, a + 1] = H[..., a + 1, 0] = (4.0 / 3.0) * rm * xs[a] * w1
            for b in range(2):
                H[..., a + 1, b + 1] = (4.0 / 3.0) * w * rm * (
                    (a == b) - (2.0 / 3.0) * xs[a] * xs[b] / r2)
        return H


def quadratic_potential(A=None, box=((-0.5, 0.5),) * 3, S=1.0):
    A = np.eye(3) if A is None else np.asarray(A, dtype=float)
    if abs(np.linalg.det(A) - 1.0) > 1e-12:
        raise DomainError("constant Hessian must have determinant 1")
    return PotentialData(np.asarray(box, dtype=float), "quadratic", S, A=A)


def ansatz_potential(wsol=None, box=None, S=1.0):
    """u = r^(4/3) w(x1) on a box off the axis, inside the ODE interval."""
    if wsol is None:
        wsol = solve_w_ode()
    if box is None:
        a = 0.8 * wsol.x_max
        box = ((-a, a), (0.5, 1.0), (-0.25, 0.25))
    box = np.asarray(box, dtype=float)
    if np.any(np.abs(box[0]) > wsol.x_max):
        raise DomainError("box leaves the sampled ODE interval")
    return PotentialData(box, "ansatz", S, wsol=wsol)


# -- charts -----------------------------------------------------------------

@dataclass
class ChartTriple:
    grid: Grid
    omega: np.ndarray
    U: np.ndarray
    hess: np.ndarray
    S: float
    zone: tuple
    pd: PotentialData

    def interior(self, f):
        """Restrict a field to the report zone."""
        return f[self.zone]


def _constant_S(S):
    S = np.asarray(S, dtype=float)
    if S.ndim and not np.all(S == S.ravel()[0]):
        raise NonIntegrableAlpha("only constant S is supported (alpha = dt)")
    val = float(S.ravel()[0]) if S.ndim else float(S)
    if not val > 0:
        raise DomainError("S must be positive")
    return val


def chart_grid(pd, n):
    """Grid of shape (1, n, n, n) covering ``pd.box`` (t axis collapsed)."""
    lo, hi = pd.box[:, 0], pd.box[:, 1]
    h = (hi - lo) / (n - 1)
    return Grid((1, n, n, n), (1.0,) + tuple(h), periodic=False, backend="fd4",
                origin=(0.0,) + tuple(lo))


def report_zone(n):
    """Middle third of each spatial axis; fixed in physical units across n."""
    k0 = (n - 1) // 3
    k1 = n - 1 - k0
    if k0 < 4:
        raise DomainError("chart too coarse for a clean report zone (need n >= 13)")
    s = slice(k0, k1 + 1)
    return (slice(None), s, s, s)


def build_chart_triple(pd, n=25):
    """Assemble omega_i on a chart grid; Q = U holds by construction."""
    S = _constant_S(pd.S)
    grid = chart_grid(pd, n)
    X = grid.mesh()
    H = pd.hessian(X[1], X[2], X[3])
    U = np.linalg.inv(H)
    U = 0.5 * (U + np.swapaxes(U, -1, -2))
    omega = np.zeros(grid.shape + (3, 6))
    for i in range(3):
        omega[..., i, i] = 1.0
        omega[..., i, 3:] = S * U[..., i, :]
    return ChartTriple(grid, omega, U, H, S, report_zone(n), pd)


@dataclass
class TorsionFreeReport:
    n: int
    h: float
    closedness: float
    q_minus_u: float
    tau: float
    tension: float
    ric_identity: float
    scalar_error: float
    scalar_max: float
    dq2_sup: float
    hypersymplectic: bool

    def as_dict(self):
        return dict(self.__dict__)


def scalar_formula(ct):
    """(1/(4S)) U^ai U^bj U^ck u_abc u_ijk with u_abc by fd4 of the sampled Hessian."""
    d3 = ct.grid.grad(ct.hess)[..., 1:]  # d_c u_ab over spatial c
    U = ct.U
    T = np.einsum("...ai,...bj,...ck,...abc->...ijk", U, U, U, d3, optimize=True)
    return np.einsum("...ijk,...ijk->...", T, d3) / (4.0 * ct.S)


def verify_torsion_free(ct):
    """Residuals of tau = 0, tension = 0 and Ric = <dQ x dQ>_Q / 4 on the report zone."""
    grid = ct.grid
    state = flow.FlowState(grid, ct.omega)
    d = state.derived
    closed = ext_d(grid, ct.omega, 2)
    dQ = np.moveaxis(grid.grad(d.Q), -1, -3)
    ddQ = np.moveaxis(grid.hessian(d.Q), (-2, -1), (-4, -3))
    jet = QJet(d.Q, dQ, ddQ, d.g, d.ginv, d.Qinv)
    bundle = curvature_of(grid, d.g)
    tension = harmonic_laplacian(jet, bundle.christoffel)
    outer = dq_outer(jet)
    ric_res = bundle.ricci - 0.25 * outer
    dq2 = np.einsum("...ab,...ab->...", d.ginv, outer)
    formula = scalar_formula(ct)
    z = ct.interior
    return TorsionFreeReport(
        n=grid.shape[1],
        h=float(max(grid.spacing[1:])),
        closedness=float(np.abs(z(closed)).max()),
        q_minus_u=float(np.abs(d.Q - ct.U).max()),
        tau=float(np.abs(z(d.tau)).max()),
        tension=float(np.abs(z(tension)).max()),
        ric_identity=float(np.abs(z(ric_res)).max()),
        scalar_error=float(np.abs(z(bundle.scalar - formula)).max()),
        scalar_max=float(z(bundle.scalar).max()),
        dq2_sup=float(z(dq2).max()),
        hypersymplectic=bool(d.margin > 0),
    )


# -- Calabi comparison ---------------------------------------------------------

def calabi_pole(a):
    return 4.0 * np.sqrt(2.0) / a


def calabi_comparison(a, x):
    """v_a(x) = 32 a / (32 - a^2 x^2), solving v'' + 3 v'/x = v^3 / 4 with v(0) = a."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(a <= 0):
        raise DomainError("a must be positive")
    if np.any(x < 0) or np.any(x >= calabi_pole(a)):
        raise DomainError("x outside [0, 4 sqrt(2) / a)")
    return 32.0 * a / (32.0 - a * a * x * x)
