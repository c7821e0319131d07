"""Hypersymplectic flow d(omega)/dt = d(Q d*(Q^-1 omega)) on a periodic grid.

The state is the triple of closed 2-forms only.  Q, the volume form and the
metric are always recomputed from omega, never integrated on their own, so
det Q = 1 and closedness hold by construction.  The Q- and metric-evolution
right-hand sides are provided for cross-checks against finite differences
of an actual run.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import algebra, kernels
from .curvature import christoffel
from .errors import NotHypersymplectic, StabilityLoss
from .spd import QJet, dq_norm_sq, dq_outer, harmonic_laplacian
from .torus import codifferential_2, ext_d

STABILITY_FRACTION = 1e-6


def _degenerate(omega):
    gram = algebra.wedge_gram(omega, 1.0)
    det = np.linalg.det(gram)
    Q = gram / np.cbrt(np.where(det > 0, det, 1.0))[..., None, None]
    bad = (det <= 0) | ~algebra.is_positive_definite(Q)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
    else:
        lam = np.linalg.eigvalsh(gram)[..., 0]
        idx = tuple(int(i) for i in np.unravel_index(np.argmin(lam), lam.shape))
    margin = float(np.linalg.eigvalsh(gram[idx])[0])
    return NotHypersymplectic(f"triple degenerate at grid index {idx} (margin {margin:.3e})",
                              index=idx, margin=margin)


class Derived:
    """Caches recomputed from omega: m, Q, Q^-1, g, g^-1, tau and the margin."""

    def __init__(self, grid, omega):
        shape = grid.shape
        P = int(np.prod(shape))
        w = np.ascontiguousarray(omega, dtype=float).reshape(P, 3, 6)
        m = np.empty(P)
        Q = np.empty((P, 3, 3))
        Qinv = np.empty((P, 3, 3))
        g = np.empty((P, 4, 4))
        ginv = np.empty((P, 4, 4))
        X = np.empty((P, 3, 6))
        if kernels.triple_pieces(w, m, Q, Qinv, g, ginv, X):
            raise _degenerate(omega)
        div = grid.divergence2(X.reshape(shape + (3, 6))).reshape(P, 3, 4)
        tau = np.empty((P, 3, 4))
        kernels.torsion_from_divergence(np.ascontiguousarray(div), g, m, Q, tau)
        self.omega = omega
        self.m = m.reshape(shape)
        self.Q = Q.reshape(shape + (3, 3))
        self.Qinv = Qinv.reshape(shape + (3, 3))
        self.g = g.reshape(shape + (4, 4))
        self.ginv = ginv.reshape(shape + (4, 4))
        self.tau = tau.reshape(shape + (3, 4))
        self._margin = None

    @property
    def margin(self):
        """Smallest eigenvalue of the wedge Gram matrix over the grid."""
        if self._margin is None:
            gram = (self.Q * self.m[..., None, None]).reshape(-1, 3, 3)
            lam = np.empty(gram.shape[0])
            kernels.min_eig_sym3(gram, lam)
            self._margin = float(lam.min())
        return self._margin


def derive(grid, omega):
    """Recompute every cache of a flow state from the triple alone."""
    return Derived(grid, omega)


def derive_reference(grid, omega):
    """Same caches as :func:`derive`, built from the numpy reference algebra."""
    m, Q = algebra.normalize_volume(omega)
    Qinv = np.linalg.inv(Q)
    g = algebra.metric_from_triple(omega, m)
    ginv = np.linalg.inv(g)
    eta = np.einsum("...kl,...lc->...kc", Qinv, omega)
    dstar = codifferential_2(grid, g, eta, ginv, m)
    tau = np.einsum("...ik,...ka->...ia", Q, dstar)
    return dict(m=m, Q=Q, Qinv=Qinv, g=g, ginv=ginv, tau=tau)


@dataclass
class FlowState:
    """Time, the triple (shape grid + (3, 6)) and lazily computed caches."""

    grid: object
    omega: np.ndarray
    t: float = 0.0
    _derived: object = field(default=None, repr=False, compare=False)

    @property
    def derived(self):
        if self._derived is None:
            self._derived = derive(self.grid, self.omega)
        return self._derived

    def invalidate(self):
        self._derived = None

    @property
    def tau(self):
        return self.derived.tau

    @property
    def Q(self):
        return self.derived.Q

    @property
    def g(self):
        return self.derived.g

    @property
    def mu(self):
        return self.derived.m

    def scaled(self, factor):
        """The state with omega replaced by factor * omega (same time)."""
        return FlowState(self.grid, factor * self.omega, self.t)


@dataclass
class StepControl:
    dt: float
    safety: float = 0.2
    max_t2_dt: float = np.inf
    backend: str = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def compute_torsion(state):
    return state.derived.tau


def time_derivative(state):
    """d tau_i for each form of the triple."""
    return ext_d(state.grid, state.derived.tau, 1)


def _rhs(grid, omega):
    return ext_d(grid, derive(grid, omega).tau, 1)


def step(state, ctl, initial_margin=None):
    """One classical RK4 step; raises StabilityLoss if the margin collapses."""
    grid, w, dt = state.grid, state.omega, ctl.dt
    t_new = state.t + dt
    try:
        k1 = ext_d(grid, state.derived.tau, 1)
        k2 = _rhs(grid, w + 0.5 * dt * k1)
        k3 = _rhs(grid, w + 0.5 * dt * k2)
        k4 = _rhs(grid, w + dt * k3)
        new = FlowState(grid, w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t_new)
        margin = new.derived.margin
    except NotHypersymplectic as exc:
        raise StabilityLoss(str(exc), t=t_new, margin=exc.margin) from exc
    ref = state.derived.margin if initial_margin is None else initial_margin
    if margin <= STABILITY_FRACTION * ref:
        raise StabilityLoss(f"hypersymplectic margin {margin:.3e} collapsed", t=new.t, margin=margin)
    return new


def tau_gram(d):
    """<tau, tau>_ij = g^ab tau_ia tau_jb."""
    return np.einsum("...ab,...ia,...jb->...ij", d.ginv, d.tau, d.tau)


def torsion_norm_sq(state):
    d = state.derived
    return np.einsum("...ij,...ji->...", d.Qinv, tau_gram(d))


def q_jet(state, christoffel_deriv="fd4"):
    """Q jet (spectral or fd4 derivatives of the grid) and base Christoffels."""
    d = state.derived
    grid = state.grid
    dQ = np.moveaxis(grid.grad(d.Q, dealias=False), -1, -3)
    ddQ = np.moveaxis(grid.hessian(d.Q, dealias=False), (-2, -1), (-4, -3))
    jet = QJet(d.Q, dQ, ddQ, d.g, d.ginv, d.Qinv)
    gamma = christoffel(grid, d.g, christoffel_deriv, d.ginv)
    return jet, gamma


def dq_norm_field(state):
    d = state.derived
    dQ = np.moveaxis(state.grid.grad(d.Q, dealias=False), -1, -3)
    return dq_norm_sq(QJet(d.Q, dQ, None, d.g, d.ginv, d.Qinv))


def q_evolution_rhs(state, christoffel_deriv="fd4", jet=None):
    """Hat-Delta Q + <tau,tau> - tr(Q^-1 <tau,tau>) Q / 3."""
    d = state.derived
    if jet is None:
        jet = q_jet(state, christoffel_deriv)
    jet, gamma = jet
    tt = tau_gram(d)
    t2 = np.einsum("...ij,...ji->...", d.Qinv, tt)
    return harmonic_laplacian(jet, gamma) + tt - (t2 / 3.0)[..., None, None] * d.Q


def torsion_norm_sq_7d(state):
    """Tensor norm of T = -(dt^i ^ tau_i)/2 on M x T^3, i.e. tr(Q^-1 <tau,tau>) / 2.

    This is the normalisation in which d(mu)/dt = (2/3)|T|^2 mu.
    """
    return 0.5 * torsion_norm_sq(state)


def metric_evolution_rhs(state, ric, christoffel_deriv="fd4"):
    """-2 Ric + <dQ x dQ>_Q / 2 + Q^ij tau_i x tau_j - (2/3)|T|_7^2 g.

    |T|_7^2 is :func:`torsion_norm_sq_7d`, so the last term is
    -(1/3) tr(Q^-1 <tau,tau>) g.
    """
    d = state.derived
    dQ = np.moveaxis(state.grid.grad(d.Q, dealias=False), -1, -3)
    jet = QJet(d.Q, dQ, None, d.g, d.ginv, d.Qinv)
    tt = np.einsum("...ij,...ia,...jb->...ab", d.Qinv, d.tau, d.tau)
    tt = 0.5 * (tt + np.swapaxes(tt, -1, -2))
    t2 = np.einsum("...ab,...ab->...", d.ginv, tt)
    return -2.0 * ric + 0.5 * dq_outer(jet) + tt - (1.0 / 3.0) * t2[..., None, None] * d.g


def stable_dt(state, safety=0.2):
    """Largest dt with dt * sup(|T|^2 + |dQ|^2_Q + tr Q / h^2) <= safety."""
    d = state.derived
    h = min(state.grid.spacing)
    rate = torsion_norm_sq(state) + dq_norm_field(state) + np.trace(d.Q, axis1=-2, axis2=-1) / h ** 2
    return safety / float(rate.max())


def advance(state, ctl, t_end, callback=None):
    """Step until ``t_end`` (last step shortened to land on it)."""
    m0 = state.derived.margin
    while state.t < t_end - 1e-12 * max(1.0, abs(t_end)):
        dt = min(ctl.dt, t_end - state.t)
        state = step(state, replace(ctl, dt=dt), initial_margin=m0)
        if callback is not None:
            callback(state)
    return state


def q_rate(state):
    """Exact dQ/dt implied by d(omega)/dt = d tau at the current state.

    Differentiates the wedge Gram matrix and the cube-root normalisation,
    so it uses the flow itself, not the Q-evolution equation.
    """
    d = state.derived
    w = state.omega
    wd = time_derivative(state)
    dgram = 0.5 * (algebra.wedge(wd[..., :, None, :], w[..., None, :, :])
                   + algebra.wedge(w[..., :, None, :], wd[..., None, :, :]))
    dlogm = np.einsum("...ij,...ji->...", d.Qinv, dgram) / (3.0 * d.m)
    return dgram / d.m[..., None, None] - dlogm[..., None, None] * d.Q


def trq_identity_rhs(state):
    """-g^ab tr(d_a Q Q^-1 d_b Q) + tr<tau,tau> - tr(Q^-1 <tau,tau>) tr Q / 3.

    With Q diagonalised this is the pointwise identity for (d/dt - Delta) tr Q
    used in the maximum-principle argument.
    """
    d = state.derived
    dQ = np.moveaxis(state.grid.grad(d.Q, dealias=False), -1, -3)
    quad = np.einsum("...ab,...aij,...jk,...bki->...", d.ginv, dQ, d.Qinv, dQ)
    tt = tau_gram(d)
    t2 = np.einsum("...ij,...ji->...", d.Qinv, tt)
    trq = np.trace(d.Q, axis1=-2, axis2=-1)
    return -quad + np.trace(tt, axis1=-2, axis2=-1) - t2 * trq / 3.0
