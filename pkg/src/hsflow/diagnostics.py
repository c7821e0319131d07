"""Per-slice diagnostics and run-level monitors for hypersymplectic flows.

Torsion norms in the records use the 7-dimensional normalisation
|T|^2 = tr(Q^-1 <tau,tau>) / 2 (see :func:`hsflow.flow.torsion_norm_sq_7d`),
the one in which d(mu)/dt = (2/3)|T|^2 mu and |T|^2 <= (3/2)|dQ|^2_Q.
"""
import csv
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import algebra, flow
from .curvature import curvature_norms, curvature_of, derivative_grid
from .errors import InsufficientData, OutOfOrder
from .spd import (QJet, dq_norm_sq, dq_outer, harmonic_laplacian, map_hessian,
                  p_norm_sq_2tensor, target_covariant)
from .torus import cohomology_pairings, integrate, laplace_beltrami, metric_pieces

MAX_PRINCIPLE_THRESHOLD = 2.0 ** (5.0 / 3.0)
PAIR_LABELS = ("01", "02", "03", "23", "31", "12")


@dataclass
class DiagnosticsRecord:
    t: float
    trq_sup: float
    trq_inf: float
    dq2_sup: float
    t2_sup: float
    t2_int: float
    t4_int: float
    t2_bound_excess: float
    vol: float
    vol_bound: float
    pairings: list
    delta_lo: float
    delta_hi: float
    heat_tr_min: float
    heat_tr_max: float
    bochner_min: float
    rm_sup: float
    rm2_int: float
    ric_sup: float
    ric4_int: float
    nabla_dq2_sup: float
    dq4_sup: float
    c0_value: float
    detq_drift: float
    selfdual_residual: float
    margin: float

    def to_json(self):
        d = {k: (None if isinstance(v, float) and v != v else v) for k, v in asdict(self).items()}
        return json.dumps(d, allow_nan=False)

    def csv_row(self):
        d = asdict(self)
        row = []
        for name in CSV_COLUMNS:
            if name.startswith("pair_"):
                _, i, lab = name.split("_")
                row.append(d["pairings"][int(i) - 1][PAIR_LABELS.index(lab)])
            else:
                row.append(d[name])
        return row


RECORD_FIELDS = tuple(f.name for f in fields(DiagnosticsRecord))
CSV_COLUMNS = tuple(
    [n for n in RECORD_FIELDS if n != "pairings"]
    + [f"pair_{i}_{lab}" for i in (1, 2, 3) for lab in PAIR_LABELS])


def schema():
    """Column schema emitted next to CSV output."""
    units = {"t": "flow time", "pairings": "area (period units squared)"}
    return {
        "format": "hsflow-diagnostics",
        "version": 1,
        "torsion_norm": "|T|^2 = tr(Q^-1 <tau,tau>) / 2",
        "ndjson_fields": list(RECORD_FIELDS),
        "csv_columns": list(CSV_COLUMNS),
        "units": units,
    }


# -- fields -----------------------------------------------------------------

def _q_jet(state, with_second=True):
    d = state.derived
    grid = state.grid
    dQ = np.moveaxis(grid.grad(d.Q, dealias=False), -1, -3)
    ddQ = None
    if with_second:
        ddQ = np.moveaxis(grid.hessian(d.Q, dealias=False), (-2, -1), (-4, -3))
    return QJet(d.Q, dQ, ddQ, d.g, d.ginv, d.Qinv)


def heat_tr_residual(state, pair=None, t2=None):
    """(5/3)|T|^2 tr Q - (d/dt - Delta) tr Q, expected >= 0.

    With ``pair = (prev, next)`` the time derivative is the centred difference
    of tr Q between the two states; otherwise the exact rate implied by
    d(omega)/dt = d tau is used.
    """
    d = state.derived
    trq = np.trace(d.Q, axis1=-2, axis2=-1)
    if pair is None:
        rate = np.trace(flow.q_rate(state), axis1=-2, axis2=-1)
    else:
        prev, nxt = pair
        rate = (np.trace(nxt.Q, axis1=-2, axis2=-1) - np.trace(prev.Q, axis1=-2, axis2=-1)) / (
            nxt.t - prev.t)
    lap = laplace_beltrami(state.grid, trq, d.ginv, d.m, dealias=False)
    if t2 is None:
        t2 = flow.torsion_norm_sq_7d(state)
    return (5.0 / 3.0) * t2 * trq - (rate - lap)


def bochner_terms(grid, jet, christoffels=None, ricci=None, sqrtg=None):
    """-K_P from the Bochner formula, plus |nabla dQ|^2 and |dQ|^2 fields.

    -K_P = Delta|dQ|^2/2 - |nabla dQ|^2 - <nabla tension, dQ> - Ric(dQ, dQ).
    """
    if sqrtg is None:
        sqrtg = np.sqrt(np.linalg.det(jet.g))
    dq2 = dq_norm_sq(jet)
    lap = laplace_beltrami(grid, dq2, jet.ginv, sqrtg, dealias=False)
    hess = map_hessian(jet, christoffels)
    h2 = p_norm_sq_2tensor(hess, jet.Qinv, jet.ginv)
    tens = harmonic_laplacian(jet, christoffels)
    dtens = np.moveaxis(grid.grad(tens, dealias=False), -1, -3)
    V = target_covariant(jet.Q, jet.Qinv, jet.dQ, tens, dtens)
    X = jet.Qinv[..., None, :, :] @ V
    Y = jet.Qinv[..., None, :, :] @ jet.dQ
    cross = np.einsum("...ab,...aij,...bji->...", jet.ginv, X, Y)
    res = 0.5 * lap - h2 - cross
    if ricci is not None:
        ric_up = np.einsum("...ac,...bd,...cd->...ab", jet.ginv, jet.ginv, ricci)
        res = res - np.einsum("...ab,...ab->...", ric_up, dq_outer(jet))
    return res, h2, dq2


def bochner_residual(state, bundle=None, deriv="fd4"):
    """-K_P on a flow state; expected >= 0 since P is non-positively curved."""
    d = state.derived
    if bundle is None:
        bundle = curvature_of(derivative_grid(state.grid, deriv), d.g)
    jet = _q_jet(state)
    res, _, _ = bochner_terms(state.grid, jet, bundle.christoffel, bundle.ricci, d.m)
    return res


def bochner_residual_fields(grid, Q, g, deriv="fd4"):
    """-K_P for an arbitrary SPD field Q over a metric field g on ``grid``."""
    ginv, sqrtg = metric_pieces(g)
    dQ = np.moveaxis(grid.grad(Q, dealias=False), -1, -3)
    ddQ = np.moveaxis(grid.hessian(Q, dealias=False), (-2, -1), (-4, -3))
    jet = QJet(Q, dQ, ddQ, g, ginv)
    flat = np.allclose(g, np.eye(4), rtol=0.0, atol=0.0)
    if flat:
        gamma, ric = None, None
    else:
        bundle = curvature_of(derivative_grid(grid, deriv), g)
        gamma, ric = bundle.christoffel, bundle.ricci
    res, _, _ = bochner_terms(grid, jet, gamma, ric, sqrtg)
    return res


def max_principle_region(state):
    """(sup tr Q < 2^(5/3), 2^(5/3) - sup tr Q).

    A supremum within rounding of the threshold counts as on the boundary.
    """
    sup = float(np.trace(state.Q, axis1=-2, axis2=-1).max())
    margin = MAX_PRINCIPLE_THRESHOLD - sup
    return margin > 1e-12 * MAX_PRINCIPLE_THRESHOLD, margin


def c0_value(state, dq2=None):
    if dq2 is None:
        dq2 = flow.dq_norm_field(state)
    return float((np.trace(state.Q, axis1=-2, axis2=-1) + dq2).max())


def c0_criterion(state, eps0):
    """(sup(tr Q + |dQ|^2_Q) <= 3 + eps0, the supremum)."""
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    v = c0_value(state)
    return v <= 3.0 + eps0, v


def selfdual_residual(state):
    d = state.derived
    w = state.omega
    star = algebra.hodge_star_2(d.g[..., None, :, :], w, d.ginv[..., None, :, :],
                                d.m[..., None])
    return float(np.abs(star - w).max() / (1.0 + np.abs(w).max()))


def record(state, bundle=None, heavy=True, deriv="fd4"):
    """Evaluate every monitored quantity at one time slice.

    ``heavy=False`` skips curvature and the Bochner residual (reported as
    NaN), which dominate the cost.
    """
    grid = state.grid
    d = state.derived
    t2 = flow.torsion_norm_sq_7d(state)
    jet = _q_jet(state, with_second=heavy)
    dq2 = dq_norm_sq(jet)
    trq = np.trace(d.Q, axis1=-2, axis2=-1)
    lam = np.linalg.eigvalsh(d.Q)
    w = state.omega
    sq = algebra.wedge(w, w).sum(axis=-1)
    heat = heat_tr_residual(state, t2=t2)
    nan = float("nan")
    rm_sup = rm2 = ric_sup = ric4 = boch = h2sup = nan
    if heavy:
        if bundle is None:
            bundle = curvature_of(derivative_grid(grid, deriv), d.g)
        rm_sup, rm2, ric_sup, ric4 = curvature_norms(grid, bundle, d.m)
        res, h2, _ = bochner_terms(grid, jet, bundle.christoffel, bundle.ricci, d.m)
        boch = float(res.min())
        h2sup = float(h2.max())
    pair = cohomology_pairings(grid, w)
    return DiagnosticsRecord(
        t=float(state.t),
        trq_sup=float(trq.max()),
        trq_inf=float(trq.min()),
        dq2_sup=float(dq2.max()),
        t2_sup=float(t2.max()),
        t2_int=integrate(grid, t2 * d.m),
        t4_int=integrate(grid, t2 * t2 * d.m),
        t2_bound_excess=float((t2 - 1.5 * dq2).max()),
        vol=integrate(grid, d.m),
        vol_bound=integrate(grid, sq) / 6.0,
        pairings=[[float(v) for v in row] for row in np.asarray(pair)],
        delta_lo=float((1.0 - lam[..., 0]).max()),
        delta_hi=float((lam[..., -1] - 1.0).max()),
        heat_tr_min=float(heat.min()),
        heat_tr_max=float(heat.max()),
        bochner_min=boch,
        rm_sup=float(rm_sup),
        rm2_int=float(rm2),
        ric_sup=float(ric_sup),
        ric4_int=float(ric4),
        nabla_dq2_sup=h2sup,
        dq4_sup=float((dq2 * dq2).max() / 16.0),
        c0_value=float((trq + dq2).max()),
        detq_drift=float(np.abs(np.linalg.det(d.Q) - 1.0).max()),
        selfdual_residual=selfdual_residual(state),
        margin=float(d.margin),
    )


# -- run-level monitors ----------------------------------------------------------

@dataclass
class RunMonitor:
    """Sequential monitor over the records of one run."""

    eps0: float = 0.05
    mono_rtol: float = 1e-9
    times: list = field(default_factory=list)
    t2_sup: list = field(default_factory=list)
    t2_int: list = field(default_factory=list)
    vol: list = field(default_factory=list)
    trq_sup: list = field(default_factory=list)
    c0: list = field(default_factory=list)
    accumulator: float = 0.0
    accumulated: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    stability_time: float = None

    def _check(self, name, prev, new, t):
        if new > prev + self.mono_rtol * (1.0 + abs(prev)):
            self.violations.append({"t": t, "quantity": name, "previous": prev, "value": new})

    def gap_curve(self, s_star=None):
        """(t, (s* - t) sup|T|^2) over the recorded history."""
        s = self.stability_time if s_star is None else s_star
        if s is None:
            return []
        return [(t, (s - t) * v) for t, v in zip(self.times, self.t2_sup) if t < s]


def extension_monitor(run, rec):
    """Fold one record into the run monitor (records must arrive in time order)."""
    if run.times and not rec.t > run.times[-1]:
        raise OutOfOrder(f"record at t={rec.t} after t={run.times[-1]}")
    if run.times:
        run.accumulator += 0.5 * (rec.t - run.times[-1]) * (rec.t2_sup + run.t2_sup[-1])
        if run.trq_sup[-1] < MAX_PRINCIPLE_THRESHOLD:
            run._check("trq_sup", run.trq_sup[-1], rec.trq_sup, rec.t)
        if run.c0[-1] <= 3.0 + run.eps0:
            run._check("c0_value", run.c0[-1], rec.c0_value, rec.t)
        run._check("-vol", -run.vol[-1], -rec.vol, rec.t)
    run.times.append(rec.t)
    run.t2_sup.append(rec.t2_sup)
    run.t2_int.append(rec.t2_int)
    run.vol.append(rec.vol)
    run.trq_sup.append(rec.trq_sup)
    run.c0.append(rec.c0_value)
    run.accumulated.append(run.accumulator)
    return run


def accumulator_increment(run, window=0.2):
    """Increase of the extension integral over the trailing ``window`` fraction of time."""
    t = np.asarray(run.times)
    if t.size < 2:
        raise InsufficientData("need at least two records")
    cut = t[-1] - window * (t[-1] - t[0])
    acc = np.asarray(run.accumulated)
    return float(acc[-1] - np.interp(cut, t, acc))


@dataclass
class TrendReport:
    slope: float
    decreasing: bool
    final_over_max: float
    initial: float
    final: float
    vol_rate_residual: float


def t_to_zero_trend(run, min_records=50):
    """Log-slope of int |T|^2 mu over the trailing half, plus volume-rate consistency."""
    n = len(run.times)
    if n < min_records:
        raise InsufficientData(f"{n} records, need {min_records}")
    t = np.asarray(run.times)
    f = np.asarray(run.t2_int)
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    if np.all(f[half] == 0.0):
        slope = 0.0
    else:
        y = np.log(np.maximum(f[half], np.finfo(float).tiny))
        slope = float(np.polyfit(t[half], y, 1)[0])
    v = np.asarray(run.vol)
    rate = np.diff(v) / np.diff(t)
    mid = 0.5 * (f[1:] + f[:-1]) * (2.0 / 3.0)
    fmax = float(f.max())
    return TrendReport(
        slope=slope,
        decreasing=bool(slope < 0.0 or fmax == 0.0),
        final_over_max=float(f[-1] / fmax) if fmax > 0 else 0.0,
        initial=float(f[0]),
        final=float(f[-1]),
        vol_rate_residual=float(np.abs(rate - mid).max()),
    )


# -- output -----------------------------------------------------------------

class RecordWriter:
    """NDJSON + CSV sinks for a stream of records."""

    def __init__(self, ndjson_path, csv_path=None, schema_path=None):
        self._nd = open(ndjson_path, "w", encoding="utf-8", newline="\n")
        self._csv = None
        if csv_path is not None:
            self._csv_file = open(csv_path, "w", encoding="utf-8", newline="")
            self._csv = csv.writer(self._csv_file, lineterminator="\n")
            self._csv.writerow(CSV_COLUMNS)
        if schema_path is not None:
            with open(schema_path, "w", encoding="utf-8") as fh:
                json.dump(schema(), fh, indent=2)
                fh.write("\n")

    def write(self, rec):
        self._nd.write(rec.to_json() + "\n")
        if self._csv is not None:
            self._csv.writerow([repr(v) for v in rec.csv_row()])

    def close(self):
        self._nd.close()
        if self._csv is not None:
            self._csv_file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_ndjson(path):
    with open(path, encoding="utf-8") as fh:
        out = []
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(DiagnosticsRecord(**{k: (float("nan") if v is None else v)
                                                for k, v in d.items()}))
        return out
