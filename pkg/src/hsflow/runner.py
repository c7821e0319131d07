"""Run orchestration: config files, scenario presets, the stepping loop and outputs.

A config is flat ``key = value`` UTF-8 text; ``#`` starts a comment.  Every
key has a type and a range (see ``KEYS``); unknown keys are rejected.  The
environment variable ``HSFLOW_OUTPUT_DIR`` overrides ``output_dir``.
"""
import json
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import algebra, diagnostics, flow, kernels
from .checkpoint import read_checkpoint, write_checkpoint
from .errors import ConfigError, HSFlowError, NotHypersymplectic, StabilityLoss
from .torus import Grid, cohomology_pairings, ext_d

SCENARIOS = ("flat", "perturbed", "anisotropic", "c0", "donaldson-chart")
EXIT_OK, EXIT_INVARIANT, EXIT_STABILITY, EXIT_CONFIG = 0, 1, 2, 3
OUTPUT_ENV = "HSFLOW_OUTPUT_DIR"


@dataclass
class RunConfig:
    N: int = 16
    L: float = 2 * math.pi
    backend: str = "spectral"
    scenario: str = "perturbed"
    eps: float = 0.05
    modes: int = 2
    lam: float = 1.0
    K: float = 1.0
    eps0: float = 0.05
    safety: float = 0.2
    dt: float = 0.0            # 0 means: from safety at t = 0
    T: float = 2.0
    record_stride: int = 10
    checkpoint_stride: int = 0  # in steps, 0 disables periodic checkpoints
    output_dir: str = "hsflow_out"
    workers: int = 1
    seed: int = 0
    heavy: bool = True
    csv: bool = True
    resume: str = ""
    tol_pairing: float = 1e-8
    tol_detq: float = 1e-12
    tol_selfdual: float = -1.0  # negative means 10 h^4
    tol_vol: float = 1e-10
    tol_t2_bound: float = 1e-10
    tol_heat: float = 1e-6
    tol_bochner: float = 1e-3
    chart_n: int = 25
    chart_w0: float = 1.0

    def validate(self):
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)
        need(8 <= self.N <= 256 and self.N % 2 == 0, "N must be even and lie in [8, 256]")
        need(self.L > 0, "L must be positive")
        need(self.backend in ("spectral", "fd4"), "backend must be spectral or fd4")
        need(self.scenario in SCENARIOS, f"scenario must be one of {', '.join(SCENARIOS)}")
        need(0 <= self.eps < 1, "eps must lie in [0, 1)")
        need(1 <= self.modes <= self.N // 3, "modes must lie in [1, N/3]")
        need(self.lam > 0, "lam must be positive")
        need(self.K > 0, "K must be positive")
        need(self.eps0 > 0, "eps0 must be positive")
        need(0 < self.safety <= 1, "safety must lie in (0, 1]")
        need(self.dt >= 0, "dt must be non-negative")
        need(self.T >= 0, "T must be non-negative")
        need(self.record_stride >= 1, "record_stride must be at least 1")
        need(self.checkpoint_stride >= 0, "checkpoint_stride must be non-negative")
        need(self.workers >= 1, "workers must be at least 1")
        need(self.seed >= 0, "seed must be non-negative")
        need(self.chart_n >= 13, "chart_n must be at least 13")
        need(self.chart_w0 > 0, "chart_w0 must be positive")
        for f in fields(self):
            if f.name.startswith("tol_") and f.name != "tol_selfdual":
                need(getattr(self, f.name) >= 0, f"{f.name} must be non-negative")
        return self

    @property
    def h(self):
        return self.L / self.N


KEYS = {f.name: f.type for f in fields(RunConfig)}
_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(key, raw):
    typ = KEYS[key]
    try:
        if typ is bool:
            return _BOOL[raw.lower()]
        if typ is int:
            return int(raw)
        if typ is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        return raw
    except (KeyError, ValueError):
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_pairs(pairs):
    """Dict of typed values from an iterable of ``key=value`` strings."""
    out = {}
    for item in pairs:
        line = item.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {item!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def parse_config(text, env=None):
    values = parse_pairs(text.splitlines())
    env = os.environ if env is None else env
    if env.get(OUTPUT_ENV):
        values["output_dir"] = env[OUTPUT_ENV]
    return RunConfig(**values).validate()


def load_config(path, env=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, env)


# -- scenarios ----------------------------------------------------------------

def make_grid(cfg):
    return Grid.torus(cfg.N, cfg.L, backend=cfg.backend, workers=cfg.workers)


def flat_triple(grid, A=None):
    w = algebra.standard_triple()
    if A is not None:
        w = np.asarray(A, dtype=float) @ w
    return np.broadcast_to(w, grid.shape + (3, 6)).copy()


def exact_perturbation(grid, modes, seed):
    """d alpha for a random trigonometric 1-form triple alpha, scaled to sup|d alpha| = 1.

    Each alpha_i^a is a sum of A_k cos(k.x + phi_k) over the nonzero wave
    vectors with |k|_inf <= modes, with normal amplitudes damped by
    1/(1 + |k|^2).  It is synthesised by an inverse FFT; the draw order is
    fixed, so the seed fixes the field.
    """
    rng = np.random.default_rng(seed)
    shape = grid.shape
    m = 2 * modes + 1
    coef = rng.normal(size=(3, 4) + (m,) * 4) + 1j * rng.normal(size=(3, 4) + (m,) * 4)
    k = np.arange(-modes, modes + 1)
    kk = sum(np.meshgrid(k * k, k * k, k * k, k * k, indexing="ij"))
    coef *= 1.0 / (1.0 + kk)
    coef[(slice(None),) * 2 + (modes,) * 4] = 0.0
    spec = np.zeros((3, 4) + shape, dtype=complex)
    idx = np.ix_(*(k % n for n in shape))
    for i in range(3):
        for a in range(4):
            spec[i, a][idx] = coef[i, a]
    alpha = np.fft.ifftn(spec, axes=(2, 3, 4, 5)).real * np.prod(shape)
    alpha = np.moveaxis(alpha, (0, 1), (-2, -1))
    da = ext_d(grid, np.ascontiguousarray(alpha), 1)
    return da / np.abs(da).max()


def anisotropy_matrix(lam):
    """A with A A^T = diag(lam, lam, lam^-2), so constant Q has that form."""
    return np.diag([np.sqrt(lam), np.sqrt(lam), 1.0 / lam])


def scenario_omega(cfg, grid):
    if cfg.scenario == "flat":
        return flat_triple(grid)
    if cfg.scenario == "anisotropic":
        w = flat_triple(grid, anisotropy_matrix(cfg.lam))
    else:
        w = flat_triple(grid)
    if cfg.eps > 0:
        w = w + cfg.eps * exact_perturbation(grid, cfg.modes, cfg.seed)
    if cfg.scenario == "c0":
        w = cfg.K ** 2 * w
    return w


def scenario_build(cfg):
    """The initial FlowState of a scenario; raises NotHypersymplectic if eps is too large."""
    cfg.validate()
    if cfg.scenario == "donaldson-chart":
        raise ConfigError("donaldson-chart is a verification scenario, not a flow")
    grid = make_grid(cfg)
    state = flow.FlowState(grid, scenario_omega(cfg, grid), 0.0)
    state.derived  # noqa: B018  forces the hypersymplectic check
    return state


# -- run ------------------------------------------------------------------------

@dataclass
class RunReport:
    exit_code: int
    reason: str
    t_final: float
    steps: int
    records: int
    dt: float
    suites: dict
    failures: list
    trend: dict = None
    accumulator: float = None

    def as_dict(self):
        return asdict(self)


SUITES = ("conservation", "volume", "inequalities", "max_principle", "stability")


class _Checker:
    def __init__(self, cfg, p0):
        self.cfg = cfg
        self.p0 = np.asarray(p0)
        self.sd_tol = 10 * cfg.h ** 4 if cfg.tol_selfdual < 0 else cfg.tol_selfdual
        self.failures = []

    def _fail(self, suite, name, t, value, bound):
        self.failures.append({"suite": suite, "check": name, "t": t,
                              "value": value, "bound": bound})

    def check(self, rec):
        c, t = self.cfg, rec.t
        n0 = len(self.failures)
        drift = float(np.abs(np.asarray(rec.pairings) - self.p0).max())
        if drift > c.tol_pairing:
            self._fail("conservation", "pairings", t, drift, c.tol_pairing)
        if rec.detq_drift > c.tol_detq:
            self._fail("conservation", "det_q", t, rec.detq_drift, c.tol_detq)
        if rec.selfdual_residual > self.sd_tol:
            self._fail("conservation", "self_duality", t, rec.selfdual_residual, self.sd_tol)
        vb = c.tol_vol * abs(rec.vol_bound)
        if rec.vol > rec.vol_bound + vb:
            self._fail("volume", "vol_bound", t, rec.vol - rec.vol_bound, vb)
        if rec.t2_bound_excess > c.tol_t2_bound:
            self._fail("inequalities", "torsion_bound", t, rec.t2_bound_excess, c.tol_t2_bound)
        if rec.heat_tr_min < -c.tol_heat:
            self._fail("inequalities", "heat_tr", t, rec.heat_tr_min, -c.tol_heat)
        if not math.isnan(rec.bochner_min) and rec.bochner_min < -c.tol_bochner:
            self._fail("inequalities", "bochner", t, rec.bochner_min, -c.tol_bochner)
        return len(self.failures) == n0

    def monitor(self, run, seen):
        suite = {"-vol": "volume", "trq_sup": "max_principle", "c0_value": "max_principle"}
        for v in run.violations[seen:]:
            self._fail(suite[v["quantity"]], "monotone_" + v["quantity"].lstrip("-"),
                       v["t"], v["value"], v["previous"])
        return len(run.violations)

    def suites(self, stability_ok):
        out = {s: True for s in SUITES}
        for f in self.failures:
            out[f["suite"]] = False
        out["stability"] = stability_ok
        return out


def _monitor_state(run):
    return {k: v for k, v in asdict(run).items()}


def _checkpoint(path, state, cfg, step_index, dt, m0, p0, run):
    extra = {"step": step_index, "dt": dt, "initial_margin": m0,
             "pairings0": np.asarray(p0).tolist(), "monitor": _monitor_state(run),
             "config": asdict(cfg)}
    write_checkpoint(path, state.grid, state.omega, state.t, extra=extra)


def _plan(cfg, state):
    if cfg.T == 0:
        return 0, 0.0
    dt = cfg.dt if cfg.dt > 0 else flow.stable_dt(state, cfg.safety)
    n = max(1, math.ceil(cfg.T / dt - 1e-9))
    return n, cfg.T / n


def run(cfg):
    """Run a configured flow, write outputs and return a RunReport.

    Outputs in ``cfg.output_dir``: records.ndjson, records.csv, schema.json,
    periodic checkpoint_<step>.chk, final.chk and summary.json.  The run
    aborts (with a checkpoint) at the first record that breaks an invariant.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    kernels.set_threads(cfg.workers)
    if cfg.scenario == "donaldson-chart":
        return _run_chart(cfg, out)

    if cfg.resume:
        header, grid, omega = read_checkpoint(cfg.resume, workers=cfg.workers)
        ex = header["extra"]
        state = flow.FlowState(grid, omega, header["t"])
        k0, dt, m0 = ex["step"], ex["dt"], ex["initial_margin"]
        p0 = np.asarray(ex["pairings0"])
        n_steps = k0 + max(0, round((cfg.T - state.t) / dt))
        run_mon = diagnostics.RunMonitor(**ex["monitor"])
    else:
        state = scenario_build(cfg)
        n_steps, dt = _plan(cfg, state)
        k0 = 0
        m0 = state.derived.margin
        p0 = cohomology_pairings(state.grid, state.omega)
        run_mon = diagnostics.RunMonitor(eps0=cfg.eps0)

    checker = _Checker(cfg, p0)
    seen = len(run_mon.violations)
    ctl = flow.StepControl(dt=dt if dt > 0 else 1.0, safety=cfg.safety)
    n_rec = 0
    exit_code, reason = EXIT_OK, "completed"
    writer = diagnostics.RecordWriter(out / "records.ndjson",
                                      out / "records.csv" if cfg.csv else None,
                                      out / "schema.json")

    def emit(st, k):
        nonlocal n_rec, seen
        rec = diagnostics.record(st, heavy=cfg.heavy)
        writer.write(rec)
        n_rec += 1
        ok = checker.check(rec)
        if not (cfg.resume and k == k0):
            diagnostics.extension_monitor(run_mon, rec)
        seen_before = seen
        seen = checker.monitor(run_mon, seen)
        return ok and seen == seen_before

    k = k0
    try:
        with writer:
            ok = emit(state, k)
            while ok and k < n_steps:
                state = flow.step(state, ctl, initial_margin=m0)
                k += 1
                state.t = k * dt
                if k % cfg.record_stride == 0 or k == n_steps:
                    ok = emit(state, k)
                if cfg.checkpoint_stride and k % cfg.checkpoint_stride == 0:
                    _checkpoint(out / f"checkpoint_{k:08d}.chk", state, cfg, k, dt, m0, p0, run_mon)
            if not ok:
                exit_code, reason = EXIT_INVARIANT, "invariant violation"
    except StabilityLoss as exc:
        run_mon.stability_time = exc.t
        exit_code, reason = EXIT_STABILITY, f"stability loss: {exc}"
    _checkpoint(out / "final.chk", state, cfg, k, dt, m0, p0, run_mon)

    trend = None
    try:
        trend = asdict(diagnostics.t_to_zero_trend(run_mon, min_records=3))
    except HSFlowError:
        pass
    report = RunReport(exit_code, reason, float(state.t), k, n_rec, dt,
                       checker.suites(exit_code != EXIT_STABILITY), checker.failures,
                       trend, run_mon.accumulator)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report.as_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _run_chart(cfg, out):
    from . import donaldson
    try:
        wsol = donaldson.solve_w_ode(cfg.chart_w0)
        ct = donaldson.build_chart_triple(donaldson.ansatz_potential(wsol), cfg.chart_n)
        rep = donaldson.verify_torsion_free(ct)
    except NotHypersymplectic as exc:
        rep, exc_msg = None, str(exc)
    payload = rep.as_dict() if rep is not None else {"error": exc_msg}
    with open(out / "donaldson.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    ok = rep is not None and rep.hypersymplectic
    report = RunReport(EXIT_OK if ok else EXIT_INVARIANT,
                       "chart verified" if ok else "chart not hypersymplectic",
                       0.0, 0, 0, 0.0, {"torsion_free_chart": ok}, [])
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report.as_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
