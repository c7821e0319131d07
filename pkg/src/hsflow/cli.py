"""Command line: ``hsflow run <config>``, ``hsflow verify-donaldson [key=value ...]``,
``hsflow inspect <checkpoint>``.

Exit codes: 0 ok, 1 invariant violation, 2 stability loss, 3 config error.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import donaldson, flow, runner
from .checkpoint import read_checkpoint
from .errors import ConfigError, HSFlowError, NotHypersymplectic

CHART_KEYS = {"kind": str, "n": int, "w0": float, "S": float, "tol": float, "output": str}


def _cmd_run(args):
    cfg = runner.load_config(args.config)
    for key, val in runner.parse_pairs(args.set or []).items():
        setattr(cfg, key, val)
    cfg.validate()
    report = runner.run(cfg)
    print(json.dumps({"exit_code": report.exit_code, "reason": report.reason,
                      "t_final": report.t_final, "steps": report.steps,
                      "suites": report.suites}, sort_keys=True))
    return report.exit_code


def parse_chart_params(items):
    """Chart parameters from ``key=value`` tokens or a file of such lines."""
    lines = []
    for item in items:
        if "=" not in item and Path(item).is_file():
            lines.extend(Path(item).read_text(encoding="utf-8").splitlines())
        else:
            lines.append(item)
    out = {"kind": "ansatz", "n": 25, "w0": 1.0, "S": 1.0, "tol": 1e-10, "output": ""}
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CHART_KEYS:
            raise ConfigError(f"unknown chart key {key!r}")
        try:
            out[key] = CHART_KEYS[key](raw)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if out["kind"] not in ("ansatz", "quadratic"):
        raise ConfigError("kind must be ansatz or quadratic")
    if out["n"] < 13:
        raise ConfigError("n must be at least 13")
    return out


def _cmd_verify(args):
    p = parse_chart_params(args.params)
    if p["kind"] == "quadratic":
        pd = donaldson.quadratic_potential(S=p["S"])
    else:
        wsol = donaldson.solve_w_ode(p["w0"], tol=p["tol"])
        pd = donaldson.ansatz_potential(wsol, S=p["S"])
    rep = donaldson.verify_torsion_free(donaldson.build_chart_triple(pd, p["n"]))
    text = json.dumps(rep.as_dict(), indent=2, sort_keys=True)
    print(text)
    if p["output"]:
        Path(p["output"]).write_text(text + "\n", encoding="utf-8")
    return runner.EXIT_OK if rep.hypersymplectic else runner.EXIT_INVARIANT


def _cmd_inspect(args):
    header, grid, omega = read_checkpoint(args.checkpoint)
    state = flow.FlowState(grid, omega, header["t"])
    info = {k: header[k] for k in ("t", "N", "L", "backend", "dealias", "chart")}
    extra = header.get("extra", {})
    info["step"] = extra.get("step")
    info["dt"] = extra.get("dt")
    try:
        d = state.derived
        info["margin"] = float(d.margin)
        info["t2_sup"] = float(flow.torsion_norm_sq_7d(state).max())
        info["trq_sup"] = float(np.trace(d.Q, axis1=-2, axis2=-1).max())
        info["hypersymplectic"] = True
    except NotHypersymplectic as exc:
        info["hypersymplectic"] = False
        info["error"] = str(exc)
    print(json.dumps(info, indent=2, sort_keys=True))
    return runner.EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="hsflow", description="Hypersymplectic flow on T^4.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a configured flow")
    p.add_argument("config", help="key = value config file")
    p.add_argument("--set", nargs="*", metavar="KEY=VALUE", help="override config keys")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("verify-donaldson", help="check a torsion-free chart")
    p.add_argument("params", nargs="*", help="key=value tokens or a params file "
                   "(kind, n, w0, S, tol, output)")
    p.set_defaults(func=_cmd_verify)
    p = sub.add_parser("inspect", help="summarise a checkpoint")
    p.add_argument("checkpoint")
    p.set_defaults(func=_cmd_inspect)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return runner.EXIT_CONFIG
    except NotHypersymplectic as exc:
        print(f"initial data not hypersymplectic: {exc}", file=sys.stderr)
        return runner.EXIT_CONFIG
    except (HSFlowError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return runner.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
