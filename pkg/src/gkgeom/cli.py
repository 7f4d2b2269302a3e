"""Command line entry point ``gk``.

``gk verify`` builds a scenario and runs named checks; ``gk flow`` runs a
canonical flow or either GKRF formulation.  Settings come from an optional
JSON config file, overridden by flags.

Exit status: 0 success, 1 a check failed, 2 usage or config error,
3 the scenario could not be built, 4 a flow aborted.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import flows as fl
from . import genlin as gl
from . import structures as st
from . import torusfield as tf
from . import verify as vf

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_SCENARIO, EXIT_ABORT = 0, 1, 2, 3, 4

SCENARIOS = ("kaehler", "commuting", "joyce", "hyperkaehler")
FLOW_TYPES = ("canonical", "gkrf-biherm", "gkrf-generalized", "gkrf-both")
ALL_CHECKS = vf.DEFAULT_CHECKS + ("corruption_non_11", "corruption_non_closed")

CONFIG_KEYS = {"scenario", "grid", "seed", "tol", "potential", "amplitude", "checks", "flow", "gkrf", "out"}
FLOW_KEYS = {"type", "dt", "steps", "t_end", "integrator", "k_source", "potential", "certify_nijenhuis"}

DEFAULTS = {
    "grid": 16,
    "seed": 0,
    "tol": None,
    "checks": list(vf.DEFAULT_CHECKS),
    "flow": {"type": "canonical", "dt": 0.05, "steps": None, "t_end": None, "integrator": "rk4"},
    "gkrf": {"dt": 1e-3, "steps": 2},
    "out": ".",
}


class ConfigError(ValueError):
    pass


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _number(value, name, kind=float, positive=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number")
    if kind is int and int(value) != value:
        raise ConfigError(f"{name} must be an integer")
    value = kind(value)
    if positive and not value > 0:
        raise ConfigError(f"{name} must be positive")
    return value


def validate_config(cfg):
    """Check and normalize a merged config dict; raises :class:`ConfigError`."""
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {**DEFAULTS, **{k: v for k, v in cfg.items() if v is not None}}
    out["flow"] = {**DEFAULTS["flow"], **(cfg.get("flow") or {})}
    out["gkrf"] = {**DEFAULTS["gkrf"], **(cfg.get("gkrf") or {})}
    if "scenario" not in out:
        raise ConfigError("no scenario given (use --scenario or a config file)")
    if out["scenario"] not in SCENARIOS:
        raise ConfigError(f"unknown scenario {out['scenario']!r}; choose from {', '.join(SCENARIOS)}")
    N = _number(out["grid"], "grid", int)
    if N % 2 or N < 8:
        raise ConfigError("grid must be even and at least 8")
    out["grid"] = N
    out["seed"] = _number(out["seed"], "seed", int, positive=False)
    if out["tol"] is not None:
        out["tol"] = _number(out["tol"], "tol")
    if "amplitude" in out:
        out["amplitude"] = _number(out["amplitude"], "amplitude")
    if not isinstance(out["checks"], list) or not out["checks"]:
        raise ConfigError("checks must be a non-empty list")
    bad = [c for c in out["checks"] if c not in ALL_CHECKS]
    if bad:
        raise ConfigError(f"unknown checks: {bad}")
    if "potential" in out:
        try:
            out["potential"] = st.Potential.from_spec(out["potential"])
        except (TypeError, ValueError, KeyError, AttributeError) as exc:
            raise ConfigError(f"malformed potential spec: {exc}") from exc
    flow = out["flow"]
    unknown = set(flow) - FLOW_KEYS
    if unknown:
        raise ConfigError(f"unknown flow keys: {sorted(unknown)}")
    if flow["type"] not in FLOW_TYPES:
        raise ConfigError(f"unknown flow type {flow['type']!r}; choose from {', '.join(FLOW_TYPES)}")
    dt = _number(flow["dt"], "dt")
    steps = flow.get("steps")
    t_end = flow.get("t_end")
    if steps is not None:
        steps = _number(steps, "steps", int)
    if t_end is not None:
        t_end = _number(t_end, "t_end")
        if steps is not None:
            dt = t_end / steps
        else:
            steps = max(1, round(t_end / dt))
            dt = t_end / steps
    flow["dt"], flow["steps"] = dt, steps if steps is not None else 10
    if flow["integrator"] not in ("rk4", "euler"):
        raise ConfigError(f"unknown integrator {flow['integrator']!r}")
    if flow.get("potential") is not None:
        try:
            flow["potential"] = st.Potential.from_spec(flow["potential"])
        except (TypeError, ValueError, KeyError, AttributeError) as exc:
            raise ConfigError(f"malformed flow potential spec: {exc}") from exc
    out["gkrf"]["dt"] = _number(out["gkrf"]["dt"], "gkrf.dt")
    out["gkrf"]["steps"] = _number(out["gkrf"]["steps"], "gkrf.steps", int)
    return out


def build_state(cfg):
    kw = {}
    if "amplitude" in cfg:
        kw["amplitude"] = cfg["amplitude"]
    cert_tol = max(1e-8, cfg["tol"] or 0.0)
    return st.build_scenario(cfg["scenario"], N=cfg["grid"], potential=cfg.get("potential"), cert_tol=cert_tol, **kw)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def run_verify(cfg):
    """Build the scenario, run the selected checks, write the report; returns the exit status."""
    try:
        state = build_state(cfg)
    except (gl.GeometryError, st.FlowAbort, ValueError) as exc:
        print(f"error: scenario {cfg['scenario']!r} could not be built: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    results = []
    for name in cfg["checks"]:
        try:
            res = vf.run_check(
                name,
                state,
                tol=cfg["tol"],
                seed=cfg["seed"],
                cert_tol=max(1e-8, cfg["tol"] or 0.0),
                gkrf_steps=cfg["gkrf"]["steps"],
                gkrf_dt=cfg["gkrf"]["dt"],
            )
        except (gl.GeometryError, st.FlowAbort, vf.UndecidedError) as exc:
            res = vf.CheckResult(name, float("inf"), 0.0, False, {"scenario": state.label, "grid": state.grid.N, "seed": cfg["seed"]}, {"error": str(exc)})
        results.append(res)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(vf.report_json(results))
    _write_rows(
        os.path.join(out, "monitors.csv"),
        ["check", "residual", "tolerance", "passed"],
        [[r.name, f"{r.residual:.12e}", f"{r.tolerance:.12e}", int(r.passed)] for r in results],
    )
    print(vf.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def _flow_config(cfg, **extra):
    f = cfg["flow"]
    return fl.FlowConfig(
        dt=f["dt"],
        steps=f["steps"],
        integrator=f["integrator"],
        k_source=f.get("k_source") or "potential",
        potential=f.get("potential"),
        certify_nijenhuis=f.get("certify_nijenhuis", True),
        **extra,
    )


def _summary_lines(name, record):
    s = record.summary()
    keys = [k for k in ("positivity", "N(J1)", "N(J2)", "[J1,J2]", "I_drift", "sigma_drift") if k in s]
    last = record.rows[-1] if record.rows else {}
    parts = [f"{k}={last.get(k, s[k]):.3e}" for k in keys]
    return f"{name}: t={s['t_final']:.4g} " + " ".join(parts)


def run_flow(cfg):
    """Run the configured flow, write monitors and the final state; returns the exit status."""
    try:
        state = build_state(cfg)
    except (gl.GeometryError, st.FlowAbort, ValueError) as exc:
        print(f"error: scenario {cfg['scenario']!r} could not be built: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    kind = cfg["flow"]["type"]
    runs = {
        "canonical": [("canonical", lambda s, c: fl.canonical_flow(s, c))],
        "gkrf-biherm": [("biherm", fl.gkrf_biherm)],
        "gkrf-generalized": [("generalized", fl.gkrf_generalized)],
        "gkrf-both": [("biherm", fl.gkrf_biherm), ("generalized", fl.gkrf_generalized)],
    }[kind]
    finals, report = {}, {"scenario": cfg["scenario"], "grid": cfg["grid"], "type": kind, "runs": {}}
    for name, runner in runs:
        csv_path = os.path.join(out, "monitors.csv" if len(runs) == 1 else f"monitors_{name}.csv")
        try:
            final, record = runner(state, _flow_config(cfg))
        except st.FlowAbort as exc:
            if exc.record is not None:
                exc.record.to_csv(csv_path)
            print(f"error: {name} flow aborted: {exc}", file=sys.stderr)
            return EXIT_ABORT
        record.to_csv(csv_path)
        finals[name] = final
        report["runs"][name] = record.summary()
        print(_summary_lines(name, record))
    if len(finals) == 2:
        diff = fl.terminal_difference(finals["biherm"], finals["generalized"])
        report["terminal_difference"] = diff
        print(f"terminal difference (g, b, I, J): {diff:.3e}")
    last = list(finals.values())[-1]
    tf.save_fields(os.path.join(out, "state.bin"), last.fields())
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(json.dumps(vf._clean(report), sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def _parser():
    p = argparse.ArgumentParser(prog="gk", description="Generalized Kähler structures on flat tori.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("verify", "flow"):
        q = sub.add_parser(name)
        q.add_argument("--scenario", choices=SCENARIOS)
        q.add_argument("--config", help="JSON config file")
        q.add_argument("--grid", type=int, help="points per axis (even, >= 8)")
        q.add_argument("--tol", type=float, help="tolerance override")
        q.add_argument("--seed", type=int)
        q.add_argument("--out", help="output directory")
        if name == "verify":
            q.add_argument("--checks", help="comma-separated check names")
        else:
            q.add_argument("--type", choices=FLOW_TYPES)
            q.add_argument("--dt", type=float)
            q.add_argument("--steps", type=int)
            q.add_argument("--t-end", type=float, dest="t_end")
    return p


def merge_args(args):
    cfg = load_config(args.config) if args.config else {}
    for key in ("scenario", "grid", "tol", "seed", "out"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if getattr(args, "checks", None):
        cfg["checks"] = [c.strip() for c in args.checks.split(",") if c.strip()]
    if args.command == "flow":
        flow = dict(cfg.get("flow") or {})
        for key in ("type", "dt", "steps", "t_end"):
            val = getattr(args, key)
            if val is not None:
                flow[key] = val
        cfg["flow"] = flow
    return validate_config(cfg)


def main(argv=None):
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        cfg = merge_args(args)
    except ConfigError as exc:
        print(f"gk {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "verify":
        return run_verify(cfg)
    return run_flow(cfg)


if __name__ == "__main__":
    sys.exit(main())
