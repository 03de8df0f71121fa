"""Command-line entry point ``stlplan``.

Exit codes: 0 ok, 1 usage error, 2 input error, 3 benchmark threshold missed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, stl
from .geometry import ScenarioError, load_scenario, read_trajectory_csv, save_scenario, write_trajectory_csv
from .losses import LossConfig
from .monitor import (
    HorizonError,
    SmoothParams,
    boolean_satisfaction,
    exact_robustness,
    finite_difference_grad,
    smooth_robustness,
    smooth_robustness_grad,
    smoothing_error_bound,
)
from .nominal import InfeasibleSchedule, greedy_nominal
from .repair import RepairConfig, run_tsp
from .routing import BucketConfig, random_gate_params, routing_trace, routing_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_THRESHOLD = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------- config

_SECTIONS = {
    "loss": LossConfig,
    "repair": RepairConfig,
    "bucket": BucketConfig,
    "generator": bench.GeneratorParams,
}


def load_config(path: str | None) -> dict:
    """Config objects from a JSON file.

    Keys may be grouped by section (``loss``, ``repair``, ``bucket``,
    ``generator``) or given flat, in which case each key goes to every
    section that has a field of that name.
    """
    raw = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise InputError("config must be a JSON object")
    per = {name: {} for name in _SECTIONS}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise InputError(f"config section {key!r} must be an object")
            per[key].update(value)
            continue
        owners = [n for n, cls in _SECTIONS.items() if key in {f.name for f in dataclasses.fields(cls)}]
        if not owners:
            raise InputError(f"unknown config key {key!r}")
        for n in owners:
            per[n][key] = value
    out = {}
    for name, cls in _SECTIONS.items():
        names = {f.name for f in dataclasses.fields(cls)}
        bad = set(per[name]) - names
        if bad:
            raise InputError(f"unknown {name} config keys: {sorted(bad)}")
        vals = {k: tuple(v) if isinstance(v, list) else v for k, v in per[name].items()}
        try:
            out[name] = cls(**vals)
        except (TypeError, ValueError) as exc:
            raise InputError(f"invalid {name} config: {exc}") from exc
    return out


# ---------------------------------------------------------------- helpers


def _read_scenario(path):
    try:
        return load_scenario(Path(path).read_bytes())
    except OSError as exc:
        raise InputError(f"cannot read scenario {path}: {exc}") from exc


def _read_traj(path):
    try:
        return read_trajectory_csv(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read trajectory {path}: {exc}") from exc


def _emit(obj, out=None):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _check_len(traj, scenario):
    if traj.horizon != scenario.horizon:
        raise InputError(f"trajectory has {len(traj)} poses, scenario horizon needs {scenario.horizon + 1}")


# ---------------------------------------------------------------- commands


def cmd_parse(args, cfg):
    f = stl.parse(args.formula)
    _emit({"formula": stl.render(f), "ast": stl.to_dict(f), "nodes": stl.node_count(f)})


def cmd_validate(args, cfg):
    f = stl.parse(args.formula)
    report = stl.validate_fragment(f, args.horizon)
    out = {"formula": stl.render(f), "horizon": args.horizon, "in_fragment": report.is_member,
           "violations": list(report.violations)}
    if report.is_member:
        out["tokens"] = [dataclasses.asdict(t) for t in stl.structural_tokens(f, args.horizon)]
    _emit(out)
    return EXIT_OK if report.is_member else EXIT_INPUT


def cmd_monitor(args, cfg):
    scenario = _read_scenario(args.scenario)
    traj = _read_traj(args.traj)
    _check_len(traj, scenario)
    f = scenario.formula
    out = {
        "robustness": exact_robustness(f, traj, scenario),
        "satisfied": boolean_satisfaction(f, traj, scenario),
    }
    if args.smooth is not None:
        sp = SmoothParams(args.smooth)
        out["smooth_robustness"] = smooth_robustness(f, traj, scenario, 0, sp)
        out["smoothing_bound"] = smoothing_error_bound(f, sp.k)
    _emit(out)


def cmd_gradcheck(args, cfg):
    scenario = _read_scenario(args.scenario)
    traj = _read_traj(args.traj)
    _check_len(traj, scenario)
    sp = SmoothParams(args.k)
    g = smooth_robustness_grad(scenario.formula, traj, scenario, 0, sp)
    fd = finite_difference_grad(scenario.formula, traj, scenario, 0, sp, args.h)
    err = np.abs(g - fd)
    small = np.abs(fd) < 1e-8
    rel = np.where(small, err, err / np.maximum(np.abs(fd), 1e-300))
    worst = float(rel.max())
    _emit({"k": sp.k, "h": args.h, "max_error": worst, "max_abs_error": float(err.max()),
           "within_tolerance": worst <= args.tol})
    return EXIT_OK if worst <= args.tol else EXIT_THRESHOLD


def cmd_nominal(args, cfg):
    scenario = _read_scenario(args.scenario)
    r = cfg["repair"]
    traj = greedy_nominal(scenario, r.d_max, r.dtheta_max, cfg["generator"].cruise)
    Path(args.output).write_text(write_trajectory_csv(traj), encoding="utf-8")


def cmd_repair(args, cfg):
    scenario = _read_scenario(args.scenario)
    traj = _read_traj(args.traj)
    _check_len(traj, scenario)
    rcfg = dataclasses.replace(cfg["repair"], seed=args.seed)
    result = run_tsp(traj, scenario, scenario.formula, rcfg)
    Path(args.output).write_text(write_trajectory_csv(result.repaired), encoding="utf-8")
    _emit(result.report(), args.report)


def cmd_gen(args, cfg):
    params = bench.GeneratorParams.ood() if args.ood else cfg["generator"]
    try:
        scenario = bench.generate_scenario(args.seed, args.template, params)
    except bench.GenerationError as exc:
        raise InputError(str(exc)) from exc
    data = save_scenario(scenario)
    if args.output:
        Path(args.output).write_bytes(data)
    else:
        sys.stdout.write(data.decode("utf-8"))


def cmd_bench(args, cfg):
    templates = [t.strip() for t in args.templates.split(",") if t.strip()]
    unknown = [t for t in templates if t not in bench.TEMPLATES]
    if unknown:
        raise InputError(f"unknown templates {unknown}; choose from {sorted(bench.TEMPLATES)}")
    params = bench.GeneratorParams.ood() if args.ood else cfg["generator"]
    artifacts = {} if (args.artifacts or args.plots) else None
    report = bench.run_suite(templates, args.n, args.seed, cfg["repair"], params, artifacts)
    Path(args.output).write_text(bench.write_report(report), encoding="utf-8")
    if artifacts is not None:
        out_dir = Path(args.artifacts) if args.artifacts else Path(args.output).with_suffix("") / "artifacts"
        timing = artifacts.pop("__timing__", {})
        bench.write_artifacts(artifacts, out_dir, args.plots)
        if args.timing:
            _emit({k: timing[k] for k in sorted(timing)}, args.timing)
    agg = report["aggregate"]["overall"]
    print(json.dumps({k: report["aggregate"][k] for k in report["aggregate"]}, sort_keys=True), file=sys.stderr)
    if args.min_uplift is not None:
        if agg["uplift_pp"] is None or agg["uplift_pp"] < args.min_uplift:
            return EXIT_THRESHOLD
    return EXIT_OK


def cmd_route(args, cfg):
    f = stl.parse(args.formula)
    bcfg = dataclasses.replace(cfg["bucket"], K=args.K) if args.K is not None else cfg["bucket"]
    rng = np.random.default_rng(args.seed)
    gp = random_gate_params(rng, d=args.dim, cfg=bcfg)
    hidden = rng.standard_normal((args.horizon, args.dim))
    report = stl.validate_fragment(f, args.horizon)
    if not report.is_member:
        raise InputError("; ".join(report.violations))
    sys.stdout.write(routing_trace_csv(routing_trace(f, args.horizon, bcfg, gp, hidden)))


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stlplan", description="Bounded-horizon STL parsing, monitoring, routing and repair.")
    p.add_argument("--config", help="JSON file with loss/repair/bucket/generator fields")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("parse", help="parse a formula and print its AST")
    s.add_argument("formula")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("validate", help="check fragment membership and print structural tokens")
    s.add_argument("formula")
    s.add_argument("--horizon", type=int, required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("monitor", help="robustness of a trajectory against the scenario formula")
    s.add_argument("--scenario", required=True)
    s.add_argument("--traj", required=True)
    s.add_argument("--smooth", type=float, metavar="K")
    s.set_defaults(func=cmd_monitor)

    s = sub.add_parser("gradcheck", help="compare the analytic smooth gradient to central differences")
    s.add_argument("--scenario", required=True)
    s.add_argument("--traj", required=True)
    s.add_argument("-k", type=float, default=300.0)
    s.add_argument("--h", type=float, default=1e-4)
    s.add_argument("--tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("nominal", help="greedy obstacle-blind nominal trajectory")
    s.add_argument("--scenario", required=True)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_nominal)

    s = sub.add_parser("repair", help="triggered segment repair of a trajectory")
    s.add_argument("--scenario", required=True)
    s.add_argument("--traj", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_repair)

    s = sub.add_parser("gen", help="generate a seeded scenario document")
    s.add_argument("--template", required=True, choices=sorted(bench.TEMPLATES))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--ood", action="store_true", help="shifted placement distribution")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("bench", help="nominal vs repaired success rates over a seeded suite")
    s.add_argument("--templates", default=",".join(bench.TEMPLATES))
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--ood", action="store_true")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--plots", help="directory for SVG overlays")
    s.add_argument("--artifacts", help="directory for scenario/trajectory/report files")
    s.add_argument("--timing", help="optional JSON file of per-scenario wall times")
    s.add_argument("--min-uplift", type=float, help="exit 3 if overall uplift (pp) falls below this")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("route", help="routing-trace CSV for a formula under random gate parameters")
    s.add_argument("--formula", required=True)
    s.add_argument("--horizon", type=int, required=True)
    s.add_argument("-K", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dim", type=int, default=16)
    s.set_defaults(func=cmd_route)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if getattr(args, "n", 0) < 0:
            raise InputError("--n must be non-negative")
        rc = args.func(args, cfg)
    except (InputError, stl.ParseError, stl.IntervalError, ScenarioError, HorizonError, InfeasibleSchedule) as exc:
        print(f"stlplan: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"stlplan: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
