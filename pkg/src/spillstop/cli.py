"""Command-line front door for the stop benchmarks.

Each subcommand loads the frozen defaults of its scenario, overlays an
optional YAML config file, then overlays any flags given on the command
line, and writes its artifacts (traces.csv / sweep.csv / metrics.json)
into the output directory.  Exit status is 0 on success and 1 when the
run itself failed (spill, timeout, no feasible plan).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import yaml

from . import artifacts
from .experiments import (ExperimentConfig, run_heatmap_sweep,
                          run_robustness_sweep, run_trigger_stop,
                          scenario_config)
from .qp import SolverFailure
from .slosh import (ContainerGeometry, GimbalSingularity, UnsupportedShape,
                    estimate_rod_length)

_TUPLE_FIELDS = ("velocity", "rods_mm", "limits_deg", "mismatches")


def _load_config(scenario: str, path: str | None, overrides: dict
                 ) -> ExperimentConfig:
    file_kw = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text())
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config must be a mapping")
        file_kw = dict(raw)
    file_kw.pop("scenario", None)        # the subcommand decides
    for key in _TUPLE_FIELDS:
        if key in file_kw:
            file_kw[key] = tuple(file_kw[key])
    cfg = scenario_config(scenario, **file_kw)
    clean = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **clean) if clean else cfg


def _csv_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML file overriding scenario defaults")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--c2", type=float, help="jerk smoothness weight")
    p.add_argument("--limit-deg", type=float, dest="limit_deg",
                   help="slosh tilt limit [deg]")
    p.add_argument("--timeout", type=float, help="run timeout [s]")
    p.add_argument("--seed", type=int, help="seed recorded in artifacts")


def _write_stop(ns, scenario: str) -> int:
    overrides = dict(c2=ns.c2, limit_deg=ns.limit_deg, timeout=ns.timeout,
                     seed=ns.seed, mode=ns.mode,
                     deterministic=(False if ns.threaded else None))
    if ns.velocity is not None:
        overrides["velocity"] = _csv_floats(ns.velocity)
    if ns.rod_mm is not None:
        overrides["rod_length_mm"] = ns.rod_mm
    cfg = _load_config(scenario, ns.config, overrides)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        result = run_trigger_stop(cfg, with_ramp=ns.with_ramp)
    except (SolverFailure, GimbalSingularity) as exc:
        print(f"{scenario}: run failed: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - t0
    artifacts.write_trace_csv(out / "traces.csv", result.metrics.trace,
                              ramp=result.ramp)
    artifacts.write_metrics_json(out / "metrics.json",
                                 artifacts.stop_metrics_payload(result))
    m = result.metrics
    print(f"{scenario}: stopped in {m.stopping_time:.3f} s, "
          f"max violation {m.max_violation:.2f} deg, "
          f"wall {wall:.1f} s -> {out}")
    if m.timed_out:
        print(f"{scenario}: did not reach standstill before "
              f"{cfg.timeout:.1f} s", file=sys.stderr)
        return 1
    return 0


def _write_sweep(ns, scenario: str, runner) -> int:
    overrides = dict(c2=ns.c2, limit_deg=getattr(ns, "limit_deg", None),
                     timeout=ns.timeout, seed=ns.seed, workers=ns.workers)
    if scenario == "heatmap":
        if ns.rods is not None:
            overrides["rods_mm"] = _csv_floats(ns.rods)
        if ns.limits is not None:
            overrides["limits_deg"] = _csv_floats(ns.limits)
    else:
        if ns.mismatches is not None:
            overrides["mismatches"] = _csv_floats(ns.mismatches)
        if ns.rod_mm is not None:
            overrides["rod_length_mm"] = ns.rod_mm
    cfg = _load_config(scenario, ns.config, overrides)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = runner(cfg)
    wall = time.perf_counter() - t0
    artifacts.write_sweep_csv(out / "sweep.csv", result)
    artifacts.write_metrics_json(out / "metrics.json",
                                 artifacts.sweep_metrics_payload(result))
    n_fail = sum(1 for r in result.rows if r["failed"])
    print(f"{scenario}: {len(result.rows)} cells, {n_fail} failed, "
          f"wall {wall:.1f} s -> {out}")
    return 0 if n_fail < len(result.rows) else 1


def _cmd_rod_length(ns) -> int:
    try:
        geom = ContainerGeometry(radius=ns.radius, height=ns.height,
                                 shape=ns.shape)
        length = estimate_rod_length(geom)
    except (UnsupportedShape, ValueError) as exc:
        print(f"rod-length: {exc}", file=sys.stderr)
        return 1
    print(f"rod_length_m={length:.6g} rod_length_mm={length * 1e3:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spillstop",
        description="Spill-free emergency stopping benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rod-length",
                       help="map container geometry to a pendulum rod")
    p.add_argument("--radius", type=float, required=True,
                   help="container inner radius [m]")
    p.add_argument("--height", type=float, required=True,
                   help="liquid fill height [m]")
    p.add_argument("--shape", default="cylinder")
    p.set_defaults(func=_cmd_rod_length)

    for name, blurb in (("stop", "single constrained emergency stop"),
                        ("baseline", "same stop without slosh constraints")):
        p = sub.add_parser(name, help=blurb)
        _add_common(p)
        p.add_argument("--velocity",
                       help="six comma-separated trigger rates")
        p.add_argument("--rod-mm", type=float, dest="rod_mm",
                       help="pendulum rod [mm] instead of the estimator")
        p.add_argument("--mode", choices=("task_space", "joint_space"))
        p.add_argument("--threaded", action="store_true",
                       help="run planner in its own thread (wall-paced)")
        p.add_argument("--with-ramp", action="store_true", dest="with_ramp",
                       help="prepend the carry ramp to the trace")
        p.set_defaults(func=lambda ns, s=name: _write_stop(ns, s))

    p = sub.add_parser("heatmap",
                       help="stop time and violation over a rod/limit grid")
    _add_common(p)
    p.add_argument("--rods", help="comma-separated rod lengths [mm]")
    p.add_argument("--limits", help="comma-separated tilt limits [deg]")
    p.add_argument("--workers", type=int, help="parallel sweep processes")
    p.set_defaults(func=lambda ns: _write_sweep(ns, "heatmap",
                                                run_heatmap_sweep))

    p = sub.add_parser("robustness",
                       help="violation growth under rod-length mismatch")
    _add_common(p)
    p.add_argument("--mismatches",
                   help="comma-separated relative rod errors")
    p.add_argument("--rod-mm", type=float, dest="rod_mm",
                   help="true rod length [mm]")
    p.add_argument("--workers", type=int, help="parallel sweep processes")
    p.set_defaults(func=lambda ns: _write_sweep(ns, "robustness",
                                                run_robustness_sweep))
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except (ValueError, OSError) as exc:
        print(f"spillstop: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
