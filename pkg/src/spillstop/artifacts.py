"""On-disk artifacts: run traces, sweep tables, metrics summaries.

The CSV schemas here are the package's external interface; column names
and order are stable.  Writers format every float with a fixed %.10g so
a deterministic run produces byte-identical files.  Readers validate the
header before touching any data and raise ArtifactError naming the first
offending column.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ._kernels import BACKEND
from .experiments import SWEEP_COLUMNS, RampSegment, StopResult, SweepResult
from .sim import PLANT_DT, RunTrace

TRACE_COLUMNS = ("t", "vx", "vy", "vz", "wx", "wy", "wz",
                 "theta_p", "phi_p", "theta_c", "phi_c", "psi_c",
                 "ax", "ay", "az", "alpha_x", "alpha_y", "alpha_z",
                 "violation")


class ArtifactError(ValueError):
    """An artifact file does not match its documented schema."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if math.isnan(f):
        return "nan"
    return format(f, ".10g")


def write_trace_csv(path, trace: RunTrace, ramp: RampSegment | None = None,
                    dt: float = PLANT_DT) -> None:
    """Write one run's per-step trace.

    If a pre-trigger ramp is given its rows come first (level liquid, no
    violations) and the run's times are shifted past it, so the t column
    stays a single monotone clock.
    """
    offset = ramp.duration if ramp is not None else 0.0
    buf = io.StringIO()
    buf.write(",".join(TRACE_COLUMNS) + "\n")
    if ramp is not None:
        zeros3 = (0.0, 0.0, 0.0)
        for i in range(len(ramp.t)):
            row = ((ramp.t[i],) + tuple(ramp.velocity[i])
                   + (0.0, 0.0) + zeros3 + tuple(ramp.control[i]) + (0,))
            buf.write(",".join(_fmt(v) for v in row) + "\n")
    for i in range(len(trace)):
        row = ((trace.t[i] + offset,) + tuple(trace.velocity[i])
               + tuple(trace.pendulum[i]) + tuple(trace.container[i])
               + tuple(trace.control[i]) + (bool(trace.violation[i]),))
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_trace_csv(path) -> dict:
    """Read a trace written by write_trace_csv into named float arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ArtifactError(f"{path}: empty file, expected trace header")
        if tuple(header) != TRACE_COLUMNS:
            bad = _first_mismatch(header, TRACE_COLUMNS)
            raise ArtifactError(f"{path}: bad trace header, {bad}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))
    out = {name: data[:, j] for j, name in enumerate(TRACE_COLUMNS)}
    t = out["t"]
    if len(t) and np.any(np.diff(t) <= 0.0):
        raise ArtifactError(f"{path}: t column must be strictly increasing")
    return out


def _first_mismatch(got, want) -> str:
    for j, name in enumerate(want):
        if j >= len(got):
            return f"missing column {name!r}"
        if got[j] != name:
            return f"column {j} is {got[j]!r}, expected {name!r}"
    return f"unexpected extra column {got[len(want)]!r}"


def write_sweep_csv(path, result: SweepResult) -> None:
    """Write sweep rows, one line per grid cell, sorted by grid index."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in result.rows:
        writer.writerow([row[c] if c == "error" else _fmt(row[c])
                         for c in SWEEP_COLUMNS])
    Path(path).write_text(buf.getvalue())


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ArtifactError(f"{path}: empty file, expected sweep header")
        if tuple(reader.fieldnames) != SWEEP_COLUMNS:
            bad = _first_mismatch(reader.fieldnames, SWEEP_COLUMNS)
            raise ArtifactError(f"{path}: bad sweep header, {bad}")
        rows = []
        for rec in reader:
            row = dict(rec)
            for key in ("rod_mm", "limit_deg", "mismatch", "stopping_time",
                        "max_violation", "time_in_violation",
                        "time_in_violation_gt_0p2deg"):
                row[key] = float(row[key])
            for key in ("timed_out", "failed"):
                row[key] = row[key] == "1"
            row["solver_failures"] = int(row["solver_failures"])
            rows.append(row)
    return rows


def stop_metrics_payload(result: StopResult) -> dict:
    cfg = result.config
    m = result.metrics
    return {
        "scenario": cfg.scenario,
        "stopping_time_s": m.stopping_time,
        "max_violation_deg": m.max_violation,
        "time_in_violation_s": m.time_in_violation,
        "time_in_violation_gt_0p2deg_s": m.time_in_violation_gt_0p2deg,
        "timed_out": m.timed_out,
        "solver_failures": m.solver_failures,
        "trigger_time_s": result.trigger_time,
        "believed_rod_mm": result.believed_rod * 1000.0,
        "true_rod_mm": result.true_rod * 1000.0,
        "limit_deg": cfg.limit_deg,
        "margin": cfg.margin,
        "c2": cfg.c2,
        "mode": cfg.mode,
        "deterministic": cfg.deterministic,
        "seed": cfg.seed,
        "backend": BACKEND,
    }


def sweep_metrics_payload(result: SweepResult) -> dict:
    rows = [r for r in result.rows if not r["failed"]]
    payload = {
        "scenario": result.scenario,
        "n_cells": len(result.rows),
        "n_failed": sum(1 for r in result.rows if r["failed"]),
        "limit_deg": result.config.limit_deg,
        "margin": result.config.margin,
        "c2": result.config.c2,
        "seed": result.config.seed,
        "backend": BACKEND,
    }
    if rows:
        worst = max(rows, key=lambda r: r["max_violation"])
        slowest = max(rows, key=lambda r: r["stopping_time"])
        payload["max_violation_deg"] = worst["max_violation"]
        payload["max_violation_cell"] = [worst["rod_mm"], worst["limit_deg"],
                                         worst["mismatch"]]
        payload["max_stopping_time_s"] = slowest["stopping_time"]
        payload["total_solver_failures"] = sum(r["solver_failures"]
                                               for r in rows)
    return payload


def write_metrics_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True)
                          + "\n")


def read_metrics_json(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict) or "scenario" not in payload:
        raise ArtifactError(f"{path}: metrics payload must be an object "
                            "with a 'scenario' key")
    return payload
