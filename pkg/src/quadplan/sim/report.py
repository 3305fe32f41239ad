"""CSV artifacts for runs: per-scenario metrics, summaries, traces and plan fans."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .metrics import RunMetrics, Summary

TRACE_COLUMNS = ("t", "x", "y", "heading", "speed", "accel", "curvature")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}" if np.isfinite(v) else str(float(v))
    return str(v)


def write_rows(path, rows: list, columns=None):
    path = Path(path)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def read_rows(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_metrics(path, metrics: list):
    write_rows(path, [m.to_row() for m in metrics], list(RunMetrics("", "").to_row().keys()))


def write_summary(path, summaries: list):
    write_rows(path, [s.to_row() for s in summaries], list(Summary.__dataclass_fields__))


def write_trace(path, times, trace):
    rows = [dict(zip(TRACE_COLUMNS, [t, *s])) for t, s in zip(times, trace)]
    write_rows(path, rows, TRACE_COLUMNS)


def read_trace(path) -> np.ndarray:
    rows = read_rows(path)
    return np.array([[float(r[c]) for c in TRACE_COLUMNS] for r in rows]).reshape(-1, len(TRACE_COLUMNS))


def write_fan(path, candidates, totals):
    """Candidate waypoints with their total cost, one row per waypoint."""
    rows = []
    for i, (c, tot) in enumerate(zip(candidates, totals)):
        for k, s in enumerate(c.states):
            rows.append({"candidate": i, "cost": float(tot), "k": k, "x": s[0], "y": s[1]})
    write_rows(path, rows, ("candidate", "cost", "k", "x", "y"))


def write_actors(path, tracks):
    rows = []
    for a in tracks:
        for t, c, h in zip(a.times, a.centers, a.headings):
            rows.append({"actor": a.actor_id, "t": t, "x": c[0], "y": c[1], "heading": h,
                         "length": a.length, "width": a.width})
    write_rows(path, rows, ("actor", "t", "x", "y", "heading", "length", "width"))
