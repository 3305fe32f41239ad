"""Static figures for a run directory: per-scenario fan/trace plots and a metric summary."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sim import report  # noqa: E402

PNG_META = {"Software": None}
SUMMARY_METRICS = ("gsr", "ecr", "pcr", "tvr")


def _grid(path: Path):
    rows = report.read_rows(path)
    if not rows:
        return None
    t = np.array([float(r["t"]) for r in rows])
    sel = t == t.min()
    x = np.array([float(r["x"]) for r in rows])[sel]
    y = np.array([float(r["y"]) for r in rows])[sel]
    p = np.array([float(r["p"]) for r in rows])[sel]
    xs, ys = np.unique(x), np.unique(y)
    img = np.zeros((len(ys), len(xs)))
    img[np.searchsorted(ys, y), np.searchsorted(xs, x)] = p
    return xs, ys, img


def scenario_figure(trace_dir: Path, name: str, out_path: Path):
    fig, ax = plt.subplots(figsize=(10, 3.2), dpi=100)
    g = trace_dir / f"{name}_grid.csv"
    if g.is_file():
        grid = _grid(g)
        if grid is not None:
            xs, ys, img = grid
            d = (xs[1] - xs[0]) / 2 if len(xs) > 1 else 0.5
            ax.imshow(img, origin="lower", cmap="Greys", vmin=0, vmax=1, aspect="auto",
                      extent=(xs[0] - d, xs[-1] + d, ys[0] - d, ys[-1] + d), alpha=0.6)
    f = trace_dir / f"{name}_fan.csv"
    if f.is_file():
        rows = report.read_rows(f)
        cid = np.array([int(r["candidate"]) for r in rows])
        cost = np.array([float(r["cost"]) for r in rows])
        xy = np.array([[float(r["x"]), float(r["y"])] for r in rows])
        ids = np.unique(cid)
        c = np.array([cost[cid == i][0] for i in ids])
        lo, hi = np.percentile(c, [0, 90]) if len(c) else (0.0, 1.0)
        norm = plt.Normalize(lo, hi if hi > lo else lo + 1.0)
        cmap = plt.get_cmap("viridis")
        for i, ci in sorted(zip(ids, c), key=lambda p: -p[1]):
            pts = xy[cid == i]
            ax.plot(pts[:, 0], pts[:, 1], color=cmap(norm(ci)), lw=0.6)
    a = trace_dir / f"{name}_actors.csv"
    if a.is_file():
        rows = report.read_rows(a)
        ids = sorted({r["actor"] for r in rows})
        for i in ids:
            pts = np.array([[float(r["x"]), float(r["y"])] for r in rows if r["actor"] == i])
            ax.plot(pts[:, 0], pts[:, 1], color="tab:red", lw=1.0)
            ax.plot(pts[:1, 0], pts[:1, 1], "s", color="tab:red", ms=4)
    tr = trace_dir / f"{name}.csv"
    if tr.is_file():
        t = report.read_trace(tr)
        ax.plot(t[:, 1], t[:, 2], color="tab:blue", lw=1.6, label="ego")
    ex = trace_dir / f"{name}_expert.csv"
    if ex.is_file():
        t = report.read_trace(ex)
        ax.plot(t[:, 1], t[:, 2], "--", color="tab:orange", lw=1.0, label="expert")
    ax.set_title(name)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, metadata=PNG_META)
    plt.close(fig)


def summary_figure(run_dir: Path, out_path: Path):
    rows = report.read_rows(run_dir / "summary.csv")
    fig, ax = plt.subplots(figsize=(5, 3), dpi=100)
    labels = list(SUMMARY_METRICS)
    for j, r in enumerate(rows):
        vals = [float(r[m]) for m in labels]
        ax.bar(np.arange(len(labels)) + 0.8 * j / max(len(rows), 1), vals,
               width=0.8 / max(len(rows), 1), label=r["planner"])
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels([m.upper() for m in labels])
    ax.set_ylim(0, 1)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, metadata=PNG_META)
    plt.close(fig)


def render_run(run_dir) -> list:
    """One image per scenario row in metrics.csv plus ``summary.png``."""
    run_dir = Path(run_dir)
    figs = run_dir / "figures"
    figs.mkdir(exist_ok=True)
    out = []
    for r in report.read_rows(run_dir / "metrics.csv"):
        p = figs / f"{r['scenario']}.png"
        scenario_figure(run_dir / "traces", r["scenario"], p)
        out.append(p)
    p = figs / "summary.png"
    summary_figure(run_dir, p)
    out.append(p)
    return out
