"""Per-run and aggregate driving metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..world.boxes import boxes_overlap
from ..world.lanemap import LaneMap

TTC_CAP = 10.0
TTC_STEP = 0.1
SPEED_TOLERANCE = 0.5
BUCKETS = (1.0, 2.0, 5.0)


def _plan_at(states: np.ndarray, dt: float, t: np.ndarray):
    """Linear interpolation of plan poses at relative times ``t``."""
    k = np.arange(len(states)) * dt
    x = np.interp(t, k, states[:, 0])
    y = np.interp(t, k, states[:, 1])
    h = np.interp(t, k, np.unwrap(states[:, 2]))
    return x, y, h


def min_ttc(ego_states: np.ndarray, actor_plans, dt: float = 0.5, ego_length: float = 5.0,
            ego_width: float = 2.0, step: float = TTC_STEP) -> float:
    """Earliest time the ego plan overlaps any actor plan, searched every ``step`` s.

    Returns ``TTC_CAP`` when the footprints never overlap.
    """
    horizon = (len(ego_states) - 1) * dt
    n = int(round(horizon / step)) + 1
    t = np.arange(n) * step
    ex, ey, eh = _plan_at(np.asarray(ego_states), dt, t)
    first = np.inf
    for a in actor_plans:
        tt = t[t <= a.end_time + 1e-9]
        if not len(tt):
            continue
        ax, ay, ah = a.pose_at(tt)
        ov = boxes_overlap((ex[:len(tt)], ey[:len(tt)], eh[:len(tt)], ego_length, ego_width),
                           (ax, ay, ah, a.length, a.width))
        if ov.any():
            first = min(first, float(tt[np.argmax(ov)]))
    return TTC_CAP if not np.isfinite(first) else round(first, 6)


def _segments_cross(p0, p1, q0, q1):
    """Proper intersection of segment batches p (n, 2) against q (m, 2)."""
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
    P0, P1 = p0[:, None], p1[:, None]
    Q0, Q1 = q0[None], q1[None]
    d1 = orient(Q0, Q1, P0)
    d2 = orient(Q0, Q1, P1)
    d3 = orient(P0, P1, Q0)
    d4 = orient(P0, P1, Q1)
    return ((d1 * d2) < 0) & ((d3 * d4) < 0)


def boundary_crossings(xy: np.ndarray, lane_map: LaneMap) -> int:
    """Number of trace segments crossing a solid lane boundary."""
    xy = np.asarray(xy, dtype=float)
    if len(xy) < 2:
        return 0
    hit = np.zeros(len(xy) - 1, dtype=bool)
    for lane in lane_map.lanes.values():
        for pl, solid in ((lane.left_boundary, lane.left_solid), (lane.right_boundary, lane.right_solid)):
            if solid:
                hit |= _segments_cross(xy[:-1], xy[1:], pl.points[:-1], pl.points[1:]).any(axis=1)
    return int(hit.sum())


@dataclass
class RunMetrics:
    scenario: str
    planner: str
    collided: bool = False
    plan_collided: bool = False
    plan_collision_fraction: float = 0.0
    min_ttc: float = TTC_CAP
    progress: float = 0.0
    jerk: float = 0.0
    l2e: float = float("nan")
    p2p: float = 0.0
    violation: bool = False
    boundary_violation: bool = False
    offroad: bool = False
    speeding: bool = False
    goal_reached: bool = False
    has_goal: bool = False
    success: bool = False
    duration: float = 0.0
    replans: int = 0
    planner_errors: int = 0
    termination: str = "duration"

    def to_row(self) -> dict:
        d = dict(self.__dict__)
        for k, v in d.items():
            if isinstance(v, (bool, np.bool_)):
                d[k] = int(v)
            elif isinstance(v, float):
                d[k] = float(f"{v:.6f}") if np.isfinite(v) else v
        return d


def p2p_distance(plans, dt: float = 0.5, shift: int = 1) -> float:
    """Mean distance between consecutive plans at their common absolute times."""
    vals = []
    for a, b in zip(plans[:-1], plans[1:]):
        n = min(len(a) - shift, len(b))
        if n <= 0:
            continue
        d = np.hypot(*(a[shift:shift + n, :2] - b[:n, :2]).T)
        vals.append(d.mean())
    return float(np.mean(vals)) if vals else 0.0


def jerk_rms(accels: np.ndarray, dt: float = 0.5) -> float:
    a = np.asarray(accels, dtype=float)
    if len(a) < 2:
        return 0.0
    j = np.diff(a) / dt
    return float(np.sqrt(np.mean(j * j)))


def trace_l2(a: np.ndarray, b: np.ndarray) -> float:
    """Mean pointwise distance over the common prefix of two traces."""
    n = min(len(a), len(b))
    if n == 0:
        return float("nan")
    return float(np.hypot(*(np.asarray(a)[:n, :2] - np.asarray(b)[:n, :2]).T).mean())


@dataclass
class Summary:
    planner: str
    n: int
    gsr: float
    ecr: float
    pcr: float
    tvr: float
    min_ttc_p10: float
    ttc_lt1: float
    ttc_lt2: float
    ttc_lt5: float
    progress: float
    l2e: float
    p2p: float
    jerk: float
    collisions: int = 0
    goal_successes: int = 0

    def to_row(self) -> dict:
        return {k: (float(f"{v:.6f}") if isinstance(v, float) and np.isfinite(v) else v)
                for k, v in self.__dict__.items()}


def aggregate(runs, planner: Optional[str] = None) -> Summary:
    runs = list(runs)
    n = len(runs)
    if n == 0:
        nan = float("nan")
        return Summary(planner or "", 0, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan)
    ttc = np.array([r.min_ttc for r in runs])
    l2e = np.array([r.l2e for r in runs], dtype=float)
    return Summary(
        planner=planner or runs[0].planner, n=n,
        gsr=float(np.mean([r.success for r in runs])),
        ecr=float(np.mean([r.collided for r in runs])),
        pcr=float(np.mean([r.plan_collided for r in runs])),
        tvr=float(np.mean([r.violation for r in runs])),
        min_ttc_p10=float(np.percentile(ttc, 10)),
        ttc_lt1=float(np.mean(ttc < BUCKETS[0])),
        ttc_lt2=float(np.mean(ttc < BUCKETS[1])),
        ttc_lt5=float(np.mean(ttc < BUCKETS[2])),
        progress=float(np.mean([r.progress for r in runs])),
        l2e=float(np.nanmean(l2e)) if np.isfinite(l2e).any() else float("nan"),
        p2p=float(np.mean([r.p2p for r in runs])),
        jerk=float(np.mean([r.jerk for r in runs])),
        collisions=int(sum(r.collided for r in runs)),
        goal_successes=int(sum(r.success for r in runs)),
    )
