"""Trajectory cost features and the weighted total J = sum_i w_i f_i.

Features are computed for a whole candidate batch at once. Agent-agnostic
terms sum over the future states t = 1..T; occupancy terms weight the
per-step maxima by (T - t) for t = 0..T-1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .query_engine import IN, OccupancyTable
from .world.lanemap import LaneMap

FEATURES = ("acc_lat", "acc_long", "jerk", "curv", "corr", "bound", "speed", "prog",
            "route", "col", "buf_long", "buf_lat")
F = {name: i for i, name in enumerate(FEATURES)}
AGENT_AWARE = ("col", "buf_long", "buf_lat")


class CoverageError(ValueError):
    pass


@dataclass
class Weights:
    w_acc_lat: float = 0.5
    w_acc_long: float = 0.2
    w_jerk: float = 0.1
    w_curv: float = 100.0
    w_corr: float = 1.0
    w_bound: float = 20.0
    w_speed: float = 5.0
    w_prog: float = 1.0
    w_route: float = 5.0
    w_col: float = 200.0
    w_buf_long: float = 10.0
    w_buf_lat: float = 5.0

    def __post_init__(self):
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise ValueError("weights must be finite")
        if np.any(arr < 0):
            raise ValueError("weights must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f"w_{n}") for n in FEATURES], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Weights":
        a = np.asarray(a, dtype=float)
        return cls(**{f"w_{n}": float(v) for n, v in zip(FEATURES, a)})

    @classmethod
    def zeros(cls) -> "Weights":
        return cls.from_array(np.zeros(len(FEATURES)))

    def scaled(self, c: float) -> "Weights":
        return Weights.from_array(self.as_array() * c)

    def without(self, *names) -> "Weights":
        a = self.as_array()
        for n in names:
            a[F[n]] = 0.0
        return Weights.from_array(a)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown weight keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Weights":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class CostConfig:
    dt: float = 0.5
    # scale the route term by the route lane's speed limit relative to the map maximum
    route_speed_scale: bool = False


@dataclass
class CostBreakdown:
    features: np.ndarray
    col_terms: np.ndarray
    weights: np.ndarray
    total: float

    def __getitem__(self, name):
        return float(self.features[F[name]])

    def weighted(self) -> dict:
        return {n: float(self.weights[i] * self.features[i]) for i, n in enumerate(FEATURES)}

    def to_dict(self):
        out = {n: float(v) for n, v in zip(FEATURES, self.features)}
        out["total"] = self.total
        return out


@dataclass
class FeatureBatch:
    """Unweighted features (n, 12) and per-step collision terms (n, T)."""
    features: np.ndarray
    col_terms: np.ndarray
    buf_long_terms: Optional[np.ndarray] = None
    buf_lat_terms: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    def totals(self, w) -> np.ndarray:
        w = w.as_array() if isinstance(w, Weights) else np.asarray(w, dtype=float)
        return self.features @ w

    def breakdown(self, i: int, w) -> CostBreakdown:
        w = w.as_array() if isinstance(w, Weights) else np.asarray(w, dtype=float)
        return CostBreakdown(self.features[i].copy(), self.col_terms[i].copy(), w.copy(),
                             float(self.features[i] @ w))


def _states(trajs) -> np.ndarray:
    if isinstance(trajs, np.ndarray):
        return trajs if trajs.ndim == 3 else trajs[None]
    if hasattr(trajs, "states"):
        return trajs.states[None]
    return np.stack([t.states for t in trajs])


def _pick(arr, idx):
    """arr (n_lanes, P) picked at lane idx (P,)."""
    return np.take_along_axis(arr, idx[None, :], axis=0)[0]


def jerk_series(accel: np.ndarray, dt: float) -> np.ndarray:
    """Central differences inside, one-sided at the ends; shape preserved."""
    j = np.empty_like(accel)
    j[..., 1:-1] = (accel[..., 2:] - accel[..., :-2]) / (2 * dt)
    j[..., 0] = (accel[..., 1] - accel[..., 0]) / dt
    j[..., -1] = (accel[..., -1] - accel[..., -2]) / dt
    return j


def agnostic_features(trajs, lane_map: LaneMap, base_lanes=None,
                      cfg: CostConfig = CostConfig()) -> np.ndarray:
    """Columns acc_lat .. route of the feature matrix; occupancy columns are zero."""
    st = _states(trajs)
    n, T1, _ = st.shape
    fut = st[:, 1:]
    pts = fut[..., :2].reshape(-1, 2)
    q = lane_map.query(pts)
    P = len(pts)
    near = q.nearest
    cols = np.arange(P)
    out = np.zeros((n, len(FEATURES)))

    # comfort: (v_dot, v^2 kappa) rotated to world and split against the nearest centerline
    th, v, a, k = fut[..., 2], fut[..., 3], fut[..., 4], fut[..., 5]
    a_lat_body = v * v * k
    ax = a * np.cos(th) - a_lat_body * np.sin(th)
    ay = a * np.sin(th) + a_lat_body * np.cos(th)
    seg = q.seg[near, cols]
    tang = np.zeros((P, 2))
    for li in np.unique(near):
        sel = near == li
        tang[sel] = lane_map.lanes[lane_map.ids[li]].centerline.tangents[seg[sel]]
    tang = tang.reshape(n, T1 - 1, 2)
    along = ax * tang[..., 0] + ay * tang[..., 1]
    lat = -ax * tang[..., 1] + ay * tang[..., 0]
    jerk = jerk_series(st[..., 4], cfg.dt)[:, 1:]
    out[:, F["acc_lat"]] = (lat ** 2).sum(axis=1)
    out[:, F["acc_long"]] = (along ** 2).sum(axis=1)
    out[:, F["jerk"]] = (jerk ** 2).sum(axis=1)
    out[:, F["curv"]] = (k ** 2).sum(axis=1)

    d_near = _pick(q.d_center, near).reshape(n, -1)
    out[:, F["corr"]] = np.abs(d_near).sum(axis=1)

    # solid-boundary violations over {base lane, containing-or-nearest lane}
    solid_l = np.array([lane_map.lanes[i].left_solid for i in lane_map.ids])
    solid_r = np.array([lane_map.lanes[i].right_solid for i in lane_map.ids])

    def bound_terms(lane_idx):
        bl = np.where(solid_l[lane_idx], np.maximum(_pick(q.d_left, lane_idx), 0.0), 0.0)
        br = np.where(solid_r[lane_idx], np.maximum(_pick(q.d_right, lane_idx), 0.0), 0.0)
        return bl + br

    bnd = bound_terms(near)
    if base_lanes is not None:
        base_idx = np.repeat(np.array([lane_map.index[b] for b in base_lanes]), T1 - 1)
        extra = bound_terms(base_idx)
        bnd = bnd + np.where(base_idx != near, extra, 0.0)
    out[:, F["bound"]] = bnd.reshape(n, -1).sum(axis=1)

    vlim = lane_map.speed_limits[near].reshape(n, -1)
    out[:, F["speed"]] = (np.maximum(v - vlim, 0.0) ** 2).sum(axis=1)

    step = np.diff(st[..., :2], axis=1)
    out[:, F["prog"]] = -np.hypot(step[..., 0], step[..., 1]).sum(axis=1)

    route = lane_map.route or [lane_map.ids[0]]
    r_idx = np.array([lane_map.index[r] for r in route])
    d_route = np.abs(q.d_center[r_idx])
    best = np.argmin(d_route, axis=0)
    dr = d_route[best, cols]
    if cfg.route_speed_scale:
        dr = dr * lane_map.speed_limits[r_idx[best]] / lane_map.speed_limits.max()
    out[:, F["route"]] = dr.reshape(n, -1).sum(axis=1)
    return out


def occupancy_terms(table: OccupancyTable, n_traj: int):
    """Per-step weighted collision and buffer terms, each (n, T)."""
    if table is None or not table.covers(n_traj):
        raise CoverageError("query coverage gap")
    m = table.region_max(IN)[:n_traj]
    T = m.shape[1]
    decay = (T - np.arange(T)).astype(float)
    col = decay * m
    bl = decay * table.buffer_max("longitudinal")[:n_traj]
    bt = decay * table.buffer_max("lateral")[:n_traj]
    return col, bl, bt


def compute_features(trajs, lane_map: LaneMap, table: OccupancyTable, base_lanes=None,
                     cfg: CostConfig = CostConfig()) -> FeatureBatch:
    st = _states(trajs)
    if base_lanes is None and not isinstance(trajs, np.ndarray) and not hasattr(trajs, "states"):
        base_lanes = [t.base_lane for t in trajs]
    feats = agnostic_features(st, lane_map, base_lanes, cfg)
    col, bl, bt = occupancy_terms(table, len(st))
    feats[:, F["col"]] = col.sum(axis=1)
    feats[:, F["buf_long"]] = bl.sum(axis=1)
    feats[:, F["buf_lat"]] = bt.sum(axis=1)
    return FeatureBatch(feats, col, bl, bt)


def total_cost(traj, table: OccupancyTable, lane_map: LaneMap, w: Weights,
               cfg: CostConfig = CostConfig()) -> CostBreakdown:
    fb = compute_features([traj] if hasattr(traj, "states") else traj, lane_map, table, cfg=cfg)
    return fb.breakdown(0, w)


# single-trajectory conveniences mirroring the individual cost terms

def comfort_cost(traj, lane_map: LaneMap, w: Weights = None) -> float:
    w = w or Weights()
    f = agnostic_features(traj, lane_map)[0]
    return float(w.w_acc_lat * f[F["acc_lat"]] + w.w_acc_long * f[F["acc_long"]]
                 + w.w_jerk * f[F["jerk"]] + w.w_curv * f[F["curv"]])


def corridor_cost(traj, lane_map: LaneMap) -> float:
    return float(agnostic_features(traj, lane_map)[0, F["corr"]])


def boundary_cost(traj, lane_map: LaneMap) -> float:
    base = [traj.base_lane] if hasattr(traj, "base_lane") else None
    return float(agnostic_features(traj, lane_map, base)[0, F["bound"]])


def speed_limit_cost(traj, lane_map: LaneMap) -> float:
    return float(agnostic_features(traj, lane_map)[0, F["speed"]])


def progress_cost(traj) -> float:
    st = _states(traj)[0]
    step = np.diff(st[:, :2], axis=0)
    return float(-np.hypot(step[:, 0], step[:, 1]).sum())


def route_cost(traj, lane_map: LaneMap) -> float:
    return float(agnostic_features(traj, lane_map)[0, F["route"]])


def collision_cost(table: OccupancyTable, i: int = 0):
    col, _, _ = occupancy_terms(table, i + 1)
    return float(col[i].sum()), col[i].copy()


def buffer_cost(table: OccupancyTable, side: str, i: int = 0) -> float:
    _, bl, bt = occupancy_terms(table, i + 1)
    return float((bl if side == "longitudinal" else bt)[i].sum())
