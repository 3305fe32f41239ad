"""Points of interest around candidate trajectories, quantisation and batched evaluation.

Every (trajectory, step) gets a motion-blurred ego box and five regular point
grids: inside the box and the box-sized neighbours ahead, behind, left and
right. Raw points are snapped to a spatial grid, deduplicated, evaluated once,
and scattered back. Raw points are laid out contiguously per
(trajectory, step, region) so block reductions are a single ``reduceat``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .query_kernels import block_reductions, fused_keys
from .world.boxes import box_corners

REGIONS = ("IN", "FWD", "BWD", "LEFT", "RIGHT")
IN, FWD, BWD, LEFT, RIGHT = range(5)
EGO_LENGTH = 5.0
EGO_WIDTH = 2.0
_GRID_EPS = 1e-9


@dataclass
class MotionBlurBox:
    cx: float
    cy: float
    heading: float
    length: float
    width: float
    traj_index: int = 0
    step: int = 0

    def as_tuple(self):
        return (self.cx, self.cy, self.heading, self.length, self.width)


@dataclass
class BlurBoxes:
    """Arrays of shape (n_traj, T)."""
    cx: np.ndarray
    cy: np.ndarray
    heading: np.ndarray
    length: np.ndarray
    width: np.ndarray

    def box(self, i: int, t: int) -> MotionBlurBox:
        return MotionBlurBox(float(self.cx[i, t]), float(self.cy[i, t]), float(self.heading[i, t]),
                             float(self.length[i, t]), float(self.width[i, t]), i, t)

    def as_tuple(self):
        return (self.cx, self.cy, self.heading, self.length, self.width)


def _as_states(trajs) -> np.ndarray:
    if isinstance(trajs, np.ndarray):
        return trajs if trajs.ndim == 3 else trajs[None]
    if hasattr(trajs, "states"):
        return trajs.states[None]
    return np.stack([t.states for t in trajs])


def motion_blur_boxes(trajs, ego_length: float = EGO_LENGTH,
                      ego_width: float = EGO_WIDTH) -> BlurBoxes:
    """Boxes covering the ego footprint at steps t and t+1 for every t < T.

    Heading follows the displacement (pose heading when stationary); extents
    are the tightest box in that frame holding all eight footprint corners.
    """
    st = _as_states(trajs)
    p0, p1 = st[:, :-1, :2], st[:, 1:, :2]
    disp = p1 - p0
    dist = np.hypot(disp[..., 0], disp[..., 1])
    heading = np.where(dist > 1e-6, np.arctan2(disp[..., 1], disp[..., 0]), st[:, :-1, 2])
    mid = 0.5 * (p0 + p1)
    corners = np.concatenate([
        box_corners(p0[..., 0], p0[..., 1], st[:, :-1, 2], ego_length, ego_width),
        box_corners(p1[..., 0], p1[..., 1], st[:, 1:, 2], ego_length, ego_width)], axis=-2)
    rel = corners - mid[..., None, :]
    c, s = np.cos(heading)[..., None], np.sin(heading)[..., None]
    u = c * rel[..., 0] + s * rel[..., 1]
    v = -s * rel[..., 0] + c * rel[..., 1]
    length = 2.0 * np.abs(u).max(axis=-1)
    width = 2.0 * np.abs(v).max(axis=-1)
    return BlurBoxes(mid[..., 0], mid[..., 1], heading, length, width)


def motion_blur_box(traj, t: int, ego_length: float = EGO_LENGTH,
                    ego_width: float = EGO_WIDTH) -> MotionBlurBox:
    st = _as_states(traj)
    if not 0 <= t < st.shape[1] - 1:
        raise ValueError("step must be below the horizon")
    boxes = motion_blur_boxes(st[:, t:t + 2], ego_length, ego_width)
    b = boxes.box(0, 0)
    b.step = t
    return b


def grid_counts(length, width, res: float):
    nx = np.floor(np.asarray(length) / res + _GRID_EPS).astype(np.int64) + 1
    ny = np.floor(np.asarray(width) / res + _GRID_EPS).astype(np.int64) + 1
    return nx, ny


@dataclass
class PointSet:
    """Raw points (x, y, t) with per-block bookkeeping.

    ``block_start``/``block_count`` have shape (n_traj, T, 5); ``dist`` is the
    distance of each raw point to its box centre.
    """
    points: np.ndarray
    dist: np.ndarray
    block_start: np.ndarray
    block_count: np.ndarray
    boxes: BlurBoxes
    grid_res: float
    dt: float

    @property
    def n_raw(self) -> int:
        return len(self.points)

    @property
    def n_traj(self) -> int:
        return self.block_start.shape[0]

    @property
    def steps(self) -> int:
        return self.block_start.shape[1]

    def region(self, i: int, t: int, r: int) -> np.ndarray:
        a = self.block_start[i, t, r]
        return self.points[a:a + self.block_count[i, t, r]]


def points_of_interest(trajs, grid_res: float = 0.5, dt: float = 0.5,
                       ego_length: float = EGO_LENGTH, ego_width: float = EGO_WIDTH) -> PointSet:
    """Region grids for every (trajectory, step); query time of step k is k*dt."""
    if grid_res <= 0:
        raise ValueError("grid_res must be positive")
    boxes = motion_blur_boxes(trajs, ego_length, ego_width)
    n_traj, steps = boxes.cx.shape
    nx, ny = grid_counts(boxes.length, boxes.width, grid_res)
    per_region = (nx * ny).ravel()
    n_box = per_region.size
    box_start = np.concatenate([[0], np.cumsum(5 * per_region)[:-1]])
    total = int(5 * per_region.sum())

    # flat enumeration: box -> region -> local point
    blk_len = np.repeat(per_region, 5)
    blk_start = np.repeat(box_start, 5) + np.tile(np.arange(5), n_box) * blk_len
    blk_id = np.repeat(np.arange(5 * n_box), blk_len)
    local = np.arange(total) - blk_start[blk_id]
    b = blk_id // 5
    region = blk_id % 5
    nxb, nyb = nx.ravel()[b], ny.ravel()[b]
    u = (local // nyb - 0.5 * (nxb - 1)) * grid_res
    v = (local % nyb - 0.5 * (nyb - 1)) * grid_res
    L = boxes.length.ravel()[b]
    W = boxes.width.ravel()[b]
    u = u + np.where(region == FWD, L, 0.0) - np.where(region == BWD, L, 0.0)
    v = v + np.where(region == LEFT, W, 0.0) - np.where(region == RIGHT, W, 0.0)
    c = np.cos(boxes.heading.ravel())[b]
    s = np.sin(boxes.heading.ravel())[b]
    pts = np.empty((total, 3))
    pts[:, 0] = boxes.cx.ravel()[b] + c * u - s * v
    pts[:, 1] = boxes.cy.ravel()[b] + s * u + c * v
    pts[:, 2] = (b % steps) * dt
    return PointSet(pts, np.sqrt(u * u + v * v), blk_start.reshape(n_traj, steps, 5),
                    blk_len.reshape(n_traj, steps, 5), boxes, grid_res, dt)


@dataclass
class QuerySet:
    """Unique query cells with cell-centre representatives.

    ``inverse[j]`` is the unique index of raw point j. With ``resolution``
    None the raw points are used directly (continuous querying).
    """
    keys: np.ndarray
    points: np.ndarray
    inverse: np.ndarray
    resolution: Optional[float]
    dt: float
    n_raw: int

    @property
    def n_unique(self) -> int:
        return len(self.points)

    @property
    def ratio(self) -> float:
        return self.n_unique / self.n_raw if self.n_raw else 0.0


def quantize_keys(points, resolution: float, dt: float = 0.5) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    keys = np.empty((len(p), 3), dtype=np.int64)
    keys[:, 0] = np.floor(p[:, 0] / resolution)
    keys[:, 1] = np.floor(p[:, 1] / resolution)
    keys[:, 2] = np.rint(p[:, 2] / dt)
    return keys


def quantize(points, resolution: Optional[float] = 0.5, dt: float = 0.5) -> QuerySet:
    """Snap (x, y, t) points to cells and deduplicate.

    Unique keys come out sorted by (it, iy, ix), so the result does not
    depend on input order.
    """
    if isinstance(points, PointSet):
        dt = points.dt
        points = points.points
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(p)
    if resolution is None:
        keys = np.zeros((n, 3), dtype=np.int64)
        keys[:, 2] = np.rint(p[:, 2] / dt)
        return QuerySet(keys, p.copy(), np.arange(n), None, dt, n)
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if n == 0:
        return QuerySet(np.zeros((0, 3), np.int64), np.zeros((0, 3)), np.zeros(0, np.int64),
                        resolution, dt, 0)
    return quantize_from_keys(quantize_keys(p, resolution, dt), resolution, dt)


def quantize_from_keys(keys: np.ndarray, resolution: float, dt: float) -> QuerySet:
    n = len(keys)
    lo = keys.min(axis=0)
    span = keys.max(axis=0) - lo + 1
    if float(span[0]) * float(span[1]) * float(span[2]) < 2 ** 62:
        rel = keys - lo
        packed = (rel[:, 2] * span[1] + rel[:, 1]) * span[0] + rel[:, 0]
        uniq, inverse = np.unique(packed, return_inverse=True)
        ukeys = np.empty((len(uniq), 3), dtype=np.int64)
        ukeys[:, 0] = uniq % span[0]
        ukeys[:, 1] = (uniq // span[0]) % span[1]
        ukeys[:, 2] = uniq // (span[0] * span[1])
        ukeys += lo
    else:
        ukeys, inverse = np.unique(keys[:, ::-1], axis=0, return_inverse=True)
        ukeys = ukeys[:, ::-1].copy()
    return QuerySet(ukeys, _cell_centres(ukeys, resolution, dt), inverse.ravel(), resolution, dt, n)


def evaluate(qs: QuerySet, occ_field) -> np.ndarray:
    """One batched field call over the unique representatives."""
    if qs.n_unique == 0:
        return np.zeros(0)
    vals = np.asarray(occ_field.query_batch(qs.points), dtype=float)
    if vals.shape != (qs.n_unique,):
        raise ValueError("field returned the wrong number of values")
    return vals


@dataclass
class QueryStats:
    raw_points: int = 0
    unique_keys: int = 0
    field_evaluations: int = 0
    t_points: float = 0.0
    t_quantize: float = 0.0
    t_evaluate: float = 0.0

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class OccupancyTable:
    """Field values on the raw point layout, reduced per (trajectory, step).

    ``point_set`` is only kept by the reference path; the fused path stores
    the per-point distances and block layout it needs for the reductions.
    """
    query_set: QuerySet
    unique_values: np.ndarray
    block_start: np.ndarray
    block_count: np.ndarray
    dist: np.ndarray
    point_set: Optional[PointSet] = None
    stats: QueryStats = field(default_factory=QueryStats)

    @property
    def n_traj(self) -> int:
        return self.block_start.shape[0]

    @property
    def steps(self) -> int:
        return self.block_start.shape[1]

    @property
    def n_raw(self) -> int:
        return self.query_set.n_raw

    @property
    def values(self) -> np.ndarray:
        if not hasattr(self, "_values"):
            self._values = self.unique_values[self.query_set.inverse]
        return self._values

    def covers(self, n_traj: int) -> bool:
        return self.n_traj >= n_traj and self.n_raw > 0

    def region_values(self, i: int, t: int, r: int) -> np.ndarray:
        a = self.block_start[i, t, r]
        return self.values[a:a + self.block_count[i, t, r]]

    def _reduce(self):
        if not hasattr(self, "_red"):
            m_in, bl, bt = block_reductions(
                self.unique_values, self.query_set.inverse, self.dist,
                self.block_start.reshape(-1, 5), self.block_count.reshape(-1, 5))
            shape = (self.n_traj, self.steps)
            self._red = (m_in.reshape(shape), bl.reshape(shape), bt.reshape(shape))
        return self._red

    def region_max(self, r: int = IN) -> np.ndarray:
        """max psi over region ``r`` for every (trajectory, step)."""
        if r == IN:
            return self._reduce()[0]
        starts = self.block_start.reshape(-1, 5)
        return np.maximum.reduceat(self.values, starts.ravel())[r::5].reshape(self.n_traj, self.steps)

    def buffer_max(self, side: str) -> np.ndarray:
        """max over a side's two regions of psi(q) * dis(q) / max dis."""
        return self._reduce()[{"longitudinal": 1, "lateral": 2}[side]]


def reference_reductions(table: OccupancyTable):
    """The block reductions of ``OccupancyTable`` written with numpy ``reduceat``."""
    starts5 = table.block_start.reshape(-1, 5)
    vals = table.values
    m_in = np.maximum.reduceat(vals, starts5.ravel())[IN::5]
    # segments per box: [IN], [FWD, BWD], [LEFT, RIGHT]; each side is contiguous
    starts = starts5[:, [IN, FWD, LEFT]].ravel()
    lens = np.diff(np.append(starts, table.n_raw))
    dmax = np.maximum.reduceat(table.dist, starts)
    norm = np.repeat(np.where(dmax > 0, dmax, 1.0), lens)
    m = np.maximum.reduceat(table.dist / norm * vals, starts).reshape(-1, 3)
    shape = (table.n_traj, table.steps)
    return m_in.reshape(shape), m[:, 1].reshape(shape), m[:, 2].reshape(shape)


_DENSE_LIMIT = 40_000_000


def _dedup(ix, iy, it, resolution, dt, n_raw) -> QuerySet:
    """Sorted unique (it, iy, ix) cells via a dense mark array when the range is small."""
    lo = np.array([ix.min(), iy.min(), it.min()])
    span = np.array([ix.max(), iy.max(), it.max()]) - lo + 1
    size = int(span[0]) * int(span[1]) * int(span[2])
    if size > _DENSE_LIMIT:
        return quantize_from_keys(np.stack([ix, iy, it], axis=1), resolution, dt)
    packed = ((it - lo[2]) * span[1] + (iy - lo[1])) * span[0] + (ix - lo[0])
    mark = np.zeros(size, dtype=bool)
    mark[packed] = True
    uniq = np.flatnonzero(mark)
    lut = np.empty(size, dtype=np.int64)
    lut[uniq] = np.arange(len(uniq))
    inverse = lut[packed]
    ukeys = np.empty((len(uniq), 3), dtype=np.int64)
    ukeys[:, 0] = uniq % span[0]
    ukeys[:, 1] = (uniq // span[0]) % span[1]
    ukeys[:, 2] = uniq // (span[0] * span[1])
    ukeys += lo
    return QuerySet(ukeys, _cell_centres(ukeys, resolution, dt), inverse, resolution, dt, n_raw)


def _cell_centres(ukeys, resolution, dt):
    reps = np.empty((len(ukeys), 3))
    reps[:, 0] = (ukeys[:, 0] + 0.5) * resolution
    reps[:, 1] = (ukeys[:, 1] + 0.5) * resolution
    reps[:, 2] = ukeys[:, 2] * dt
    return reps


def evaluate_trajectories(trajs, occ_field, resolution: Optional[float] = 0.5,
                          grid_res: float = 0.5, dt: float = 0.5,
                          ego_length: float = EGO_LENGTH, ego_width: float = EGO_WIDTH,
                          reference: bool = False) -> OccupancyTable:
    """Full pipeline: points of interest, quantisation, one field call, scatter.

    The default path fuses point generation and key computation in a compiled
    kernel; ``reference=True`` (or continuous querying) goes through
    ``points_of_interest`` and ``quantize``. Both give identical tables.
    """
    stats = QueryStats()
    t0 = time.perf_counter()
    if reference or resolution is None:
        ps = points_of_interest(trajs, grid_res, dt, ego_length, ego_width)
        t1 = time.perf_counter()
        qs = quantize(ps, resolution, dt)
        block_start, block_count, dist = ps.block_start, ps.block_count, ps.dist
    else:
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        ps = None
        boxes = motion_blur_boxes(trajs, ego_length, ego_width)
        n_traj, steps = boxes.cx.shape
        nx, ny = grid_counts(boxes.length, boxes.width, grid_res)
        h = boxes.heading.ravel()
        ix, iy, dist = fused_keys(boxes.cx.ravel(), boxes.cy.ravel(), np.cos(h), np.sin(h),
                                  boxes.length.ravel(), boxes.width.ravel(),
                                  nx.ravel(), ny.ravel(), float(grid_res), float(resolution))
        per_region = (nx * ny).ravel()
        it = np.repeat(np.arange(per_region.size) % steps, 5 * per_region)
        blk_len = np.repeat(per_region, 5)
        block_start = (np.cumsum(blk_len) - blk_len).reshape(n_traj, steps, 5)
        block_count = blk_len.reshape(n_traj, steps, 5)
        t1 = time.perf_counter()
        qs = _dedup(ix, iy, it, resolution, dt, len(ix))
    t2 = time.perf_counter()
    vals = evaluate(qs, occ_field)
    t3 = time.perf_counter()
    stats.raw_points, stats.unique_keys, stats.field_evaluations = qs.n_raw, qs.n_unique, qs.n_unique
    stats.t_points, stats.t_quantize, stats.t_evaluate = t1 - t0, t2 - t1, t3 - t2
    return OccupancyTable(qs, vals, block_start, block_count, dist, ps, stats)
