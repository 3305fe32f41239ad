"""Occupancy fields psi(x, y, t) -> probability in [0, 1].

``OracleField`` is an analytic stand-in for a learned implicit decoder: it
knows every actor's future boxes and returns a softened point-in-box value.
``GridField`` is the dense baseline sampled from any field on a regular grid.
"""
from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy.special import expit

from .world.boxes import box_signed_distance

HORIZON_EPS = 1e-6


class OccupancyHorizonError(ValueError):
    pass


class OccupancyField(Protocol):
    def query_batch(self, points: np.ndarray) -> np.ndarray:
        """``points`` has shape (n, 3) with columns x, y, t."""
        ...


@dataclass
class ActorTrack:
    """Timestamped oriented boxes for one actor; time is relative to now."""
    times: np.ndarray
    centers: np.ndarray
    headings: np.ndarray
    length: float = 5.0
    width: float = 2.0
    actor_id: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        self.headings = np.unwrap(np.asarray(self.headings, dtype=float))
        if self.length <= 0 or self.width <= 0:
            raise ValueError("actor boxes need positive extent")
        if len(self.times) != len(self.centers) or len(self.times) != len(self.headings):
            raise ValueError("track arrays differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("track times must increase")

    @classmethod
    def static(cls, x, y, heading=0.0, length=5.0, width=2.0, horizon=5.0, actor_id=""):
        return cls(np.array([0.0, horizon]), np.array([[x, y], [x, y]]),
                   np.array([heading, heading]), length, width, actor_id)

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def pose_at(self, t):
        """Linearly interpolated (x, y, heading) at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        if len(self.times) == 1:
            shape = t.shape
            return (np.full(shape, self.centers[0, 0]), np.full(shape, self.centers[0, 1]),
                    np.full(shape, self.headings[0]))
        x = np.interp(t, self.times, self.centers[:, 0])
        y = np.interp(t, self.times, self.centers[:, 1])
        h = np.interp(t, self.times, self.headings)
        return x, y, h

    def to_dict(self):
        return {"id": self.actor_id, "length": self.length, "width": self.width,
                "times": self.times.tolist(), "centers": self.centers.tolist(),
                "headings": self.headings.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["times"], d["centers"], d["headings"], d.get("length", 5.0),
                   d.get("width", 2.0), d.get("id", ""))


@dataclass
class OracleField:
    """Ground-truth field over actor plans.

    Returns sigmoid(-d / sigma) of the signed distance to the closest box,
    or the hard indicator d < 0 when ``sigma`` is 0. ``noise_std`` shifts each
    actor by a fixed seeded offset to mimic an imperfect perception model.
    """
    actors: Sequence[ActorTrack] = ()
    sigma: float = 0.25
    horizon: Optional[float] = None
    noise_std: float = 0.0
    seed: Optional[int] = None
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.actors = list(self.actors)
        if self.horizon is None:
            self.horizon = min((a.end_time for a in self.actors), default=np.inf)
        if self.noise_std > 0:
            rng = np.random.default_rng(self.seed)
            self._offsets = rng.normal(0.0, self.noise_std, size=(len(self.actors), 2))
        else:
            self._offsets = np.zeros((len(self.actors), 2))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Minimum signed distance over actors (inf for an empty world)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if pts.size and pts[:, 2].max() > self.horizon + HORIZON_EPS:
            raise OccupancyHorizonError("occupancy horizon exceeded")
        best = np.full(len(pts), np.inf)
        if not len(pts):
            return best
        # actor poses are evaluated once per distinct time stamp
        times, inv = np.unique(pts[:, 2], return_inverse=True)
        for i, actor in enumerate(self.actors):
            ax, ay, ah = actor.pose_at(times)
            ax = ax + self._offsets[i, 0]
            ay = ay + self._offsets[i, 1]
            d = box_signed_distance(pts[:, 0], pts[:, 1], ax[inv], ay[inv], ah[inv],
                                    actor.length, actor.width)
            np.minimum(best, d, out=best)
        return best

    def query_batch(self, points: np.ndarray) -> np.ndarray:
        d = self.signed_distance(points)
        if self.sigma == 0:
            return (d < 0).astype(float)
        with np.errstate(over="ignore", invalid="ignore"):
            out = expit(-d / self.sigma)
        return np.nan_to_num(out, nan=0.0)

    def query(self, x: float, y: float, t: float) -> float:
        return float(self.query_batch(np.array([[x, y, t]]))[0])


class ZeroField:
    def query_batch(self, points):
        return np.zeros(len(points))


class ConstantField:
    def __init__(self, value: float):
        self.value = float(value)

    def query_batch(self, points):
        return np.full(len(points), self.value)


class CountingField:
    """Wraps a field and counts evaluated points; thread-safe."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.evaluations = 0
        self._lock = threading.Lock()

    def query_batch(self, points):
        out = self.inner.query_batch(points)
        with self._lock:
            self.calls += 1
            self.evaluations += len(points)
        return out

    def __getattr__(self, name):
        return getattr(self.inner, name)


@dataclass
class GridField:
    """Dense occupancy grid with nearest-cell lookup.

    ``values`` has shape (n_t, n_x, n_y); cell (i, j) is centred on
    ``origin + (i + 0.5, j + 0.5) * resolution``.
    """
    values: np.ndarray
    origin: tuple
    resolution: float
    times: np.ndarray
    out_of_range: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        self._lock = threading.Lock()

    @classmethod
    def build(cls, source, region, resolution: float, times) -> "GridField":
        """Evaluate ``source`` at every cell centre of ``region`` = (x0, y0, x1, y1)."""
        x0, y0, x1, y1 = map(float, region)
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        nx = max(1, int(np.ceil((x1 - x0) / resolution - 1e-9)))
        ny = max(1, int(np.ceil((y1 - y0) / resolution - 1e-9)))
        times = np.atleast_1d(np.asarray(times, dtype=float))
        cx = x0 + (np.arange(nx) + 0.5) * resolution
        cy = y0 + (np.arange(ny) + 0.5) * resolution
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        vals = np.empty((len(times), nx, ny))
        for k, t in enumerate(times):
            pts = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, t)], axis=1)
            vals[k] = np.asarray(source.query_batch(pts)).reshape(nx, ny)
        return cls(vals, (x0, y0), resolution, times)

    @property
    def shape(self):
        return self.values.shape

    def cell_centers(self):
        nt, nx, ny = self.values.shape
        cx = self.origin[0] + (np.arange(nx) + 0.5) * self.resolution
        cy = self.origin[1] + (np.arange(ny) + 0.5) * self.resolution
        return cx, cy

    def query_batch(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        nt, nx, ny = self.values.shape
        ix = np.floor((pts[:, 0] - self.origin[0]) / self.resolution).astype(np.int64)
        iy = np.floor((pts[:, 1] - self.origin[1]) / self.resolution).astype(np.int64)
        if nt == 1:
            it = np.zeros(len(pts), dtype=np.int64)
        else:
            it = np.clip(np.searchsorted(self.times, pts[:, 2]), 1, nt - 1)
            closer_left = (pts[:, 2] - self.times[it - 1]) <= (self.times[it] - pts[:, 2])
            it = np.where(closer_left, it - 1, it)
        valid = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out = np.zeros(len(pts))
        out[valid] = self.values[it[valid], ix[valid], iy[valid]]
        missed = int((~valid).sum())
        if missed:
            with self._lock:
                self.out_of_range += missed
        return out

    def query(self, x, y, t) -> float:
        return float(self.query_batch(np.array([[x, y, t]]))[0])

    def to_csv(self, path):
        cx, cy = self.cell_centers()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "p"])
            for k, t in enumerate(self.times):
                for i, x in enumerate(cx):
                    for j, y in enumerate(cy):
                        w.writerow([f"{t:.3f}", f"{x:.3f}", f"{y:.3f}", f"{self.values[k, i, j]:.6g}"])
