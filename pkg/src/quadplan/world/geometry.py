"""Planar geometry: poses, polylines and Frenet-frame conversions.

Lateral offsets are positive to the LEFT of the polyline's direction of travel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap angle(s) into (-pi, pi]."""
    if np.isscalar(a):
        return float(a - TWO_PI * math.ceil((a - math.pi) / TWO_PI))
    a = np.asarray(a, dtype=float)
    return a - TWO_PI * np.ceil((a - np.pi) / TWO_PI)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


class Projection(NamedTuple):
    s: np.ndarray
    d: np.ndarray
    segment: np.ndarray
    # arc length extrapolated past the endpoints along the end tangents
    s_ext: np.ndarray


class Polyline:
    """Piecewise-linear curve with cumulative arc length."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least 2 (x, y) points")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0.0):
            raise ValueError("polyline has repeated consecutive points")
        self.points = pts
        self.seg_lengths = lengths
        self.tangents = seg / lengths[:, None]
        self.normals = np.stack([-self.tangents[:, 1], self.tangents[:, 0]], axis=1)
        self.arc = np.concatenate([[0.0], np.cumsum(lengths)])
        self.headings = np.arctan2(self.tangents[:, 1], self.tangents[:, 0])
        self.points.setflags(write=False)

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"Polyline(n={len(self.points)}, length={self.length:.2f})"

    def project(self, xy) -> Projection:
        """Global minimum-distance projection of one or many points.

        Ties between segments resolve to the smaller arc length.
        """
        p = np.atleast_2d(np.asarray(xy, dtype=float))
        n = len(p)
        s_out = np.empty(n)
        d_out = np.empty(n)
        seg_out = np.empty(n, dtype=np.int64)
        a = self.points[:-1]
        # bound the (points x segments) working set
        chunk = max(1, 2_000_000 // max(1, len(a)))
        for lo in range(0, n, chunk):
            q = p[lo:lo + chunk]
            rel_x = q[:, 0:1] - a[None, :, 0]
            rel_y = q[:, 1:2] - a[None, :, 1]
            along = rel_x * self.tangents[None, :, 0] + rel_y * self.tangents[None, :, 1]
            along = np.clip(along, 0.0, self.seg_lengths[None, :])
            fx = rel_x - along * self.tangents[None, :, 0]
            fy = rel_y - along * self.tangents[None, :, 1]
            dist2 = fx * fx + fy * fy
            k = np.argmin(dist2, axis=1)
            rows = np.arange(len(q))
            alg = along[rows, k]
            ex, ey = fx[rows, k], fy[rows, k]
            cross = self.tangents[k, 0] * ey - self.tangents[k, 1] * ex
            dist = np.sqrt(dist2[rows, k])
            s_out[lo:lo + chunk] = self.arc[k] + alg
            d_out[lo:lo + chunk] = np.where(cross >= 0.0, dist, -dist)
            seg_out[lo:lo + chunk] = k
        s_ext = s_out.copy()
        first = self.points[0]
        last = self.points[-1]
        at_start = (seg_out == 0) & (s_out <= 0.0)
        if np.any(at_start):
            r = p[at_start] - first
            s_ext[at_start] = r @ self.tangents[0]
        at_end = (seg_out == len(self.seg_lengths) - 1) & (s_out >= self.length)
        if np.any(at_end):
            r = p[at_end] - last
            s_ext[at_end] = self.length + r @ self.tangents[-1]
        return Projection(s_out, d_out, seg_out, s_ext)

    def segment_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        k = np.searchsorted(self.arc, s, side="right") - 1
        return np.clip(k, 0, len(self.seg_lengths) - 1)

    def frenet_to_xy(self, s, d):
        """Vectorised Frenet -> Cartesian.

        Returns (x, y, heading, clamped) where ``clamped`` flags inputs whose
        arc length fell outside [0, length] and were moved to the endpoint.
        """
        s = np.asarray(s, dtype=float)
        d = np.asarray(d, dtype=float)
        clamped = (s < 0.0) | (s > self.length)
        sc = np.clip(s, 0.0, self.length)
        k = self.segment_at(sc)
        base = self.points[k] + (sc - self.arc[k])[..., None] * self.tangents[k]
        xy = base + d[..., None] * self.normals[k]
        return xy[..., 0], xy[..., 1], self.headings[k], clamped

    def heading_at(self, s) -> np.ndarray:
        return self.headings[self.segment_at(s)]

    def resampled(self, step: float) -> "Polyline":
        n = max(2, int(math.ceil(self.length / step)) + 1)
        s = np.linspace(0.0, self.length, n)
        x, y, _, _ = self.frenet_to_xy(s, np.zeros_like(s))
        return Polyline(np.stack([x, y], axis=1))

    def offset(self, d: float) -> "Polyline":
        """Vertex-wise lateral offset using bisector normals."""
        n = np.empty_like(self.points)
        n[0] = self.normals[0]
        n[-1] = self.normals[-1]
        if len(self.points) > 2:
            mid = self.normals[:-1] + self.normals[1:]
            mid /= np.linalg.norm(mid, axis=1)[:, None]
            # scale so the offset curve stays parallel to both segments
            cos_half = np.einsum("ij,ij->i", mid, self.normals[1:])
            n[1:-1] = mid / cos_half[:, None]
        return Polyline(self.points + d * n)

    def extended(self, back: float = 0.0, ahead: float = 0.0) -> "Polyline":
        pts = [self.points]
        if back > 0:
            pts.insert(0, (self.points[0] - back * self.tangents[0])[None])
        if ahead > 0:
            pts.append((self.points[-1] + ahead * self.tangents[-1])[None])
        return Polyline(np.concatenate(pts))

    def concat(self, other: "Polyline") -> "Polyline":
        """Join two polylines, dropping a duplicated junction point."""
        b = other.points
        if np.hypot(*(b[0] - self.points[-1])) < 1e-9:
            b = b[1:]
        return Polyline(np.concatenate([self.points, b]))

    def to_list(self):
        return self.points.tolist()


def project_to_polyline(p, pl: Polyline):
    """Return (s, d, segment index) of the closest point on ``pl``."""
    proj = pl.project(np.asarray(p, dtype=float)[None])
    return float(proj.s[0]), float(proj.d[0]), int(proj.segment[0])


def signed_distance(p, pl: Polyline) -> float:
    return project_to_polyline(p, pl)[1]


def frenet_to_cartesian(s: float, d: float, pl: Polyline):
    """Return (Pose2D, clamped) for arc length ``s`` and lateral offset ``d``."""
    x, y, h, clamped = pl.frenet_to_xy(np.array([s]), np.array([d]))
    return Pose2D(x[0], y[0], h[0]), bool(clamped[0])


def decompose_lat_long(v, p, pl: Polyline):
    """Split vector ``v`` into (lateral, longitudinal) parts w.r.t. the
    tangent of ``pl`` at the projection of ``p``."""
    _, _, k = project_to_polyline(p, pl)
    v = np.asarray(v, dtype=float)
    t = pl.tangents[k]
    n = pl.normals[k]
    return float(v @ n), float(v @ t)
