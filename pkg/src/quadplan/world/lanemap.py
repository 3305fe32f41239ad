"""Lane-graph map model and its JSON document format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Polyline

MAP_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: Polyline
    left_boundary: Polyline
    right_boundary: Polyline
    left_solid: bool = False
    right_solid: bool = False
    speed_limit: float = 30.0
    left_neighbor: Optional[str] = None
    right_neighbor: Optional[str] = None
    successors: tuple = ()

    def __post_init__(self):
        if self.speed_limit <= 0:
            raise ValueError(f"lane {self.id}: speed_limit must be positive")

    @property
    def successor(self) -> Optional[str]:
        return self.successors[0] if self.successors else None

    def to_dict(self):
        return {
            "id": self.id,
            "centerline": self.centerline.to_list(),
            "left_boundary": {"points": self.left_boundary.to_list(), "solid": self.left_solid},
            "right_boundary": {"points": self.right_boundary.to_list(), "solid": self.right_solid},
            "speed_limit": self.speed_limit,
            "neighbors": {"left": self.left_neighbor, "right": self.right_neighbor},
            "successors": list(self.successors),
        }

    @classmethod
    def from_dict(cls, d):
        nb = d.get("neighbors") or {}
        return cls(
            id=str(d["id"]),
            centerline=Polyline(d["centerline"]),
            left_boundary=Polyline(d["left_boundary"]["points"]),
            right_boundary=Polyline(d["right_boundary"]["points"]),
            left_solid=bool(d["left_boundary"].get("solid", False)),
            right_solid=bool(d["right_boundary"].get("solid", False)),
            speed_limit=float(d["speed_limit"]),
            left_neighbor=nb.get("left"),
            right_neighbor=nb.get("right"),
            successors=tuple(d.get("successors", ())),
        )


@dataclass
class MapQuery:
    """Per-lane projections of a fixed point set, shared by several costs."""
    d_center: np.ndarray   # (n_lanes, n_points) signed offset to centerline
    d_left: np.ndarray     # signed distance to left boundary (>0 means outside)
    d_right: np.ndarray    # signed distance to right boundary (>0 means outside)
    s_ext: np.ndarray      # arc length along centerline, extrapolated at the ends
    seg: np.ndarray        # centerline segment index of the projection
    containing: np.ndarray  # lane index containing the point, -1 if none
    nearest: np.ndarray     # containing lane, else the lane with the closest centerline

    @property
    def offroad(self) -> np.ndarray:
        return self.containing < 0


@dataclass
class LaneMap:
    lanes: dict
    route: list = field(default_factory=list)

    def __post_init__(self):
        if not self.lanes:
            raise ValueError("map has no lanes")
        for lane in self.lanes.values():
            for ref in (lane.left_neighbor, lane.right_neighbor, *lane.successors):
                if ref is not None and ref not in self.lanes:
                    raise ValueError(f"lane {lane.id} references unknown lane {ref}")
        for lid in self.route:
            if lid not in self.lanes:
                raise ValueError(f"route lane {lid} not in map")

    @cached_property
    def ids(self) -> list:
        return list(self.lanes)

    @cached_property
    def index(self) -> dict:
        return {lid: i for i, lid in enumerate(self.ids)}

    def lane(self, lane_id: str) -> Lane:
        return self.lanes[lane_id]

    def with_route(self, route) -> "LaneMap":
        return LaneMap(dict(self.lanes), list(route))

    @cached_property
    def speed_limits(self) -> np.ndarray:
        return np.array([self.lanes[i].speed_limit for i in self.ids])

    def query(self, xy) -> MapQuery:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        n_l, n_p = len(self.ids), len(xy)
        d_c = np.empty((n_l, n_p))
        d_l = np.empty((n_l, n_p))
        d_r = np.empty((n_l, n_p))
        s_ext = np.empty((n_l, n_p))
        seg = np.empty((n_l, n_p), dtype=np.int64)
        for i, lid in enumerate(self.ids):
            lane = self.lanes[lid]
            pc = lane.centerline.project(xy)
            d_c[i], s_ext[i], seg[i] = pc.d, pc.s_ext, pc.segment
            d_l[i] = lane.left_boundary.project(xy).d
            d_r[i] = -lane.right_boundary.project(xy).d
        lengths = np.array([self.lanes[i].centerline.length for i in self.ids])[:, None]
        inside = (d_l <= 0.0) & (d_r <= 0.0) & (s_ext >= 0.0) & (s_ext <= lengths)
        absd = np.abs(d_c)
        masked = np.where(inside, absd, np.inf)
        best_in = np.argmin(masked, axis=0)
        has = np.isfinite(masked[best_in, np.arange(n_p)])
        containing = np.where(has, best_in, -1)
        nearest = np.where(has, best_in, np.argmin(absd, axis=0))
        return MapQuery(d_c, d_l, d_r, s_ext, seg, containing, nearest)

    def lane_at(self, xy) -> Optional[str]:
        q = self.query(xy)
        return self.ids[int(q.nearest[0])] if q.containing[0] >= 0 else None

    def base_path(self, lane_id: str, max_length: float = 800.0) -> Polyline:
        """Centerline of ``lane_id`` followed through its successor chain."""
        cache = self.__dict__.setdefault("_base_paths", {})
        key = (lane_id, max_length)
        if key not in cache:
            pl = self.lanes[lane_id].centerline
            seen = {lane_id}
            cur = self.lanes[lane_id]
            while cur.successor and cur.successor not in seen and pl.length < max_length:
                seen.add(cur.successor)
                cur = self.lanes[cur.successor]
                pl = pl.concat(cur.centerline)
            cache[key] = pl
        return cache[key]

    def to_dict(self):
        return {"schema_version": MAP_SCHEMA_VERSION,
                "lanes": [l.to_dict() for l in self.lanes.values()],
                "route": list(self.route)}

    @classmethod
    def from_dict(cls, d):
        lanes = [Lane.from_dict(x) for x in d["lanes"]]
        return cls({l.id: l for l in lanes}, list(d.get("route", [])))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LaneMap":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
