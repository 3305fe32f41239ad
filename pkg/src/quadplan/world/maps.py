"""Procedural highway maps used by the scenario library and tests."""
from __future__ import annotations

import numpy as np

from .geometry import Polyline
from .lanemap import Lane, LaneMap

LANE_WIDTH = 3.5


def _lane(lid, center: Polyline, width, left_solid, right_solid, speed_limit,
          left=None, right=None, successors=()):
    return Lane(lid, center, center.offset(width / 2), center.offset(-width / 2),
                left_solid, right_solid, speed_limit, left, right, tuple(successors))


def straight_highway(n_lanes: int = 3, length: float = 1500.0, lane_width: float = LANE_WIDTH,
                     speed_limit: float = 30.0, x0: float = -100.0, prefix: str = "L") -> LaneMap:
    """Parallel lanes along +x; lane 0 is rightmost and centred on y=0."""
    lanes = {}
    for i in range(n_lanes):
        y = i * lane_width
        center = Polyline([[x0, y], [x0 + length, y]])
        lid = f"{prefix}{i}"
        lanes[lid] = _lane(
            lid, center, lane_width,
            left_solid=(i == n_lanes - 1), right_solid=(i == 0), speed_limit=speed_limit,
            left=f"{prefix}{i + 1}" if i < n_lanes - 1 else None,
            right=f"{prefix}{i - 1}" if i > 0 else None)
    return LaneMap(lanes, [f"{prefix}0"])


def curved_highway(n_lanes: int = 3, radius: float = 400.0, arc_angle: float = 1.2,
                   lane_width: float = LANE_WIDTH, speed_limit: float = 25.0,
                   vertex_spacing: float = 1.0) -> LaneMap:
    """Left-turning circular arc; lane 0 is the outer (rightmost) lane."""
    lanes = {}
    for i in range(n_lanes):
        r = radius - i * lane_width
        n = max(3, int(np.ceil(r * arc_angle / vertex_spacing)) + 1)
        a = np.linspace(0.0, arc_angle, n) - np.pi / 2
        center = Polyline(np.stack([r * np.cos(a), radius + r * np.sin(a)], axis=1))
        lid = f"L{i}"
        lanes[lid] = _lane(
            lid, center, lane_width, left_solid=(i == n_lanes - 1), right_solid=(i == 0),
            speed_limit=speed_limit,
            left=f"L{i + 1}" if i < n_lanes - 1 else None,
            right=f"L{i - 1}" if i > 0 else None)
    return LaneMap(lanes, ["L0"])


def highway_with_ramp(n_lanes: int = 2, ramp_start: float = -100.0, ramp_end: float = 200.0,
                      length: float = 1500.0, lane_width: float = LANE_WIDTH,
                      speed_limit: float = 30.0, x0: float = -100.0) -> LaneMap:
    """Straight highway with a parallel acceleration lane ``R`` on the right.

    Lane 0 is split at ``ramp_end`` into ``L0a`` (dashed right boundary next
    to the ramp) and ``L0b``. The ramp ends at ``ramp_end`` with no successor.
    """
    lanes = {}
    x_end = x0 + length
    for i in range(1, n_lanes):
        y = i * lane_width
        lid = f"L{i}"
        lanes[lid] = _lane(
            lid, Polyline([[x0, y], [x_end, y]]), lane_width,
            left_solid=(i == n_lanes - 1), right_solid=False, speed_limit=speed_limit,
            left=f"L{i + 1}" if i < n_lanes - 1 else None,
            right="L0a")
    left0 = "L1" if n_lanes > 1 else None
    lanes["L0a"] = _lane("L0a", Polyline([[x0, 0.0], [ramp_end, 0.0]]), lane_width,
                         left_solid=n_lanes == 1, right_solid=False, speed_limit=speed_limit,
                         left=left0, right="R", successors=("L0b",))
    lanes["L0b"] = _lane("L0b", Polyline([[ramp_end, 0.0], [x_end, 0.0]]), lane_width,
                         left_solid=n_lanes == 1, right_solid=True, speed_limit=speed_limit,
                         left=left0)
    lanes["R"] = _lane("R", Polyline([[ramp_start, -lane_width], [ramp_end, -lane_width]]),
                       lane_width, left_solid=False, right_solid=True, speed_limit=speed_limit,
                       left="L0a")
    return LaneMap(lanes, ["L0a", "L0b"])
