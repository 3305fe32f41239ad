from .boxes import box_corners, box_signed_distance, boxes_overlap, points_in_box
from .dynamics import KAPPA_MAX, EgoState, bicycle_step, step_array
from .geometry import (Polyline, Pose2D, decompose_lat_long, frenet_to_cartesian,
                       project_to_polyline, signed_distance, wrap_angle)
from .lanemap import Lane, LaneMap, MapQuery
from .maps import curved_highway, highway_with_ramp, straight_highway

__all__ = [
    "EgoState", "KAPPA_MAX", "Lane", "LaneMap", "MapQuery", "Polyline", "Pose2D",
    "bicycle_step", "box_corners", "box_signed_distance", "boxes_overlap",
    "curved_highway", "decompose_lat_long", "frenet_to_cartesian", "highway_with_ramp",
    "points_in_box", "project_to_polyline", "signed_distance", "step_array",
    "straight_highway", "wrap_angle",
]
