"""Oriented rectangles, vectorised over leading dimensions.

A box is described by centre (cx, cy), heading, length (along heading) and
width. All helpers broadcast numpy arrays.
"""
from __future__ import annotations

import numpy as np


def box_corners(cx, cy, heading, length, width) -> np.ndarray:
    """Corners with shape (..., 4, 2), counter-clockwise from front-left."""
    cx, cy, heading, length, width = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (cx, cy, heading, length, width)))
    c, s = np.cos(heading), np.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    lx = np.stack([hl, -hl, -hl, hl], axis=-1)
    ly = np.stack([hw, hw, -hw, -hw], axis=-1)
    x = cx[..., None] + c[..., None] * lx - s[..., None] * ly
    y = cy[..., None] + s[..., None] * lx + c[..., None] * ly
    return np.stack([x, y], axis=-1)


def to_box_frame(px, py, cx, cy, heading):
    dx = np.asarray(px) - cx
    dy = np.asarray(py) - cy
    c, s = np.cos(heading), np.sin(heading)
    return c * dx + s * dy, -s * dx + c * dy


def box_signed_distance(px, py, cx, cy, heading, length, width):
    """Exact signed distance from points to a rectangle boundary (negative inside)."""
    lx, ly = to_box_frame(px, py, cx, cy, heading)
    qx = np.abs(lx) - np.asarray(length) / 2.0
    qy = np.abs(ly) - np.asarray(width) / 2.0
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    inside = np.minimum(np.maximum(qx, qy), 0.0)
    return outside + inside


def points_in_box(px, py, cx, cy, heading, length, width, tol: float = 1e-9):
    lx, ly = to_box_frame(px, py, cx, cy, heading)
    return (np.abs(lx) <= np.asarray(length) / 2.0 + tol) & (np.abs(ly) <= np.asarray(width) / 2.0 + tol)


def boxes_overlap(a, b) -> np.ndarray:
    """Separating-axis overlap test between broadcastable boxes.

    ``a`` and ``b`` are tuples (cx, cy, heading, length, width). Touching
    boxes count as overlapping only when they share interior area.
    """
    ca = box_corners(*a)
    cb = box_corners(*b)
    ca, cb = np.broadcast_arrays(ca, cb)
    ha = np.asarray(a[2], dtype=float)
    hb = np.asarray(b[2], dtype=float)
    ha, hb = np.broadcast_arrays(ha, hb)
    axes = []
    for h in (ha, hb):
        c, s = np.cos(h), np.sin(h)
        axes.append(np.stack([c, s], axis=-1))
        axes.append(np.stack([-s, c], axis=-1))
    overlap = np.ones(ca.shape[:-2], dtype=bool)
    for ax in axes:
        pa = np.einsum("...kj,...j->...k", ca, ax)
        pb = np.einsum("...kj,...j->...k", cb, ax)
        sep = (pa.max(axis=-1) <= pb.min(axis=-1)) | (pb.max(axis=-1) <= pa.min(axis=-1))
        overlap &= ~sep
    return overlap
