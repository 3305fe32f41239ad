"""Kinematic bicycle model in curvature form.

State vector layout used everywhere: (x, y, heading, speed, accel, curvature).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .geometry import TWO_PI, Pose2D, wrap_angle

KAPPA_MAX = 0.2
INTERNAL_DT = 0.05

X, Y, HEADING, SPEED, ACCEL, CURV = range(6)


@dataclass(frozen=True)
class EgoState:
    pose: Pose2D
    speed: float = 0.0
    accel: float = 0.0
    curvature: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
        if abs(self.curvature) > KAPPA_MAX + 1e-9:
            raise ValueError(f"|curvature| exceeds {KAPPA_MAX}")

    def as_array(self) -> np.ndarray:
        p = self.pose
        return np.array([p.x, p.y, p.heading, self.speed, self.accel, self.curvature])

    @classmethod
    def from_array(cls, a) -> "EgoState":
        a = [float(v) for v in a]
        return cls(Pose2D(a[0], a[1], a[2]), max(a[3], 0.0), a[4],
                   min(max(a[5], -KAPPA_MAX), KAPPA_MAX))

    def to_dict(self):
        p = self.pose
        return {"x": p.x, "y": p.y, "heading": p.heading, "speed": self.speed,
                "accel": self.accel, "curvature": self.curvature}

    @classmethod
    def from_dict(cls, d):
        return cls(Pose2D(d["x"], d["y"], d.get("heading", 0.0)), d.get("speed", 0.0),
                   d.get("accel", 0.0), d.get("curvature", 0.0))


def travel(v: float, a: float, h: float):
    """Distance and end speed after ``h`` seconds at accel ``a``, no reversing."""
    v_end = v + a * h
    if v_end >= 0.0:
        return v * h + 0.5 * a * h * h, v_end
    # stops inside the interval
    return (v * v / (-2.0 * a) if a < 0 else 0.0), 0.0


def step_array(state: np.ndarray, accel: float, curv_rate: float, dt: float,
               internal_dt: float = INTERNAL_DT, kappa_max: float = KAPPA_MAX) -> np.ndarray:
    """Integrate one state vector for ``dt`` seconds.

    Each sub-step advances speed exactly (clamped at zero), then moves along a
    chord at the midpoint heading.
    """
    x, y, th, v, _, k = (float(c) for c in state)
    n = max(1, int(math.ceil(dt / internal_dt - 1e-9)))
    h = dt / n
    for _ in range(n):
        ds, v_new = travel(v, accel, h)
        k_new = min(max(k + curv_rate * h, -kappa_max), kappa_max)
        dth = ds * 0.5 * (k + k_new)
        th_mid = th + 0.5 * dth
        x += ds * math.cos(th_mid)
        y += ds * math.sin(th_mid)
        th += dth
        v, k = v_new, k_new
    applied = accel if (v > 0.0 or accel > 0.0) else 0.0
    return np.array([x, y, wrap_angle(th), v, applied, k])


@nb.njit(cache=True)
def rollout_knots(s0, acc, knots, dt, internal_dt=INTERNAL_DT, kappa_max=KAPPA_MAX):
    """Batched ``step_array`` rollouts reaching curvature ``knots[:, k]`` at step k + 1.

    s0 (n, 6), acc and knots (n, T); returns (n, T + 1, 6). Arithmetic matches
    ``step_array`` operation for operation.
    """
    n, T = acc.shape
    out = np.empty((n, T + 1, 6))
    m = max(1, int(math.ceil(dt / internal_dt - 1e-9)))
    h = dt / m
    for i in range(n):
        x, y, th, v, k = s0[i, 0], s0[i, 1], s0[i, 2], s0[i, 3], s0[i, 5]
        out[i, 0] = s0[i]
        for j in range(T):
            a = acc[i, j]
            rate = (knots[i, j] - k) / dt
            for _ in range(m):
                v_end = v + a * h
                if v_end >= 0.0:
                    ds, v_new = v * h + 0.5 * a * h * h, v_end
                else:
                    ds, v_new = (v * v / (-2.0 * a) if a < 0 else 0.0), 0.0
                k_new = min(max(k + rate * h, -kappa_max), kappa_max)
                dth = ds * 0.5 * (k + k_new)
                th_mid = th + 0.5 * dth
                x += ds * math.cos(th_mid)
                y += ds * math.sin(th_mid)
                th += dth
                v, k = v_new, k_new
            th = th - TWO_PI * math.ceil((th - math.pi) / TWO_PI)
            out[i, j + 1, 0] = x
            out[i, j + 1, 1] = y
            out[i, j + 1, 2] = th
            out[i, j + 1, 3] = v
            out[i, j + 1, 4] = a if (v > 0.0 or a > 0.0) else 0.0
            out[i, j + 1, 5] = k
    return out


def bicycle_step(state: EgoState, controls, dt: float) -> EgoState:
    """Advance ``state`` under (accel, curvature rate) for ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    accel, curv_rate = controls
    return EgoState.from_array(step_array(state.as_array(), accel, curv_rate, dt))
