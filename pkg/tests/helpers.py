import numpy as np

from quadplan.world.dynamics import EgoState
from quadplan.world.geometry import Pose2D


def ego_at(x=0.0, y=0.0, heading=0.0, speed=20.0, accel=0.0, curvature=0.0):
    return EgoState(Pose2D(x, y, heading), speed, accel, curvature)


def straight_states(v=10.0, a=0.0, y=0.0, steps=10, dt=0.5, x0=0.0, kappa=0.0):
    """States along +x at constant accel; speed clamps at zero."""
    t = np.arange(steps + 1) * dt
    vv = np.maximum(v + a * t, 0.0)
    if a < 0:
        t_stop = v / -a
        tc = np.minimum(t, t_stop)
        x = x0 + v * tc + 0.5 * a * tc ** 2
    else:
        x = x0 + v * t + 0.5 * a * t ** 2
    st = np.zeros((steps + 1, 6))
    st[:, 0], st[:, 1], st[:, 3], st[:, 4], st[:, 5] = x, y, vv, a, kappa
    return st


# acceptance verdicts, printed in the terminal summary
ACCEPTANCE = {}


def verdict(n: int, ok: bool, detail: str):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line
