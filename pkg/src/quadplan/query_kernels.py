"""Compiled kernels for the planning hot path.

They produce exactly the points, keys and reductions of the numpy reference
implementation in ``query_engine`` without materialising the raw point
array.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def fused_keys(cx, cy, cos_h, sin_h, L, W, nx, ny, grid_res, q_res):
    """Quantisation cells (ix, iy) and box-centre distance of every raw point.

    Layout matches ``points_of_interest``: box -> region -> local point.
    """
    n_box = cx.shape[0]
    total = 0
    for b in range(n_box):
        total += 5 * nx[b] * ny[b]
    ix = np.empty(total, np.int64)
    iy = np.empty(total, np.int64)
    dist = np.empty(total, np.float64)
    j = 0
    for b in range(n_box):
        c = cos_h[b]
        s = sin_h[b]
        hx = 0.5 * (nx[b] - 1)
        hy = 0.5 * (ny[b] - 1)
        for r in range(5):
            du = 0.0
            dv = 0.0
            if r == 1:
                du = L[b]
            elif r == 2:
                du = -L[b]
            elif r == 3:
                dv = W[b]
            elif r == 4:
                dv = -W[b]
            for li in range(nx[b] * ny[b]):
                u = (li // ny[b] - hx) * grid_res
                v = (li % ny[b] - hy) * grid_res
                u = u + du
                v = v + dv
                x = cx[b] + c * u - s * v
                y = cy[b] + s * u + c * v
                ix[j] = math.floor(x / q_res)
                iy[j] = math.floor(y / q_res)
                dist[j] = math.sqrt(u * u + v * v)
                j += 1
    return ix, iy, dist


@nb.njit(cache=True)
def block_reductions(vals, inverse, dist, starts, counts):
    """Per box: IN max, and the normalised-distance buffer maxima per side.

    ``starts``/``counts`` have shape (n_box, 5).
    """
    n_box = starts.shape[0]
    m_in = np.empty(n_box)
    b_long = np.empty(n_box)
    b_lat = np.empty(n_box)
    for b in range(n_box):
        a = starts[b, 0]
        best = -np.inf
        for j in range(a, a + counts[b, 0]):
            v = vals[inverse[j]]
            if v > best:
                best = v
        m_in[b] = best
        for side in range(2):
            a = starts[b, 1 + 2 * side]
            e = a + counts[b, 1 + 2 * side] + counts[b, 2 + 2 * side]
            dmax = -np.inf
            for j in range(a, e):
                if dist[j] > dmax:
                    dmax = dist[j]
            norm = dmax if dmax > 0 else 1.0
            best = -np.inf
            for j in range(a, e):
                v = dist[j] / norm * vals[inverse[j]]
                if v > best:
                    best = v
            if side == 0:
                b_long[b] = best
            else:
                b_lat[b] = best
    return m_in, b_long, b_lat
