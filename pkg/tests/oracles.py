"""Independent reference computations used as test oracles.

Written directly from the definitions with plain loops or dense sampling so
they share no code path with the package under test.
"""
import math

import numpy as np


def dense_polyline(points, step=1e-3):
    pts = np.asarray(points, dtype=float)
    out, arc = [pts[:1]], [np.zeros(1)]
    s0 = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        L = math.hypot(*(b - a))
        n = max(2, int(math.ceil(L / step)) + 1)
        u = np.linspace(0.0, 1.0, n)[1:]
        out.append(a + u[:, None] * (b - a))
        arc.append(s0 + u * L)
        s0 += L
    return np.concatenate(out), np.concatenate(arc)


def dense_signed_distance(p, points, step=1e-3):
    """Signed distance by brute force over a densely resampled polyline."""
    dense, arc = dense_polyline(points, step)
    diff = dense - np.asarray(p, dtype=float)
    d2 = (diff ** 2).sum(axis=1)
    i = int(np.argmin(d2))
    j = min(i, len(dense) - 2)
    t = dense[j + 1] - dense[j]
    r = np.asarray(p, dtype=float) - dense[i]
    cross = t[0] * r[1] - t[1] * r[0]
    dist = math.sqrt(d2[i])
    return (dist if cross >= 0 else -dist), arc[i]


def exact_projection(p, points):
    """(s, d, tangent) of the closest point, scanning every segment; ties keep the smaller s."""
    pts = np.asarray(points, dtype=float)
    best = (math.inf, 0.0, 0.0, None)
    s0 = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        L = math.hypot(*(b - a))
        t = (b - a) / L
        rel = np.asarray(p, dtype=float) - a
        along = min(max(rel[0] * t[0] + rel[1] * t[1], 0.0), L)
        foot = a + along * t
        e = np.asarray(p, dtype=float) - foot
        dist = math.hypot(*e)
        if dist < best[0] - 1e-15:
            cross = t[0] * e[1] - t[1] * e[0]
            best = (dist, s0 + along, dist if cross >= 0 else -dist, t)
        s0 += L
    return best[1], best[2], best[3]


def sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def rect_sdf(px, py, cx, cy, h, L, W):
    """Signed distance to an oriented rectangle, vectorised, computed in the box frame."""
    dx, dy = px - cx, py - cy
    c, s = np.cos(h), np.sin(h)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    ou = np.abs(u) - L / 2
    ov = np.abs(v) - W / 2
    out = np.sqrt(np.clip(ou, 0, None) ** 2 + np.clip(ov, 0, None) ** 2)
    return out + np.minimum(np.maximum(ou, ov), 0.0)


def rect_corners(cx, cy, h, L, W):
    c, s = math.cos(h), math.sin(h)
    return [(cx + c * a - s * b, cy + s * a + c * b)
            for a, b in ((L / 2, W / 2), (-L / 2, W / 2), (-L / 2, -W / 2), (L / 2, -W / 2))]


def rects_overlap(a, b):
    """Separating-axis test written with Python lists."""
    ca, cb = rect_corners(*a), rect_corners(*b)
    for h in (a[2], b[2]):
        for ax in ((math.cos(h), math.sin(h)), (-math.sin(h), math.cos(h))):
            pa = [x * ax[0] + y * ax[1] for x, y in ca]
            pb = [x * ax[0] + y * ax[1] for x, y in cb]
            if max(pa) <= min(pb) or max(pb) <= min(pa):
                return False
    return True


# ------------------------------------------------------------ cost oracles

def _lane_projection(p, lane):
    """(d_center, d_left, d_right, s_ext, inside, tangent) for one lane, by segment scan."""
    c = lane.centerline.points
    s, d, tang = exact_projection(p, c)
    L = float(np.sum(np.hypot(*np.diff(c, axis=0).T)))
    s_ext = s
    if s <= 0.0:
        s_ext = float(np.dot(np.asarray(p) - c[0], (c[1] - c[0]) / math.hypot(*(c[1] - c[0]))))
    elif s >= L:
        t = (c[-1] - c[-2]) / math.hypot(*(c[-1] - c[-2]))
        s_ext = L + float(np.dot(np.asarray(p) - c[-1], t))
    d_left = exact_projection(p, lane.left_boundary.points)[1]
    d_right = -exact_projection(p, lane.right_boundary.points)[1]
    inside = d_left <= 0 and d_right <= 0 and 0.0 <= s_ext <= L
    return d, d_left, d_right, inside, tang


def _central_jerk(acc, dt):
    n = len(acc)
    out = []
    for k in range(n):
        if k == 0:
            out.append((acc[1] - acc[0]) / dt)
        elif k == n - 1:
            out.append((acc[-1] - acc[-2]) / dt)
        else:
            out.append((acc[k + 1] - acc[k - 1]) / (2 * dt))
    return out


def agnostic_oracle(states, lane_map, base_lane=None, dt=0.5):
    """The nine agent-agnostic features of one trajectory, one state at a time."""
    ids = list(lane_map.lanes)
    route = lane_map.route or [ids[0]]
    jerk = _central_jerk([float(s[4]) for s in states], dt)
    f = dict(acc_lat=0.0, acc_long=0.0, jerk=0.0, curv=0.0, corr=0.0, bound=0.0, speed=0.0,
             prog=0.0, route=0.0)
    for k in range(1, len(states)):
        x, y, th, v, a, kap = (float(c) for c in states[k])
        proj = {lid: _lane_projection((x, y), lane_map.lanes[lid]) for lid in ids}
        inside = [lid for lid in ids if proj[lid][3]]
        if inside:
            near = min(inside, key=lambda lid: (abs(proj[lid][0]), ids.index(lid)))
        else:
            near = min(ids, key=lambda lid: (abs(proj[lid][0]), ids.index(lid)))
        d, dl, dr, _, tang = proj[near]
        ax = a * math.cos(th) - v * v * kap * math.sin(th)
        ay = a * math.sin(th) + v * v * kap * math.cos(th)
        f["acc_long"] += (ax * tang[0] + ay * tang[1]) ** 2
        f["acc_lat"] += (-ax * tang[1] + ay * tang[0]) ** 2
        f["jerk"] += jerk[k] ** 2
        f["curv"] += kap * kap
        f["corr"] += abs(d)

        def bound(lid):
            lane = lane_map.lanes[lid]
            _, l_, r_, _, _ = proj[lid]
            return (max(l_, 0.0) if lane.left_solid else 0.0) + (max(r_, 0.0) if lane.right_solid else 0.0)
        f["bound"] += bound(near)
        if base_lane is not None and base_lane != near:
            f["bound"] += bound(base_lane)
        f["speed"] += max(v - lane_map.lanes[near].speed_limit, 0.0) ** 2
        f["prog"] -= math.hypot(x - states[k - 1][0], y - states[k - 1][1])
        f["route"] += min(abs(proj[r][0]) for r in route)
    return f


def blur_box(s0, s1, L=5.0, W=2.0):
    """Tightest box in the displacement frame holding both footprints."""
    dx, dy = s1[0] - s0[0], s1[1] - s0[1]
    h = math.atan2(dy, dx) if math.hypot(dx, dy) > 1e-6 else s0[2]
    cx, cy = (s0[0] + s1[0]) / 2, (s0[1] + s1[1]) / 2
    corners = rect_corners(s0[0], s0[1], s0[2], L, W) + rect_corners(s1[0], s1[1], s1[2], L, W)
    c, s = math.cos(h), math.sin(h)
    us = [abs(c * (x - cx) + s * (y - cy)) for x, y in corners]
    vs = [abs(-s * (x - cx) + c * (y - cy)) for x, y in corners]
    return cx, cy, h, 2 * max(us), 2 * max(vs)


def _lattice(extent, g):
    n = int(math.floor(extent / g + 1e-9)) + 1
    return (np.arange(n) - (n - 1) / 2.0) * g


def field_value(xy, t, tracks, sigma):
    """Oracle occupancy at points ``xy`` (m, 2) and one time ``t``."""
    best = np.full(len(xy), np.inf)
    for a in tracks:
        ax = np.interp(t, a.times, a.centers[:, 0])
        ay = np.interp(t, a.times, a.centers[:, 1])
        ah = np.interp(t, a.times, a.headings)
        best = np.minimum(best, rect_sdf(xy[:, 0], xy[:, 1], ax, ay, ah, a.length, a.width))
    if sigma == 0:
        return (best < 0).astype(float)
    return np.array([sigmoid(-d / sigma) for d in best]) if len(best) < 64 else 1.0 / (1.0 + np.exp(best / sigma))


def aware_oracle(states, tracks, sigma, grid=0.5, q=0.5, dt=0.5):
    """(col, buf_long, buf_lat, per-step col terms) from region lattices sampled at ``grid``.

    Points are snapped to ``q`` cells and the field is read at each cell centre.
    """
    T = len(states) - 1
    col = np.zeros(T)
    bl = np.zeros(T)
    bt = np.zeros(T)
    for t in range(T):
        cx, cy, h, L, W = blur_box(states[t], states[t + 1])
        u = _lattice(L, grid)
        v = _lattice(W, grid)
        U, V = np.meshgrid(u, v, indexing="ij")
        U, V = U.ravel(), V.ravel()
        c, s = math.cos(h), math.sin(h)
        vals, dists = {}, {}
        for name, du, dv in (("in", 0, 0), ("fwd", L, 0), ("bwd", -L, 0), ("left", 0, W), ("right", 0, -W)):
            uu, vv = U + du, V + dv
            x = cx + c * uu - s * vv
            y = cy + s * uu + c * vv
            cells = np.column_stack([np.floor(x / q), np.floor(y / q)])
            uniq, inv = np.unique(cells, axis=0, return_inverse=True)
            psi = field_value((uniq + 0.5) * q, t * dt, tracks, sigma)
            vals[name] = psi[inv.ravel()]
            dists[name] = np.sqrt(uu * uu + vv * vv)
        w = T - t
        col[t] = w * vals["in"].max()
        for out, pair in ((bl, ("fwd", "bwd")), (bt, ("left", "right"))):
            d = np.concatenate([dists[p] for p in pair])
            p = np.concatenate([vals[p] for p in pair])
            dmax = d.max()
            out[t] = w * (d / (dmax if dmax > 0 else 1.0) * p).max()
    return col.sum(), bl.sum(), bt.sum(), col
