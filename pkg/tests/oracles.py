"""Brute-force reference computations used only by the tests.

Nothing here shares code with the package: each oracle re-derives its answer by
sampling or exhaustive search.
"""

import math

import numpy as np


def lp_oracle(points, normals, v_pref, v_max, h=0.02, tol=1e-12):
    """Sampling argmin of |v - v_pref| over the disc and the half-planes.

    Returns ``(argmin or None, best_max_violation)``; the argmin is None when no
    sample is feasible. Samples come from a 2-D grid over the disc plus dense 1-D
    samples along every constraint line and the speed circle, since the optimum
    sits on the boundary and feasible wedges can be far thinner than any grid.
    Each 1-D family is refined three times around its winner.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    normals = np.asarray(normals, dtype=float).reshape(-1, 2)
    v_pref = np.asarray(v_pref, dtype=float)

    def violation(c):
        if len(points) == 0:
            return np.zeros(len(c))
        s = ((c[:, None, :] - points[None, :, :]) * normals[None, :, :]).sum(axis=2)
        return np.maximum(-s.min(axis=1), 0.0)

    def feasible(c):
        return c[(violation(c) <= tol) & (np.hypot(*c.T) <= v_max * (1 + tol))]

    g = np.arange(-v_max, v_max + h / 2, h)
    X, Y = np.meshgrid(g, g)
    grid = np.stack([X.ravel(), Y.ravel()], axis=1)
    grid = grid[np.hypot(*grid.T) <= v_max]
    viol = violation(grid)

    curves = [lambda t: v_max * np.stack([np.cos(t), np.sin(t)], axis=1)]
    spans = [(0.0, 2 * math.pi)]
    for p, n in zip(points, normals):
        d = np.array([-n[1], n[0]])
        foot = float(np.dot(p, d))
        off = p - foot * d  # closest point of the line to the origin
        half_sq = v_max**2 - float(np.dot(off, off))
        if half_sq <= 0:
            continue
        curves.append(lambda t, off=off, d=d: off + t[:, None] * d)
        spans.append((-math.sqrt(half_sq), math.sqrt(half_sq)))

    found = [grid[viol <= 0.0]] if (viol <= 0.0).any() else []
    for curve, (lo, hi) in zip(curves, spans):
        t = np.linspace(lo, hi, 3001)
        step = t[1] - t[0]
        for _ in range(4):
            c = curve(t)
            ok = (violation(c) <= tol) & (np.hypot(*c.T) <= v_max * (1 + tol))
            if not ok.any():
                break
            tk = t[ok][np.argmin(np.hypot(*(c[ok] - v_pref).T))]
            found.append(curve(np.array([tk])))
            t = np.linspace(tk - 20 * step, tk + 20 * step, 801)
            step = t[1] - t[0]
    if not found:
        return None, float(viol.min())
    allc = np.concatenate(found)
    if np.hypot(*v_pref) <= v_max and violation(v_pref[None])[0] <= 0.0:
        allc = np.concatenate([allc, v_pref[None]])
    return allc[np.argmin(np.hypot(*(allc - v_pref).T))], 0.0


def in_truncated_vo(v, p_rel, r, horizon):
    """True where relative velocity ``v`` (shape (K, 2)) hits disc(p_rel, r) for some t in (0, horizon]."""
    v = np.atleast_2d(v)
    vv = np.einsum("ij,ij->i", v, v)
    t = np.where(vv > 0, (v @ np.asarray(p_rel)) / np.where(vv > 0, vv, 1.0), 0.0)
    t = np.clip(t, 1e-12, horizon)
    d = np.hypot(*(v * t[:, None] - np.asarray(p_rel)).T)
    return d < r


def nearest_vo_exit(v_rel, p_rel, r, horizon, span=3.0, n=1201):
    """Closest relative velocity outside the truncated VO, found on a grid around ``v_rel``.

    Returns all grid points within one cell of the minimum distance so that ties
    (both legs equally near) can be inspected.
    """
    g = np.linspace(-span, span, n)
    X, Y = np.meshgrid(g, g)
    cand = np.stack([X.ravel(), Y.ravel()], axis=1) + np.asarray(v_rel)
    out = cand[~in_truncated_vo(cand, p_rel, r, horizon)]
    d = np.hypot(*(out - np.asarray(v_rel)).T)
    cell = g[1] - g[0]
    return out[d <= d.min() + cell], float(d.min()), cell


def straight_line_contact(pos, vel, radius, a, b, horizon, steps=400):
    """Whether a disc moving at constant ``vel`` touches segment ab within ``horizon`` (sampled in time)."""
    pos = np.asarray(pos, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    e = b - a
    t = np.linspace(0.0, horizon, steps + 1)[1:, None]
    p = pos + t * np.asarray(vel, dtype=float)
    s = np.clip(((p - a) @ e) / np.dot(e, e), 0.0, 1.0)
    return bool(np.any(np.hypot(*(p - (a + s[:, None] * e)).T) < radius))


def grid_shortest_path(start, goal, segs, clearance, res=0.05, pad=3.0, reach=5):
    """Dijkstra on a fine grid with a wide neighbour stencil (all coprime offsets up to ``reach``).

    The grid covers the start/goal bounding box grown by ``pad``. Cells closer
    than ``clearance`` to a segment are blocked, and an edge is kept only
    if points sampled along it stay clear. Start and goal snap to the nearest free cell
    and the snapping distance is added back.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import dijkstra

    segs = np.asarray(segs, dtype=float).reshape(-1, 4)
    pts = np.array([start, goal], dtype=float)
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    nx = int(math.ceil((hi[0] - lo[0]) / res)) + 1
    ny = int(math.ceil((hi[1] - lo[1]) / res)) + 1
    xs = lo[0] + res * np.arange(nx)
    ys = lo[1] + res * np.arange(ny)
    GX, GY = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([GX.ravel(), GY.ravel()], axis=1)

    def clear_mask(q):
        m = np.ones(len(q), dtype=bool)
        for s in segs:
            a = s[:2]
            e = s[2:] - a
            t = np.clip(((q - a) @ e) / (e @ e), 0.0, 1.0)
            d = np.hypot(*(q - (a + t[:, None] * e)).T)
            m &= d >= clearance
        return m

    free = clear_mask(P).reshape(nx, ny)
    offsets = [
        (i, j)
        for i in range(-reach, reach + 1)
        for j in range(-reach, reach + 1)
        if (i, j) != (0, 0) and math.gcd(abs(i), abs(j)) == 1
    ]
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, w = [], [], []
    for di, dj in offsets:
        if (di, dj) < (0, 0):
            continue  # undirected graph: one orientation per offset pair
        i0, i1 = max(0, -di), min(nx, nx - di)
        j0, j1 = max(0, -dj), min(ny, ny - dj)
        src = idx[i0:i1, j0:j1]
        dst = idx[i0 + di:i1 + di, j0 + dj:j1 + dj]
        ok = free[i0:i1, j0:j1] & free[i0 + di:i1 + di, j0 + dj:j1 + dj]
        n_sub = max(abs(di), abs(dj)) * 2
        for k in range(1, n_sub):
            f = k / n_sub
            # intermediate points of the edge must also be clear
            q = np.stack([
                xs[i0:i1][:, None] + f * di * res + 0 * ys[j0:j1][None, :],
                ys[j0:j1][None, :] + f * dj * res + 0 * xs[i0:i1][:, None],
            ], axis=-1).reshape(-1, 2)
            sel = ok.ravel()
            if not sel.any():
                break
            m = np.zeros(sel.size, dtype=bool)
            m[sel] = clear_mask(q[sel])
            ok = m.reshape(ok.shape)
        rows.append(src[ok])
        cols.append(dst[ok])
        w.append(np.full(int(ok.sum()), res * math.hypot(di, dj)))
    graph = coo_matrix(
        (np.concatenate(w), (np.concatenate(rows), np.concatenate(cols))), shape=(nx * ny, nx * ny)
    ).tocsr()
    flat_free = free.ravel()

    def snap(p):
        d = np.hypot(*(P - p).T)
        d[~flat_free] = np.inf
        k = int(np.argmin(d))
        return k, float(d[k])

    s, ds = snap(np.asarray(start))
    g, dg = snap(np.asarray(goal))
    dist = dijkstra(graph, directed=False, indices=s)
    return float(dist[g]) + ds + dg
