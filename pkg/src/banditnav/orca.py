"""ORCA half-plane construction and the nearest-point velocity LP.

The compiled kernels work on raw floats and ``(m, 4)`` line arrays so the
simulation loop can call them without Python overhead.  A line row is
``(px, py, dx, dy)``: a boundary point and a unit direction, with the
permitted side on the left of the direction.  The public wrappers translate
to :class:`HalfPlane` (boundary point + unit normal into the permitted side).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .world import Obstacle, Vec2

EPSILON = 1e-10


@dataclass(frozen=True)
class HalfPlane:
    """Permitted set ``{v : (v - point) . normal >= 0}``."""

    point: Vec2
    normal: Vec2
    u: Vec2 | None = None
    colliding: bool = False

    def __post_init__(self):
        object.__setattr__(self, "point", Vec2(*self.point))
        n = Vec2(*self.normal)
        length = n.norm()
        if abs(length - 1.0) > 1e-9:
            raise ValueError(f"half-plane normal must be unit length, got |n|={length}")
        object.__setattr__(self, "normal", n)
        if self.u is not None:
            object.__setattr__(self, "u", Vec2(*self.u))

    def slack(self, v: Sequence[float]) -> float:
        return (v[0] - self.point.x) * self.normal.x + (v[1] - self.point.y) * self.normal.y

    def contains(self, v: Sequence[float], tol: float = 0.0) -> bool:
        return self.slack(v) >= -tol


@dataclass(frozen=True)
class NeighborView:
    """What agent i senses about neighbor j.

    ``relative_position`` is ``p_j - p_i``; ``relative_velocity`` is ``v_i - v_j``.
    """

    relative_position: Vec2
    relative_velocity: Vec2
    combined_radius: float
    neighbor_velocity: Vec2 = Vec2(0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "relative_position", Vec2(*self.relative_position))
        object.__setattr__(self, "relative_velocity", Vec2(*self.relative_velocity))
        object.__setattr__(self, "neighbor_velocity", Vec2(*self.neighbor_velocity))
        if not self.combined_radius > 0:
            raise ValueError("combined_radius must be > 0")


class LPResult(NamedTuple):
    velocity: Vec2
    feasible: bool


# --- compiled kernels ------------------------------------------------------


@njit(cache=True)
def _det(ax, ay, bx, by):
    return ax * by - ay * bx


@njit(cache=True)
def agent_line(rpx, rpy, rvx, rvy, combined_radius, vx, vy, inv_horizon, inv_dt):
    """ORCA line for one neighbor.

    Returns ``(px, py, dx, dy, ux, uy, colliding)`` where ``(px, py)`` is
    ``v_i + u/2`` and ``(dx, dy)`` the line direction.
    """
    dist_sq = rpx * rpx + rpy * rpy
    r_sq = combined_radius * combined_radius
    colliding = False
    if dist_sq > r_sq:
        wx = rvx - inv_horizon * rpx
        wy = rvy - inv_horizon * rpy
        w_len_sq = wx * wx + wy * wy
        dot1 = wx * rpx + wy * rpy
        if dot1 < 0.0 and dot1 * dot1 > r_sq * w_len_sq:
            # nearest boundary point lies on the truncation arc
            w_len = math.sqrt(w_len_sq)
            uwx = wx / w_len
            uwy = wy / w_len
            dx = uwy
            dy = -uwx
            k = combined_radius * inv_horizon - w_len
            ux = k * uwx
            uy = k * uwy
        else:
            leg = math.sqrt(dist_sq - r_sq)
            if _det(rpx, rpy, wx, wy) > 0.0:
                dx = (rpx * leg - rpy * combined_radius) / dist_sq
                dy = (rpx * combined_radius + rpy * leg) / dist_sq
            else:
                # also taken on an exact tie: pass with cross(p_rel, u) < 0
                dx = -(rpx * leg + rpy * combined_radius) / dist_sq
                dy = -(-rpx * combined_radius + rpy * leg) / dist_sq
            dot2 = rvx * dx + rvy * dy
            ux = dot2 * dx - rvx
            uy = dot2 * dy - rvy
    else:
        colliding = True
        wx = rvx - inv_dt * rpx
        wy = rvy - inv_dt * rpy
        w_len = math.sqrt(wx * wx + wy * wy)
        if w_len < EPSILON:
            # coincident centres with equal velocities; separate along a fixed axis
            uwx, uwy, w_len = -1.0, 0.0, 0.0
        else:
            uwx = wx / w_len
            uwy = wy / w_len
        dx = uwy
        dy = -uwx
        k = combined_radius * inv_dt - w_len
        ux = k * uwx
        uy = k * uwy
    return vx + 0.5 * ux, vy + 0.5 * uy, dx, dy, ux, uy, colliding


@njit(cache=True)
def _seg_closest(ax, ay, bx, by, px, py):
    ex = bx - ax
    ey = by - ay
    t = ((px - ax) * ex + (py - ay) * ey) / (ex * ex + ey * ey)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return ax + t * ex, ay + t * ey


@njit(cache=True)
def _tangents(cx, cy, rho):
    """Unit left (ccw) and right (cw) tangent directions from the origin to disc(c, rho)."""
    d_sq = cx * cx + cy * cy
    leg_sq = d_sq - rho * rho
    leg = math.sqrt(leg_sq) if leg_sq > 0.0 else 0.0
    lx = (cx * leg - cy * rho) / d_sq
    ly = (cx * rho + cy * leg) / d_sq
    rx = (cx * leg + cy * rho) / d_sq
    ry = (-cx * rho + cy * leg) / d_sq
    return lx, ly, rx, ry


@njit(cache=True)
def obstacle_line(px, py, vx, vy, radius, ax, ay, bx, by, horizon, inv_dt, v_max):
    """Half-plane excluding every velocity that reaches segment ``ab`` within ``horizon``.

    The agent takes full responsibility.  Returns
    ``(present, bpx, bpy, nx, ny, penetrating)`` with the boundary point and
    the unit normal into the permitted side.
    """
    rax = ax - px
    ray = ay - py
    rbx = bx - px
    rby = by - py
    qx, qy = _seg_closest(rax, ray, rbx, rby, 0.0, 0.0)
    dist0 = math.sqrt(qx * qx + qy * qy)

    if dist0 < radius:
        # overlap: push out along the separation direction within one step
        if dist0 > EPSILON:
            nx = -qx / dist0
            ny = -qy / dist0
        else:
            ex = rbx - rax
            ey = rby - ray
            el = math.sqrt(ex * ex + ey * ey)
            nx = -ey / el
            ny = ex / el
        need = (radius - dist0) * inv_dt
        return True, nx * need, ny * need, nx, ny, True

    if dist0 - radius > v_max * horizon:
        return False, 0.0, 0.0, 0.0, 0.0, False

    # velocity obstacle = {s * K : s >= 1} with K = capsule(seg, radius) / horizon,
    # written as P (+) disc(rho) with P = seg/horizon + cone(K)
    inv_h = 1.0 / horizon
    Ax = rax * inv_h
    Ay = ray * inv_h
    Bx = rbx * inv_h
    By = rby * inv_h
    rho = radius * inv_h

    laX, laY, raX, raY = _tangents(Ax, Ay, rho)
    lbX, lbY, rbX, rbY = _tangents(Bx, By, rho)

    if _det(laX, laY, lbX, lbY) > 0.0:
        llx, lly, clx, cly = lbX, lbY, Bx, By
        left_is_a = False
    else:
        llx, lly, clx, cly = laX, laY, Ax, Ay
        left_is_a = True
    if _det(rbX, rbY, raX, raY) < 0.0:
        lrx, lry, crx, cry = raX, raY, Ax, Ay
        right_is_a = True
    else:
        lrx, lry, crx, cry = rbX, rbY, Bx, By
        right_is_a = False

    # outward facet normals
    nLx, nLy = -lly, llx
    nRx, nRy = lry, -lrx
    has_seg = left_is_a != right_is_a
    nSx = 0.0
    nSy = 0.0
    if has_seg:
        ex = crx - clx
        ey = cry - cly
        el = math.sqrt(ex * ex + ey * ey)
        nSx = -ey / el
        nSy = ex / el
        # the cap facet faces the origin; legs on different end discs imply
        # the origin is at least rho from the segment's line
        s = nSx * clx + nSy * cly
        if s > 0.0:
            nSx = -nSx
            nSy = -nSy
        elif s > -1e-12:
            has_seg = False

    sL = nLx * (vx - clx) + nLy * (vy - cly)
    sR = nRx * (vx - crx) + nRy * (vy - cry)
    sS = -1e300
    if has_seg:
        sS = nSx * (vx - clx) + nSy * (vy - cly)

    if sL <= 0.0 and sR <= 0.0 and sS <= 0.0:
        # inside P: leave through the nearest facet
        if sL >= sR and sL >= sS:
            fx, fy, s = nLx, nLy, sL
        elif sR >= sS:
            fx, fy, s = nRx, nRy, sR
        else:
            fx, fy, s = nSx, nSy, sS
        step = rho - s
        return True, vx + step * fx, vy + step * fy, fx, fy, False

    # outside P: project onto the boundary pieces
    t = (vx - clx) * llx + (vy - cly) * lly
    if t < 0.0:
        t = 0.0
    bqx = clx + t * llx
    bqy = cly + t * lly
    best = (vx - bqx) ** 2 + (vy - bqy) ** 2
    t = (vx - crx) * lrx + (vy - cry) * lry
    if t < 0.0:
        t = 0.0
    cqx = crx + t * lrx
    cqy = cry + t * lry
    d = (vx - cqx) ** 2 + (vy - cqy) ** 2
    if d < best:
        best, bqx, bqy = d, cqx, cqy
    if has_seg:
        cqx, cqy = _seg_closest(clx, cly, crx, cry, vx, vy)
        d = (vx - cqx) ** 2 + (vy - cqy) ** 2
        if d < best:
            best, bqx, bqy = d, cqx, cqy
    dq = math.sqrt(best)
    nx = (vx - bqx) / dq
    ny = (vy - bqy) / dq
    return True, bqx + rho * nx, bqy + rho * ny, nx, ny, False


@njit(cache=True)
def _lp1(lines, line_no, radius, opt_x, opt_y, direction_opt, res):
    px = lines[line_no, 0]
    py = lines[line_no, 1]
    dx = lines[line_no, 2]
    dy = lines[line_no, 3]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        return False
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        denom = _det(dx, dy, lines[i, 2], lines[i, 3])
        numer = _det(lines[i, 2], lines[i, 3], px - lines[i, 0], py - lines[i, 1])
        if abs(denom) <= EPSILON:
            # parallel boundaries; tolerate rounding on lines through the same point
            if numer < -EPSILON:
                return False
            continue
        t = numer / denom
        if denom >= 0.0:
            if t < t_right:
                t_right = t
        else:
            if t > t_left:
                t_left = t
        if t_left > t_right:
            return False
    if direction_opt:
        if opt_x * dx + opt_y * dy > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = dx * (opt_x - px) + dy * (opt_y - py)
        if t < t_left:
            t = t_left
        elif t > t_right:
            t = t_right
    res[0] = px + t * dx
    res[1] = py + t * dy
    return True


@njit(cache=True)
def _lp2(lines, n_lines, radius, opt_x, opt_y, direction_opt, res):
    if direction_opt:
        res[0] = opt_x * radius
        res[1] = opt_y * radius
    elif opt_x * opt_x + opt_y * opt_y > radius * radius:
        n = math.sqrt(opt_x * opt_x + opt_y * opt_y)
        res[0] = opt_x / n * radius
        res[1] = opt_y / n * radius
    else:
        res[0] = opt_x
        res[1] = opt_y
    for i in range(n_lines):
        if _det(lines[i, 2], lines[i, 3], lines[i, 0] - res[0], lines[i, 1] - res[1]) > 0.0:
            tx = res[0]
            ty = res[1]
            if not _lp1(lines, i, radius, opt_x, opt_y, direction_opt, res):
                res[0] = tx
                res[1] = ty
                return i
    return n_lines


@njit(cache=True)
def _lp3(lines, n_lines, n_hard, begin, radius, res, scratch):
    distance = 0.0
    tmp = np.empty(2)
    for i in range(begin, n_lines):
        dix = lines[i, 2]
        diy = lines[i, 3]
        if _det(dix, diy, lines[i, 0] - res[0], lines[i, 1] - res[1]) > distance:
            m = 0
            for j in range(n_hard):
                scratch[m, 0] = lines[j, 0]
                scratch[m, 1] = lines[j, 1]
                scratch[m, 2] = lines[j, 2]
                scratch[m, 3] = lines[j, 3]
                m += 1
            for j in range(n_hard, i):
                djx = lines[j, 2]
                djy = lines[j, 3]
                determinant = _det(dix, diy, djx, djy)
                if abs(determinant) <= EPSILON:
                    if dix * djx + diy * djy > 0.0:
                        continue
                    ptx = 0.5 * (lines[i, 0] + lines[j, 0])
                    pty = 0.5 * (lines[i, 1] + lines[j, 1])
                else:
                    k = _det(djx, djy, lines[i, 0] - lines[j, 0], lines[i, 1] - lines[j, 1]) / determinant
                    ptx = lines[i, 0] + k * dix
                    pty = lines[i, 1] + k * diy
                ddx = djx - dix
                ddy = djy - diy
                dl = math.sqrt(ddx * ddx + ddy * ddy)
                scratch[m, 0] = ptx
                scratch[m, 1] = pty
                scratch[m, 2] = ddx / dl
                scratch[m, 3] = ddy / dl
                m += 1
            tmp[0] = res[0]
            tmp[1] = res[1]
            if _lp2(scratch, m, radius, -diy, dix, True, res) < m:
                res[0] = tmp[0]
                res[1] = tmp[1]
            distance = _det(dix, diy, lines[i, 0] - res[0], lines[i, 1] - res[1])


@njit(cache=True)
def solve_lines(lines, n_lines, n_hard, pref_x, pref_y, v_max, res, scratch):
    """Nearest point to ``pref`` in the disc of radius ``v_max`` intersected with the lines.

    The first ``n_hard`` lines are kept hard by the infeasible fallback.
    Returns True when the LP was feasible.
    """
    fail = _lp2(lines, n_lines, v_max, pref_x, pref_y, False, res)
    if fail < n_lines:
        # a failure inside the hard block means the hard lines alone conflict: relax them too
        _lp3(lines, n_lines, n_hard if fail >= n_hard else 0, fail, v_max, res, scratch)
        return False
    return True


# --- public API ------------------------------------------------------------


def _line_to_halfplane(px, py, dx, dy, u=None, colliding=False) -> HalfPlane:
    return HalfPlane(Vec2(px, py), Vec2(-dy, dx), None if u is None else Vec2(*u), colliding)


def agent_halfplane(view: NeighborView, horizon: float = 5.0, dt: float = 0.05) -> HalfPlane:
    """Reciprocal ORCA constraint on agent i induced by neighbor j.

    ``u`` on the result is the smallest change of relative velocity that
    leaves the velocity obstacle truncated at ``horizon``; the boundary
    passes through ``v_i + u/2``.  Overlapping agents get the one-step
    separation constraint and ``colliding=True``.
    """
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    rp = view.relative_position
    rv = view.relative_velocity
    vi = rv + view.neighbor_velocity
    px, py, dx, dy, ux, uy, colliding = agent_line(
        rp.x, rp.y, rv.x, rv.y, float(view.combined_radius), vi.x, vi.y, 1.0 / horizon, 1.0 / dt
    )
    return _line_to_halfplane(px, py, dx, dy, (ux, uy), colliding)


def obstacle_halfplane(
    position: Sequence[float],
    velocity: Sequence[float],
    radius: float,
    obstacle: Obstacle,
    horizon: float = 1.0,
    max_speed: float = 1.5,
    dt: float = 0.05,
) -> HalfPlane | None:
    """ORCA constraint for a static segment, or None when it is out of reach."""
    a, b = obstacle.endpoints
    present, px, py, nx, ny, penetrating = obstacle_line(
        float(position[0]), float(position[1]), float(velocity[0]), float(velocity[1]),
        float(radius), a.x, a.y, b.x, b.y, float(horizon), 1.0 / dt, float(max_speed),
    )
    if not present:
        return None
    return HalfPlane(Vec2(px, py), Vec2(nx, ny), None, penetrating)


def halfplanes_to_lines(constraints: Sequence[HalfPlane]) -> np.ndarray:
    lines = np.empty((len(constraints), 4))
    for i, h in enumerate(constraints):
        lines[i] = (h.point.x, h.point.y, h.normal.y, -h.normal.x)
    return lines


def solve_lp(
    constraints: Sequence[HalfPlane],
    v_pref: Sequence[float],
    v_max: float,
    n_hard: int = 0,
) -> LPResult:
    """Velocity closest to ``v_pref`` inside every half-plane and the speed disc.

    When the constraints are jointly infeasible the result minimises the
    largest violation of constraints ``n_hard:`` while keeping the first
    ``n_hard`` satisfied, and ``feasible`` is False.
    """
    if not v_max > 0:
        raise ValueError("v_max must be > 0")
    lines = halfplanes_to_lines(constraints)
    res = np.zeros(2)
    scratch = np.empty((max(len(constraints), 1), 4))
    ok = solve_lines(lines, len(constraints), n_hard, float(v_pref[0]), float(v_pref[1]), float(v_max), res, scratch)
    return LPResult(Vec2(res[0], res[1]), bool(ok))
