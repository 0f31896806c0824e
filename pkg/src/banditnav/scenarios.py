"""Procedural generators for the eight built-in navigation scenarios.

All agents use radius 0.5 m and max speed 1.5 m/s. Dimensions are chosen
here (see the README scenario gallery); they are design choices, not
measurements.
"""

from __future__ import annotations

import math

import numpy as np

from .world import AgentSpec, Obstacle, Scenario, ScenarioError, polyline

RADIUS = 0.5
SPEED = 1.5

DEFAULT_AGENTS = {
    "congested": 32,
    "deadlock": 10,
    "incoming": 16,
    "blocks": 5,
    "bidirectional": 18,
    "circle": 80,
    "intersection": 80,
    "crowd": 400,
}
SCENARIO_NAMES = tuple(DEFAULT_AGENTS)


def _agents(starts, goals) -> tuple[AgentSpec, ...]:
    return tuple(AgentSpec(i, tuple(s), tuple(g), RADIUS, SPEED) for i, (s, g) in enumerate(zip(starts, goals)))


def _box(x0, y0, x1, y1) -> list[Obstacle]:
    return polyline([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], closed=True)


def congested(n: int = 32) -> Scenario:
    """Agents packed in a hallway (open on the left) right behind a 1.8 m exit."""
    if not 1 <= n <= 64:
        raise ScenarioError("congested supports 1..64 agents")
    rows = 8
    half_w = 4.5
    starts = []
    for k in range(n):
        col, row = divmod(k, rows)
        starts.append((-1.2 - 1.2 * col, -3.85 + 1.1 * row))
    # goals fan out just past the exit so no goal direction points squarely into the wall
    goals = [(8.0 + 1.0 * (k // rows), -2.0 + 4.0 * (k % rows) / (rows - 1)) for k in range(n)]
    walls = polyline([(-14.0, half_w), (0.0, half_w), (0.0, 0.9)])
    walls += polyline([(0.0, -0.9), (0.0, -half_w), (-14.0, -half_w)])
    return Scenario("congested", _agents(starts, goals), tuple(walls), {"exit_width": 1.8})


def deadlock(n: int = 10, length: float = 20.0, funnel: float = 3.0) -> Scenario:
    """Two closed rooms joined by a 20 m corridor only 1.1 m wide; half the agents start on each side."""
    if n < 2 or n % 2 or n > 16:
        raise ScenarioError("deadlock supports an even count in 2..16")
    hw = 0.55  # 1.1 * 2r / 2
    cx = length / 2
    room = 10.0
    f = funnel
    walls = []
    for sx in (-1.0, 1.0):
        # room wall with a flared mouth leading into the corridor
        walls += polyline([
            (sx * cx, hw), (sx * (cx + f), hw + f), (sx * (cx + f), 5.0), (sx * (cx + f + room), 5.0),
            (sx * (cx + f + room), -5.0), (sx * (cx + f), -5.0), (sx * (cx + f), -hw - f), (sx * cx, -hw),
        ])
    walls += polyline([(-cx, hw), (cx, hw)]) + polyline([(-cx, -hw), (cx, -hw)])
    side = n // 2
    # single file on the corridor axis, so every goal direction points into the corridor
    starts, goals = [], []
    for sign in (-1.0, 1.0):
        for k in range(side):
            x = sign * (cx + funnel + 1.5 + 1.1 * k)
            starts.append((x, 0.0))
            goals.append((-x, 0.0))
    return Scenario("deadlock", _agents(starts, goals), tuple(walls), {"corridor_width": 2 * hw})


def incoming(n: int = 16) -> Scenario:
    """One agent heading right through a block of n-1 agents heading left; no obstacles."""
    if n < 1:
        raise ScenarioError("incoming needs at least one agent")
    starts = [(-10.0, 0.0)]
    goals = [(10.0, 0.0)]
    group = n - 1
    rows = 3 if group >= 3 else max(group, 1)
    for k in range(group):
        col, row = divmod(k, rows)
        y = (row - (rows - 1) / 2) * 1.2
        x = 3.0 + 1.2 * col
        starts.append((x, y))
        goals.append((x - 20.0, y))
    return Scenario("incoming", _agents(starts, goals), (), {})


def blocks(n: int = 5) -> Scenario:
    """A column of 2 m square blocks, each squarely on one agent's straight path, with 1.5 m gaps."""
    if not 1 <= n <= 9:
        raise ScenarioError("blocks supports 1..9 agents")
    pitch = 3.5
    ys = [(k - (n - 1) / 2) * pitch for k in range(n)]
    starts = [(-10.0, y) for y in ys]
    goals = [(10.0, y) for y in ys]
    walls = []
    for y in ys:
        walls += _box(-1.0, y - 1.0, 1.0, y + 1.0)
    return Scenario("blocks", _agents(starts, goals), tuple(walls), {"block_size": 2.0, "gap": pitch - 2.0})


def bidirectional(n: int = 18) -> Scenario:
    """Two groups crossing in opposite directions along a 6 m wide corridor."""
    if n < 2 or n % 2 or n > 40:
        raise ScenarioError("bidirectional supports an even count in 2..40")
    half = n // 2
    hw = 3.0
    walls = polyline([(-20.0, hw), (20.0, hw)]) + polyline([(-20.0, -hw), (20.0, -hw)])
    starts, goals = [], []
    for sign in (-1.0, 1.0):
        for k in range(half):
            col, row = divmod(k, 3)
            y = (row - 1) * 1.5
            x = sign * (6.0 + 1.2 * col)
            starts.append((x, y))
            goals.append((-sign * 14.0 - sign * 1.2 * col, y))
    return Scenario("bidirectional", _agents(starts, goals), tuple(walls), {"corridor_width": 2 * hw})


def circle(n: int = 80) -> Scenario:
    """Agents evenly spaced on a circle, each heading to its antipode."""
    if n < 1:
        raise ScenarioError("circle needs at least one agent")
    radius = max(20.0, 1.6 * n / (2 * math.pi))
    starts, goals = [], []
    for k in range(n):
        a = 2 * math.pi * k / n
        c, s = math.cos(a), math.sin(a)
        starts.append((radius * c, radius * s))
        goals.append((-radius * c, -radius * s))
    return Scenario("circle", _agents(starts, goals), (), {"circle_radius": radius})


def intersection(n: int = 80) -> Scenario:
    """Four streams in 6 m wide perpendicular corridors crossing at the origin."""
    if n < 4:
        raise ScenarioError("intersection needs at least 4 agents")
    hw = 3.0
    lanes = (-1.8, -0.6, 0.6, 1.8)
    per = [n // 4 + (1 if s < n % 4 else 0) for s in range(4)]
    rows = math.ceil(max(per) / len(lanes))
    arm = 8.0 + 1.2 * rows + 4.0
    walls = []
    for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        walls += polyline([(sx * arm, sy * hw), (sx * hw, sy * hw), (sx * hw, sy * arm)])
    starts, goals = [], []
    # stream direction unit vectors: east, north, west, south
    for s, (dx, dy) in enumerate(((1, 0), (0, 1), (-1, 0), (0, -1))):
        for k in range(per[s]):
            row, lane = divmod(k, len(lanes))
            back = 8.0 + 1.2 * row
            off = lanes[lane]
            # lateral offset is measured to the right of the travel direction
            lx, ly = dy, -dx
            starts.append((-dx * back + lx * off, -dy * back + ly * off))
            goals.append((dx * back + lx * off, dy * back + ly * off))
    return Scenario("intersection", _agents(starts, goals), tuple(walls), {"corridor_width": 2 * hw, "arm": arm})


def crowd(n: int = 400, seed: int = 0, spacing: float = 1.8) -> Scenario:
    """Random starts and goals inside a closed square room sized to the agent count."""
    if not 1 <= n <= 2000:
        raise ScenarioError("crowd supports 1..2000 agents")
    side = max(10.0, spacing * math.sqrt(n))
    h = side / 2
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC0,)))
    margin = RADIUS + 0.3
    min_sep = 2 * RADIUS + 0.2

    def place() -> np.ndarray:
        pts = np.empty((n, 2))
        k = 0
        tries = 0
        while k < n:
            tries += 1
            if tries > 200 * n:
                raise ScenarioError(f"could not place {n} agents in the crowd room")
            p = rng.uniform(-h + margin, h - margin, size=2)
            if k and np.min(np.hypot(*(pts[:k] - p).T)) < min_sep:
                continue
            pts[k] = p
            k += 1
        return pts

    starts = place()
    goals = place()
    walls = _box(-h, -h, h, h)
    return Scenario("crowd", _agents(starts.tolist(), goals.tolist()), tuple(walls), {"room_side": side})


def builtin_scenario(name: str, n_agents: int | None = None, seed: int = 0) -> Scenario:
    """Generate a named scenario; only ``crowd`` depends on ``seed``."""
    if name not in DEFAULT_AGENTS:
        raise ScenarioError(f"unknown scenario {name!r}; valid names: {', '.join(SCENARIO_NAMES)}")
    n = DEFAULT_AGENTS[name] if n_agents is None else int(n_agents)
    gen = {
        "congested": congested,
        "deadlock": deadlock,
        "incoming": incoming,
        "blocks": blocks,
        "bidirectional": bidirectional,
        "circle": circle,
        "intersection": intersection,
    }
    sc = crowd(n, seed) if name == "crowd" else gen[name](n)
    return sc.validate()
