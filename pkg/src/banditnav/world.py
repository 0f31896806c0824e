"""Geometry primitives, the agent/obstacle/scenario model and the scenario file format."""

from __future__ import annotations

import json
import math
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class ScenarioError(ValueError):
    """Raised when a scenario document cannot be parsed or fails validation."""


class Vec2(namedtuple("_Vec2", "x y")):
    """Immutable 2D vector with finite components."""

    __slots__ = ()

    def __new__(cls, x: float, y: float) -> "Vec2":
        x = float(x)
        y = float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite vector component: ({x}, {y})")
        return super().__new__(cls, x, y)

    def __add__(self, other):  # type: ignore[override]
        return Vec2(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Vec2(self.x - other[0], self.y - other[1])

    def __mul__(self, k):  # type: ignore[override]
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __neg__(self):
        return Vec2(-self.x, -self.y)

    def dot(self, other) -> float:
        return self.x * other[0] + self.y * other[1]

    def cross(self, other) -> float:
        return self.x * other[1] - self.y * other[0]

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class AgentSpec:
    id: int
    start: Vec2
    goal: Vec2
    radius: float = 0.5
    max_speed: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "start", Vec2(*self.start))
        object.__setattr__(self, "goal", Vec2(*self.goal))
        if not self.radius > 0:
            raise ScenarioError(f"agent {self.id}: radius must be > 0, got {self.radius}")
        if not self.max_speed > 0:
            raise ScenarioError(f"agent {self.id}: max_speed must be > 0, got {self.max_speed}")


@dataclass(frozen=True)
class Obstacle:
    """An open line segment; walls are chains of these."""

    endpoints: tuple[Vec2, Vec2]

    def __post_init__(self):
        a, b = (Vec2(*p) for p in self.endpoints)
        if a == b:
            raise ScenarioError(f"obstacle endpoints coincide: {a}")
        object.__setattr__(self, "endpoints", (a, b))

    @property
    def a(self) -> Vec2:
        return self.endpoints[0]

    @property
    def b(self) -> Vec2:
        return self.endpoints[1]


@dataclass(frozen=True)
class Scenario:
    name: str
    agents: tuple[AgentSpec, ...] = ()
    obstacles: tuple[Obstacle, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def segment_array(self) -> np.ndarray:
        """Obstacles as an (M, 4) float array of ``ax, ay, bx, by`` rows."""
        return np.array([[o.a.x, o.a.y, o.b.x, o.b.y] for o in self.obstacles], dtype=np.float64).reshape(-1, 4)

    def validate(self) -> "Scenario":
        """Check id uniqueness and the non-overlapping start configuration."""
        seen = set()
        for ag in self.agents:
            if ag.id in seen:
                raise ScenarioError(f"duplicate agent id {ag.id}")
            seen.add(ag.id)
        agents = self.agents
        for i in range(len(agents)):
            ai = agents[i]
            for j in range(i + 1, len(agents)):
                aj = agents[j]
                if (ai.start - aj.start).norm() <= ai.radius + aj.radius:
                    raise ScenarioError(
                        f"agents {ai.id} and {aj.id} overlap at start"
                    )
            for k, o in enumerate(self.obstacles):
                if dist_point_segment(ai.start, o) <= ai.radius:
                    raise ScenarioError(
                        f"agent {ai.id} penetrates obstacle {k} at start"
                    )
        return self


def closest_point_segment(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> Vec2:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    return Vec2(ax + t * dx, ay + t * dy)


def dist_point_segment(p: Sequence[float], o: Obstacle) -> float:
    """Euclidean distance from ``p`` to the closest point of segment ``o``."""
    q = closest_point_segment(p, o.a, o.b)
    return math.hypot(p[0] - q.x, p[1] - q.y)


# --- scenario file format -------------------------------------------------

_TOP_FIELDS = {"name", "agents", "obstacles"}
_AGENT_FIELDS = {"id", "start", "goal", "radius", "max_speed"}
_OBSTACLE_FIELDS = {"endpoints"}


def _point(value, where: str) -> Vec2:
    if not (isinstance(value, list) and len(value) == 2):
        raise ScenarioError(f"{where}: expected [x, y], got {value!r}")
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"{where}: coordinates must be numbers, got {value!r}")
    try:
        return Vec2(*value)
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _check_fields(obj, allowed: set, required: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ScenarioError(f"{where}: missing field(s) {sorted(missing)}")


def scenario_from_dict(doc: dict) -> Scenario:
    _check_fields(doc, _TOP_FIELDS, {"name", "agents"}, "scenario")
    if not isinstance(doc["name"], str):
        raise ScenarioError("scenario.name: expected a string")
    if not isinstance(doc["agents"], list):
        raise ScenarioError("scenario.agents: expected an array")
    agents = []
    for i, a in enumerate(doc["agents"]):
        where = f"agents[{i}]"
        _check_fields(a, _AGENT_FIELDS, _AGENT_FIELDS, where)
        if isinstance(a["id"], bool) or not isinstance(a["id"], int):
            raise ScenarioError(f"{where}.id: expected an integer")
        agents.append(
            AgentSpec(
                id=a["id"],
                start=_point(a["start"], f"{where}.start"),
                goal=_point(a["goal"], f"{where}.goal"),
                radius=_number(a["radius"], f"{where}.radius"),
                max_speed=_number(a["max_speed"], f"{where}.max_speed"),
            )
        )
    obstacles = []
    raw_obstacles = doc.get("obstacles", [])
    if not isinstance(raw_obstacles, list):
        raise ScenarioError("scenario.obstacles: expected an array")
    for i, o in enumerate(raw_obstacles):
        where = f"obstacles[{i}]"
        _check_fields(o, _OBSTACLE_FIELDS, _OBSTACLE_FIELDS, where)
        ends = o["endpoints"]
        if not (isinstance(ends, list) and len(ends) == 2):
            raise ScenarioError(f"{where}.endpoints: expected two points")
        obstacles.append(
            Obstacle((_point(ends[0], f"{where}.endpoints[0]"), _point(ends[1], f"{where}.endpoints[1]")))
        )
    return Scenario(doc["name"], tuple(agents), tuple(obstacles)).validate()


def load_scenario(source: str) -> Scenario:
    """Parse and validate a scenario JSON document.

    Parse errors carry the line/column of the offending token; validation
    errors name the violated invariant.
    """
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "agents": [
            {
                "id": a.id,
                "start": [a.start.x, a.start.y],
                "goal": [a.goal.x, a.goal.y],
                "radius": a.radius,
                "max_speed": a.max_speed,
            }
            for a in sc.agents
        ],
        "obstacles": [
            {"endpoints": [[o.a.x, o.a.y], [o.b.x, o.b.y]]} for o in sc.obstacles
        ],
    }


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=1)


def read_scenario_file(path: str | Path) -> Scenario:
    return load_scenario(Path(path).read_text(encoding="utf-8"))


def polyline(points: Iterable[Sequence[float]], closed: bool = False) -> list[Obstacle]:
    """Chain consecutive points into wall segments."""
    pts = [Vec2(*p) for p in points]
    if closed:
        pts.append(pts[0])
    return [Obstacle((pts[i], pts[i + 1])) for i in range(len(pts) - 1)]
