"""Per-agent bandit layer: action sets, rewards, the reward window and arm selection."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .world import Vec2

SOFTMAX, EPSILON_GREEDY, UCB = 0, 1, 2
STRATEGIES = {"softmax": SOFTMAX, "epsilon_greedy": EPSILON_GREEDY, "ucb": UCB}


@dataclass(frozen=True)
class Action:
    """Preferred-velocity template relative to the current goal direction.

    ``angle_offset`` is in radians, counterclockwise positive.
    """

    angle_offset: float
    speed: float = 1.5

    def __post_init__(self):
        if not (-math.pi - 1e-12 <= self.angle_offset <= math.pi + 1e-12):
            raise ValueError(f"angle_offset {self.angle_offset} outside [-pi, pi]")
        if not self.speed >= 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")

    @property
    def angle_deg(self) -> float:
        return math.degrees(self.angle_offset)


@dataclass(frozen=True)
class ActionSet:
    actions: tuple[Action, ...]
    goal_action_index: int = 0
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.actions:
            raise ValueError("action set must not be empty")
        if not 0 <= self.goal_action_index < len(self.actions):
            raise ValueError("goal_action_index out of range")
        if self.actions[self.goal_action_index].angle_offset != 0.0:
            raise ValueError("the goal action must have zero angle offset")

    def __len__(self) -> int:
        return len(self.actions)

    def angles(self) -> np.ndarray:
        return np.array([a.angle_offset for a in self.actions], dtype=np.float64)

    def speeds(self) -> np.ndarray:
        return np.array([a.speed for a in self.actions], dtype=np.float64)

    @classmethod
    def from_degrees(cls, angles_deg: Sequence[float], speed: float = 1.5, name: str = "custom") -> "ActionSet":
        acts = [Action(math.radians(a), speed) for a in angles_deg]
        goal = next((i for i, a in enumerate(acts) if a.angle_offset == 0.0), None)
        if goal is None:
            raise ValueError("action set needs a zero-offset goal action")
        return cls(tuple(acts), goal, name)

    def to_json(self) -> str:
        return json.dumps(
            [{"angle_deg": round(a.angle_deg, 10), "speed": a.speed} for a in self.actions], indent=1
        )


def load_action_set(source: str, name: str = "custom") -> ActionSet:
    """Parse the action-set JSON array of ``{angle_deg, speed}``."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ValueError(f"action set parse error at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, list) or not doc:
        raise ValueError("action set must be a non-empty JSON array")
    acts = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict) or set(item) != {"angle_deg", "speed"}:
            raise ValueError(f"action {i}: expected exactly {{angle_deg, speed}}")
        acts.append(Action(math.radians(float(item["angle_deg"])), float(item["speed"])))
    goal = next((i for i, a in enumerate(acts) if a.angle_offset == 0.0), None)
    if goal is None:
        raise ValueError("action set needs a zero-offset goal action")
    return ActionSet(tuple(acts), goal, name)


SAMPLE_SET = ActionSet.from_degrees([0, 45, 90, 135, -45, -90, -135, 180], name="sample")
GOAL_ONLY_SET = ActionSet.from_degrees([0], name="goal")


def builtin_action_set(name: str) -> ActionSet:
    if name == "sample":
        return SAMPLE_SET
    if name in ("goal", "orca"):
        return GOAL_ONLY_SET
    if name == "multi":
        text = resources.files("banditnav").joinpath("data/multi_actions.json").read_text(encoding="utf-8")
        return load_action_set(text, name="multi")
    raise KeyError(name)


def resolve_action_set(ref: str) -> ActionSet:
    """A built-in name (sample, multi, goal) or a path to an action-set file."""
    try:
        return builtin_action_set(ref)
    except KeyError:
        pass
    path = Path(ref)
    if not path.exists():
        raise ValueError(f"unknown action set {ref!r} (use sample, multi, goal or a file path)")
    return load_action_set(path.read_text(encoding="utf-8"), name=path.stem)


@dataclass(frozen=True)
class SelectionConfig:
    strategy: str = "softmax"
    temperature: float = 0.2
    epsilon: float = 0.1
    gamma: float = 0.4
    window_length: float = 2.0
    ucb_c: float = 1.0
    normalize_rewards: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {sorted(STRATEGIES)}")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must be in [0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must be in [0, 1)")
        if not self.window_length > 0:
            raise ValueError("window_length must be > 0")

    @property
    def strategy_code(self) -> int:
        return STRATEGIES[self.strategy]


class RewardWindow:
    """Most recent (reward, timestamp) per action; stale entries value as zero."""

    def __init__(self, n_actions: int, window_length: float = 2.0):
        self.window_length = window_length
        self.rewards = np.zeros(n_actions)
        self.stamps = np.full(n_actions, -np.inf)

    def record(self, action: int, reward: float, t: float) -> None:
        self.rewards[action] = reward
        self.stamps[action] = t

    def values(self, now: float) -> np.ndarray:
        return window_values(self.rewards, self.stamps, now, self.window_length)


# --- rewards ---------------------------------------------------------------


def _unit_to_goal(position, goal):
    dx = goal[0] - position[0]
    dy = goal[1] - position[1]
    d = math.hypot(dx, dy)
    if d == 0.0:
        return None
    return dx / d, dy / d


def preferred_velocity(action: Action, position: Sequence[float], goal: Sequence[float]) -> Vec2:
    """Action template turned into a velocity: speed at ``angle_offset`` from the goal direction."""
    e = _unit_to_goal(position, goal)
    if e is None:
        return Vec2(0.0, 0.0)
    c = math.cos(action.angle_offset)
    s = math.sin(action.angle_offset)
    return Vec2(action.speed * (c * e[0] - s * e[1]), action.speed * (s * e[0] + c * e[1]))


def goal_reward(v_new: Sequence[float], position: Sequence[float], goal: Sequence[float]) -> float:
    e = _unit_to_goal(position, goal)
    if e is None:
        return 0.0
    return v_new[0] * e[0] + v_new[1] * e[1]


def polite_reward(v_new: Sequence[float], v_pref: Sequence[float]) -> float:
    return v_new[0] * v_pref[0] + v_new[1] * v_pref[1]


def combined_reward(r_goal: float, r_polite: float, gamma: float) -> float:
    if not 0 <= gamma < 1:
        raise ValueError("gamma must be in [0, 1)")
    return (1.0 - gamma) * r_goal + gamma * r_polite


# --- values and selection (compiled core shared with the engine) ------------


@njit(cache=True)
def window_values_into(rewards, stamps, now, window, out):
    for a in range(rewards.shape[0]):
        if now - stamps[a] <= window:
            out[a] = rewards[a]
        else:
            out[a] = 0.0


@njit(cache=True)
def softmax_into(values, tau, out):
    n = values.shape[0]
    m = values[0]
    for a in range(1, n):
        if values[a] > m:
            m = values[a]
    total = 0.0
    for a in range(n):
        out[a] = math.exp((values[a] - m) / tau)
        total += out[a]
    for a in range(n):
        out[a] /= total


@njit(cache=True)
def _argmax(x):
    best = 0
    for a in range(1, x.shape[0]):
        if x[a] > x[best]:
            best = a
    return best


@njit(cache=True)
def select_core(values, strategy, tau, eps, ucb_c, counts, total, u, scratch):
    """Index drawn by ``strategy`` using the single uniform ``u`` in [0, 1)."""
    n = values.shape[0]
    if strategy == 0:
        softmax_into(values, tau, scratch)
        acc = 0.0
        for a in range(n):
            acc += scratch[a]
            if u < acc:
                return a
        # u landed in the rounding gap above the last cumulative sum
        for a in range(n - 1, -1, -1):
            if scratch[a] > 0.0:
                return a
        return n - 1
    if strategy == 1:
        if u < eps:
            k = int(u / eps * n)
            return k if k < n else n - 1
        return _argmax(values)
    for a in range(n):
        if counts[a] == 0:
            return a
    log_t = math.log(max(total, 1))
    for a in range(n):
        scratch[a] = values[a] + ucb_c * math.sqrt(2.0 * log_t / counts[a])
    return _argmax(scratch)


def window_values(rewards, stamps, now: float, window: float) -> np.ndarray:
    out = np.empty(len(rewards))
    window_values_into(np.asarray(rewards, dtype=np.float64), np.asarray(stamps, dtype=np.float64), float(now), float(window), out)
    return out


def action_values(window: RewardWindow, now: float, n_actions: int) -> list[float]:
    """Last reward per action if sampled within the window, else 0."""
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    vals = window.values(now)
    return [float(v) for v in vals[:n_actions]] + [0.0] * max(0, n_actions - len(vals))


def softmax_probs(values: Sequence[float], tau: float = 0.2) -> np.ndarray:
    """Boltzmann probabilities ``exp(v/tau) / sum exp(v/tau)``."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("values must be non-empty and finite")
    out = np.empty_like(v)
    softmax_into(v, float(tau), out)
    return out


def select_action(
    values: Sequence[float],
    cfg: SelectionConfig,
    rng: np.random.Generator,
    counts: Sequence[int] | None = None,
    total_pulls: int = 0,
) -> int:
    """Draw an arm index per ``cfg.strategy``; consumes exactly one uniform from ``rng``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("values must be non-empty")
    c = np.zeros(v.size, dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
    u = float(rng.random())
    return int(
        select_core(v, cfg.strategy_code, cfg.temperature, cfg.epsilon, cfg.ucb_c, c, int(total_pulls), u, np.empty(v.size))
    )
