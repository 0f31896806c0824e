"""Offline action-set learning: Metropolis-Hastings over action sets under an annealing schedule."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .actions import Action, ActionSet
from .engine import EngineConfig, alan_policy, run
from .metrics import ttime
from .world import Scenario

MODIFY, REMOVE, ADD = "modify", "remove", "add"
KINDS = (MODIFY, REMOVE, ADD)


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    return math.pi - ((math.pi - a) % (2 * math.pi))


@dataclass(frozen=True)
class AnnealSchedule:
    t_init: float = 2.0
    t_final: float = 0.05
    n_iterations: int = 300
    evals_start: int = 3
    evals_end: int = 10
    modification_range_start: float = math.radians(60)
    modification_range_end: float = math.radians(10)
    weights: tuple[float, float, float] = (0.6, 0.2, 0.2)  # modify, remove, add
    max_set_size: int = 12
    modify_speed: bool = False
    speed: float = 1.5

    def __post_init__(self):
        if not self.t_init > self.t_final > 0:
            raise ValueError("need t_init > t_final > 0")
        if self.n_iterations < 2:
            raise ValueError("n_iterations must be >= 2")
        if self.evals_start < 1 or self.evals_end < 1:
            raise ValueError("evaluation repetitions must be >= 1")
        if not (self.modification_range_start > 0 and self.modification_range_end > 0):
            raise ValueError("modification ranges must be > 0")
        if len(self.weights) != 3 or min(self.weights) < 0 or self.weights[0] + self.weights[2] <= 0:
            raise ValueError("weights must be three non-negative numbers with modify or add positive")
        if self.max_set_size < 2:
            raise ValueError("max_set_size must be >= 2")

    def _lerp(self, a: float, b: float, i: int) -> float:
        return a + (b - a) * i / (self.n_iterations - 1)

    def temperature(self, i: int) -> float:
        return self._lerp(self.t_init, self.t_final, i)

    def modification_range(self, i: int) -> float:
        return self._lerp(self.modification_range_start, self.modification_range_end, i)

    def evaluations(self, i: int) -> int:
        return int(round(self._lerp(self.evals_start, self.evals_end, i)))


# a laptop-sized schedule used by the acceptance suite
DESK_SCHEDULE = AnnealSchedule(n_iterations=150)


@dataclass(frozen=True)
class Modification:
    kind: str
    target_index: int
    new_angle: float = 0.0
    new_speed: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown modification kind {self.kind!r}")


def initial_set(rng: np.random.Generator, speed: float = 1.5) -> ActionSet:
    """The goal action plus one action at a uniform angle in (-pi, pi]."""
    theta = math.pi - 2 * math.pi * rng.random()
    return ActionSet((Action(0.0, speed), Action(theta, speed)), 0, "mcmc")


def _kind_weights(size: int, schedule: AnnealSchedule) -> np.ndarray:
    w = np.array(schedule.weights, dtype=float)
    if size <= 1:
        w[0] = w[1] = 0.0  # only the goal action is left: nothing to modify or remove
    if size >= schedule.max_set_size:
        w[2] = 0.0
    total = w.sum()
    if total <= 0:
        raise ValueError("no admissible modification for this set size")
    return w / total


def _non_goal(aset: ActionSet) -> list[int]:
    return [k for k in range(len(aset)) if k != aset.goal_action_index]


def select_modification(aset: ActionSet, iteration: int, schedule: AnnealSchedule, rng: np.random.Generator) -> Modification:
    w = _kind_weights(len(aset), schedule)
    kind = KINDS[int(rng.choice(3, p=w))]
    rng_range = schedule.modification_range(iteration)
    if kind == REMOVE:
        return Modification(REMOVE, int(rng.choice(_non_goal(aset))))
    if kind == MODIFY:
        k = int(rng.choice(_non_goal(aset)))
    else:
        k = int(rng.integers(len(aset)))  # anchor of the new action
    angle = wrap_angle(aset.actions[k].angle_offset + rng.uniform(-rng_range, rng_range))
    speed = None
    if schedule.modify_speed and kind == MODIFY:
        speed = float(rng.uniform(0.25 * schedule.speed, schedule.speed))
    return Modification(kind, k, angle, speed)


def apply_modification(aset: ActionSet, mod: Modification, speed: float = 1.5) -> ActionSet:
    acts = list(aset.actions)
    goal = aset.goal_action_index
    if mod.kind == REMOVE:
        if mod.target_index == goal:
            raise ValueError("the goal action cannot be removed")
        del acts[mod.target_index]
        if mod.target_index < goal:
            goal -= 1
    elif mod.kind == MODIFY:
        if mod.target_index == goal:
            raise ValueError("the goal action cannot be modified")
        old = acts[mod.target_index]
        acts[mod.target_index] = Action(mod.new_angle, old.speed if mod.new_speed is None else mod.new_speed)
    else:
        acts.append(Action(mod.new_angle, speed))
    return ActionSet(tuple(acts), goal, aset.name)


def _angle_gap(a: float, b: float) -> float:
    return abs(wrap_angle(a - b))


def _add_density(aset: ActionSet, angle: float, rng_range: float, schedule: AnnealSchedule) -> float:
    """Density of proposing an add of ``angle`` to ``aset``."""
    w = _kind_weights(len(aset), schedule)[2]
    hits = sum(1 for a in aset.actions if _angle_gap(angle, a.angle_offset) <= rng_range)
    return w * hits / (len(aset) * 2 * rng_range)


def _remove_prob(aset: ActionSet, schedule: AnnealSchedule) -> float:
    """Probability of proposing the removal of one specific non-goal action."""
    return _kind_weights(len(aset), schedule)[1] / (len(aset) - 1)


def proposal_ratio(old: ActionSet, new: ActionSet, mod: Modification, iteration: int, schedule: AnnealSchedule) -> float:
    """q = reverse / forward proposal density; 1 for the symmetric modify move."""
    rng_range = schedule.modification_range(iteration)
    if mod.kind == MODIFY:
        return 1.0
    if mod.kind == ADD:
        fwd = _add_density(old, mod.new_angle, rng_range, schedule)
        rev = _remove_prob(new, schedule) if len(new) > 1 else 0.0
    else:
        removed = old.actions[mod.target_index].angle_offset
        fwd = _remove_prob(old, schedule)
        rev = _add_density(new, removed, rng_range, schedule) if len(new) < schedule.max_set_size else 0.0
    return rev / fwd if fwd > 0 else 0.0


def accept(f_old: float, f_new: float, temperature: float, rng: np.random.Generator, q: float = 1.0) -> bool:
    """Metropolis-Hastings test with probability min(1, q exp((f_old - f_new) / T))."""
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    if q <= 0:
        return False
    log_p = math.log(q) + (f_old - f_new) / temperature
    if log_p >= 0:
        return True
    return bool(rng.random() < math.exp(log_p))


def _run_ttime(args) -> float:
    scenario, cfg, aset = args
    return ttime(run(scenario, cfg, alan_policy(aset)).times_or_cap())


def evaluate(
    aset: ActionSet,
    scenarios: Sequence[Scenario],
    iteration: int,
    schedule: AnnealSchedule,
    rng: np.random.Generator,
    cfg: EngineConfig = EngineConfig(),
    repetitions: int | None = None,
    pool=None,
    seed_bank: Sequence[int] | None = None,
) -> float:
    """F: mean over repetitions and scenarios of the censored TTime of ALAN runs with ``aset``.

    With ``seed_bank`` the first ``reps`` seeds of the bank are used (common random
    numbers across candidates); otherwise fresh seeds are drawn from ``rng``.
    """
    if not scenarios:
        raise ValueError("evaluate needs at least one scenario")
    reps = schedule.evaluations(iteration) if repetitions is None else int(repetitions)
    if seed_bank is not None:
        if len(seed_bank) < reps:
            raise ValueError("seed bank shorter than the repetition count")
        seeds = list(seed_bank[:reps])
    else:
        seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=reps)]
    return evaluate_seeds(aset, scenarios, seeds, cfg, pool)


def evaluate_seeds(aset: ActionSet, scenarios: Sequence[Scenario], seeds: Sequence[int], cfg: EngineConfig = EngineConfig(), pool=None) -> float:
    jobs = [(sc, replace(cfg, seed=s), aset) for sc in scenarios for s in seeds]
    values = list(pool.map(_run_ttime, jobs)) if pool is not None else [_run_ttime(j) for j in jobs]
    per_scenario = np.asarray(values).reshape(len(scenarios), len(seeds)).mean(axis=1)
    return float(per_scenario.mean())


@dataclass
class ChainStep:
    iteration: int
    f: float
    accepted: bool
    set_size: int
    temperature: float
    best_f: float


@dataclass
class OptimizeResult:
    best_set: ActionSet
    best_f: float
    initial_set: ActionSet
    initial_f: float
    chain: list[ChainStep] = field(default_factory=list)

    def chain_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "F", "accepted", "set_size", "temperature"])
        for s in self.chain:
            w.writerow([s.iteration, f"{s.f:.6f}", int(s.accepted), s.set_size, f"{s.temperature:.6f}"])
        return buf.getvalue()


def optimize(
    scenarios: Sequence[Scenario],
    schedule: AnnealSchedule = AnnealSchedule(),
    cfg: EngineConfig = EngineConfig(),
    seed: int = 0,
    progress: Callable[[ChainStep], None] | None = None,
    pool=None,
    finalists: int = 5,
) -> OptimizeResult:
    """Run the chain and return the lowest-F set.

    All candidates are scored on one bank of simulation seeds so that differences in F
    come from the action sets rather than from the draws. Because the best chain values
    are optimistically biased, the ``finalists`` lowest-F distinct sets and the initial
    set are re-scored on a fresh batch of seeds at the final repetition count, and the
    lowest of those is returned.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x4D43,)))
    bank = [int(s) for s in rng.integers(0, 2**31 - 1, size=max(schedule.evals_start, schedule.evals_end))]
    current = initial_set(rng, schedule.speed)
    start = current
    f_cur = evaluate(current, scenarios, 0, schedule, rng, cfg, pool=pool, seed_bank=bank)
    f_best = f_cur
    seen: dict[tuple, tuple[float, ActionSet]] = {_key(current): (f_cur, current)}
    chain: list[ChainStep] = []
    for i in range(schedule.n_iterations):
        temp = schedule.temperature(i)
        mod = select_modification(current, i, schedule, rng)
        cand = apply_modification(current, mod, schedule.speed)
        q = proposal_ratio(current, cand, mod, i, schedule)
        f_new = evaluate(cand, scenarios, i, schedule, rng, cfg, pool=pool, seed_bank=bank)
        ok = accept(f_cur, f_new, temp, rng, q)
        if ok:
            current, f_cur = cand, f_new
        f_best = min(f_best, f_new)
        k = _key(cand)
        if k not in seen or f_new < seen[k][0]:
            seen[k] = (f_new, cand)
        step = ChainStep(i, f_new, ok, len(current), temp, f_best)
        chain.append(step)
        if progress is not None:
            progress(step)

    fresh = [int(s) for s in rng.integers(0, 2**31 - 1, size=schedule.evals_end)]
    ranked = sorted(seen.values(), key=lambda fv: fv[0])[:max(finalists, 1)]
    f_start = evaluate_seeds(start, scenarios, fresh, cfg, pool)
    best, f_final = start, f_start
    for _, aset in ranked:
        if _key(aset) == _key(start):
            continue
        f = evaluate_seeds(aset, scenarios, fresh, cfg, pool)
        if f < f_final:
            best, f_final = aset, f
    return OptimizeResult(ActionSet(best.actions, best.goal_action_index, "optimized"), f_final, start, f_start, chain)


def _key(aset: ActionSet) -> tuple:
    return tuple(sorted((round(a.angle_offset, 12), a.speed) for a in aset.actions))
