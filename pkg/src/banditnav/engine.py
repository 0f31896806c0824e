"""Fixed-timestep simulation loop: sense, select a preferred velocity, solve ORCA, move, evaluate.

All per-agent work in a step reads the frozen snapshot of positions and
velocities from the previous step; the commit is one pass at the end.
Randomness is drawn from one stream per agent (seeded from the master
seed and the agent id), a fixed number of draws per agent per step, so
results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from numba import njit

from .actions import GOAL_ONLY_SET, SAMPLE_SET, ActionSet, SelectionConfig, select_core, window_values_into
from .orca import agent_line, obstacle_line, solve_lines
from .world import Scenario

LEARNING, RANDOM = 0, 1
_RND_PER_STEP = 5  # noise x, noise y, failure, selection, jitter
_BLOCK = 256


@dataclass(frozen=True)
class EngineConfig:
    dt: float = 0.05
    sense_radius_agents: float = 15.0
    sense_radius_obstacles: float = 1.0
    decision_period_mean: float = 0.2
    decision_jitter: float = 0.25
    pref_noise: float = 0.01
    actuator_failure_prob: float = 0.0
    time_cap: float | None = None
    agent_horizon: float = 5.0
    obstacle_horizon: float = 1.0
    safety_margin: float = 0.0
    start_moving: bool = True
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    seed: int = 0
    trace_every: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.time_cap is not None and not self.time_cap > 0:
            raise ValueError("time_cap must be > 0")
        if not 0 <= self.actuator_failure_prob <= 1:
            raise ValueError("actuator_failure_prob must be in [0, 1]")
        if not 0 <= self.decision_jitter < 1:
            raise ValueError("decision_jitter must be in [0, 1)")
        if not (self.decision_period_mean > 0 and self.agent_horizon > 0 and self.obstacle_horizon > 0):
            raise ValueError("decision period and horizons must be > 0")
        if self.pref_noise < 0 or self.sense_radius_agents <= 0 or self.sense_radius_obstacles < 0:
            raise ValueError("noise and sensing radii must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def with_selection(self, **kw) -> "EngineConfig":
        return replace(self, selection=replace(self.selection, **kw))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Policy:
    """How agents pick preferred velocities: a learned bandit or a random baseline."""

    kind: str = "alan"
    action_set: ActionSet = SAMPLE_SET
    period: float = 0.0

    def __post_init__(self):
        if self.kind not in ("alan", "orca", "random"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "random" and not self.period > 0:
            raise ValueError("random_action needs period > 0")

    @property
    def label(self) -> str:
        if self.kind == "random":
            return f"random:{self.period:g}"
        if self.kind == "alan":
            return f"alan[{self.action_set.name}]"
        return self.kind

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "period": self.period,
            "action_set": self.action_set.name,
            "angles_deg": [round(a.angle_deg, 10) for a in self.action_set.actions],
            "speeds": [a.speed for a in self.action_set.actions],
        }


def alan_policy(action_set: ActionSet = SAMPLE_SET) -> Policy:
    return Policy("alan", action_set)


def baseline_policy(kind: str, period: float = 2.0) -> Policy:
    """``orca_only`` pins v_pref to the goal action; ``random_action`` draws a Sample
    action uniformly every ``period`` seconds."""
    if kind in ("orca_only", "orca"):
        return Policy("orca", GOAL_ONLY_SET)
    if kind in ("random_action", "random"):
        return Policy("random", SAMPLE_SET, float(period))
    raise ValueError(f"unknown baseline {kind!r}")


def default_time_cap(scenario: Scenario) -> float:
    longest = max(
        ((a.goal - a.start).norm() / a.max_speed for a in scenario.agents), default=0.0
    )
    return max(300.0, 4.0 * longest)


class AgentStreams:
    """Independent random streams, one per agent id."""

    def __init__(self, seed: int, ids: Sequence[int]):
        self.gens = [
            np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i % (1 << 64),))))
            for i in ids
        ]
        self._buf = np.empty((_BLOCK, len(self.gens), _RND_PER_STEP))
        self._pos = _BLOCK

    def initial_uniforms(self) -> np.ndarray:
        return np.array([g.random() for g in self.gens])

    def next_step(self) -> np.ndarray:
        if self._pos == _BLOCK:
            for i, g in enumerate(self.gens):
                self._buf[:, i, 0:2] = g.standard_normal((_BLOCK, 2))
                self._buf[:, i, 2:5] = g.random((_BLOCK, 3))
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out


@dataclass
class AgentState:
    """Read-only view of one agent at the current step."""

    id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    v_pref: tuple[float, float]
    current_action: int
    next_decision_time: float
    arrived: bool
    arrival_time: float | None
    window_rewards: tuple[float, ...]
    window_stamps: tuple[float, ...]


@dataclass
class SimulationResult:
    scenario: str
    agent_ids: list[int]
    arrival_times: np.ndarray
    completed: bool
    end_time: float
    time_cap: float
    steps: int
    min_agent_clearance: float
    min_obstacle_clearance: float
    max_speed_excess: float
    infeasible_solves: int
    decisions: np.ndarray
    config: dict
    trace: list | None = None

    def times_or_cap(self) -> np.ndarray:
        """Arrival times with non-arrived agents scored at the time cap."""
        return np.where(np.isnan(self.arrival_times), self.time_cap, self.arrival_times)

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "completed": self.completed,
            "end_time": round(self.end_time, 10),
            "time_cap": self.time_cap,
            "steps": self.steps,
            "arrival_times": {
                str(i): (None if math.isnan(t) else round(float(t), 10))
                for i, t in zip(self.agent_ids, self.arrival_times)
            },
            "min_agent_clearance": _finite_or_none(self.min_agent_clearance),
            "min_obstacle_clearance": _finite_or_none(self.min_obstacle_clearance),
            "infeasible_solves": self.infeasible_solves,
            "config": self.config,
        }

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "agent_id", "x", "y", "vx", "vy", "action_id"])
        for t, ids, xy, v, act in self.trace or []:
            ts = f"{t:.4f}"
            for k in range(len(ids)):
                w.writerow([ts, int(ids[k]), f"{xy[k, 0]:.6f}", f"{xy[k, 1]:.6f}", f"{v[k, 0]:.6f}", f"{v[k, 1]:.6f}", int(act[k])])
        return buf.getvalue()


def _finite_or_none(x: float):
    return None if not math.isfinite(x) else round(float(x), 10)


# --- compiled step -----------------------------------------------------------


@njit(cache=True)
def _build_grid(pos, active, cell):
    n = pos.shape[0]
    xmin = 1e300
    ymin = 1e300
    xmax = -1e300
    ymax = -1e300
    for i in range(n):
        if active[i]:
            xmin = min(xmin, pos[i, 0])
            ymin = min(ymin, pos[i, 1])
            xmax = max(xmax, pos[i, 0])
            ymax = max(ymax, pos[i, 1])
    if xmin > xmax:
        xmin = ymin = xmax = ymax = 0.0
    nx = int((xmax - xmin) / cell) + 1
    ny = int((ymax - ymin) / cell) + 1
    cell_of = np.empty(n, dtype=np.int64)
    start = np.zeros(nx * ny + 1, dtype=np.int64)
    for i in range(n):
        if active[i]:
            cx = int((pos[i, 0] - xmin) / cell)
            cy = int((pos[i, 1] - ymin) / cell)
            c = cx * ny + cy
            cell_of[i] = c
            start[c + 1] += 1
        else:
            cell_of[i] = -1
    for c in range(nx * ny):
        start[c + 1] += start[c]
    items = np.empty(start[nx * ny], dtype=np.int64)
    fill = start[:-1].copy()
    for i in range(n):
        c = cell_of[i]
        if c >= 0:
            items[fill[c]] = i
            fill[c] += 1
    return xmin, ymin, nx, ny, start, items


@njit(cache=True)
def _step_kernel(
    t, dt, pos, vel, radius, vmax, goal, active,
    angles, speeds, goal_idx, mode, strategy, tau, eps, ucb_c, gamma, window,
    period_mean, jitter, fail_prob, noise_std, random_period,
    cur_action, next_dec, rewards, stamps, counts, total, n_dec,
    rnd, segs, horizon, horizon_obst, sense_a, sense_o, margin, normalize,
    new_pos, new_vel, v_pref, goal_dir, arrival, lines, scratch, stats,
):
    n = pos.shape[0]
    n_act = angles.shape[0]
    n_seg = segs.shape[0]
    inv_h = 1.0 / horizon
    inv_dt = 1.0 / dt
    sense_sq = sense_a * sense_a
    vals = np.empty(n_act)
    sel_scratch = np.empty(n_act)
    res = np.empty(2)
    xmin, ymin, nx, ny, start, items = _build_grid(pos, active, sense_a)

    for i in range(n):
        if not active[i]:
            new_vel[i, 0] = 0.0
            new_vel[i, 1] = 0.0
            new_pos[i, 0] = pos[i, 0]
            new_pos[i, 1] = pos[i, 1]
            continue

        # action decision
        if t >= next_dec[i] - 1e-9:
            step_len = period_mean * (1.0 + jitter * (2.0 * rnd[i, 4] - 1.0))
            perturb = mode == 1 and n_dec[i] % 2 == 0
            n_dec[i] += 1
            if mode == 1:
                # random baseline: a random action held for one decision interval, then the goal action
                hold = min(step_len, 0.5 * random_period)
                next_dec[i] += hold if perturb else random_period - hold
            else:
                next_dec[i] += step_len
            if not (rnd[i, 2] < fail_prob):
                if mode == 1:
                    if perturb:
                        a = int(rnd[i, 3] * n_act)
                        cur_action[i] = a if a < n_act else n_act - 1
                    else:
                        cur_action[i] = goal_idx
                elif n_act > 1:
                    window_values_into(rewards[i], stamps[i], t, window, vals)
                    cur_action[i] = select_core(
                        vals, strategy, tau, eps, ucb_c, counts[i], total[i], rnd[i, 3], sel_scratch
                    )
                counts[i, cur_action[i]] += 1
                total[i] += 1

        # preferred velocity from the current action
        gx = goal[i, 0] - pos[i, 0]
        gy = goal[i, 1] - pos[i, 1]
        gd = math.sqrt(gx * gx + gy * gy)
        if gd > 0.0:
            ex = gx / gd
            ey = gy / gd
        else:
            ex = 0.0
            ey = 0.0
        goal_dir[i, 0] = ex
        goal_dir[i, 1] = ey
        a = cur_action[i]
        c = math.cos(angles[a])
        s = math.sin(angles[a])
        sp = min(speeds[a], vmax[i])
        px = sp * (c * ex - s * ey) + noise_std * rnd[i, 0]
        py = sp * (s * ex + c * ey) + noise_std * rnd[i, 1]
        v_pref[i, 0] = px
        v_pref[i, 1] = py

        # obstacle constraints first: they stay hard in the infeasible fallback
        m = 0
        for k in range(n_seg):
            ax = segs[k, 0] - pos[i, 0]
            ay = segs[k, 1] - pos[i, 1]
            ex2 = segs[k, 2] - segs[k, 0]
            ey2 = segs[k, 3] - segs[k, 1]
            tt = -(ax * ex2 + ay * ey2) / (ex2 * ex2 + ey2 * ey2)
            if tt < 0.0:
                tt = 0.0
            elif tt > 1.0:
                tt = 1.0
            qx = ax + tt * ex2
            qy = ay + tt * ey2
            d0 = math.sqrt(qx * qx + qy * qy)
            clear = d0 - radius[i]
            if clear < stats[1]:
                stats[1] = clear
            if d0 > sense_o:
                continue
            present, bpx, bpy, nnx, nny, pen = obstacle_line(
                pos[i, 0], pos[i, 1], vel[i, 0], vel[i, 1], radius[i],
                segs[k, 0], segs[k, 1], segs[k, 2], segs[k, 3], horizon_obst, inv_dt, vmax[i],
            )
            if present:
                lines[m, 0] = bpx
                lines[m, 1] = bpy
                lines[m, 2] = nny
                lines[m, 3] = -nnx
                m += 1
        cx = int((pos[i, 0] - xmin) / sense_a)
        cy = int((pos[i, 1] - ymin) / sense_a)
        close_range = 2.0 * dt * vmax[i]
        # pass 0: hard one-step separation lines for touching-range neighbors
        # pass 1: the reciprocal ORCA lines (relaxed first when infeasible)
        for pass_ in range(2):
            if pass_ == 1:
                n_hard = m
            for gxi in range(max(cx - 1, 0), min(cx + 2, nx)):
                for gyi in range(max(cy - 1, 0), min(cy + 2, ny)):
                    cidx = gxi * ny + gyi
                    for q in range(start[cidx], start[cidx + 1]):
                        j = items[q]
                        if j == i:
                            continue
                        rpx = pos[j, 0] - pos[i, 0]
                        rpy = pos[j, 1] - pos[i, 1]
                        d_sq = rpx * rpx + rpy * rpy
                        if d_sq > sense_sq:
                            continue
                        cr = radius[i] + radius[j]
                        d = math.sqrt(d_sq)
                        gap = d - cr
                        if pass_ == 0:
                            if gap < close_range and d > 0.0:
                                # v . n <= gap / (2 dt): each side closes at most half the gap per step
                                nx_ = rpx / d
                                ny_ = rpy / d
                                c = 0.5 * max(gap, 0.0) * inv_dt
                                lines[m, 0] = nx_ * c
                                lines[m, 1] = ny_ * c
                                lines[m, 2] = -ny_
                                lines[m, 3] = nx_
                                m += 1
                            continue
                        if gap < stats[0]:
                            stats[0] = gap
                        lpx, lpy, ldx, ldy, ux, uy, col = agent_line(
                            rpx, rpy, vel[i, 0] - vel[j, 0], vel[i, 1] - vel[j, 1], cr + margin,
                            vel[i, 0], vel[i, 1], inv_h, inv_dt,
                        )
                        lines[m, 0] = lpx
                        lines[m, 1] = lpy
                        lines[m, 2] = ldx
                        lines[m, 3] = ldy
                        m += 1

        res[0] = 0.0
        res[1] = 0.0
        if not solve_lines(lines, m, n_hard, px, py, vmax[i], res, scratch):
            stats[2] += 1.0
        new_vel[i, 0] = res[0]
        new_vel[i, 1] = res[1]

    # commit
    t_next = t + dt
    for i in range(n):
        if not active[i]:
            continue
        vx = new_vel[i, 0]
        vy = new_vel[i, 1]
        sp = math.sqrt(vx * vx + vy * vy)
        if sp - vmax[i] > stats[3]:
            stats[3] = sp - vmax[i]
        new_pos[i, 0] = pos[i, 0] + vx * dt
        new_pos[i, 1] = pos[i, 1] + vy * dt
        r_goal = vx * goal_dir[i, 0] + vy * goal_dir[i, 1]
        r_polite = vx * v_pref[i, 0] + vy * v_pref[i, 1]
        if normalize:
            r_goal /= vmax[i]
            r_polite /= vmax[i] * vmax[i]
        a = cur_action[i]
        rewards[i, a] = (1.0 - gamma) * r_goal + gamma * r_polite
        stamps[i, a] = t_next
        dx = goal[i, 0] - new_pos[i, 0]
        dy = goal[i, 1] - new_pos[i, 1]
        if dx * dx + dy * dy <= radius[i] * radius[i]:
            active[i] = False
            arrival[i] = t_next
            new_vel[i, 0] = 0.0
            new_vel[i, 1] = 0.0


@njit(cache=True)
def pairwise_clearance(pos, radius, active, segs):
    """Minimum agent-agent and agent-segment clearance over active agents (brute force)."""
    n = pos.shape[0]
    best_a = np.inf
    best_o = np.inf
    for i in range(n):
        if not active[i]:
            continue
        for j in range(i + 1, n):
            if not active[j]:
                continue
            d = math.sqrt((pos[i, 0] - pos[j, 0]) ** 2 + (pos[i, 1] - pos[j, 1]) ** 2)
            best_a = min(best_a, d - radius[i] - radius[j])
        for k in range(segs.shape[0]):
            ax = segs[k, 0]
            ay = segs[k, 1]
            ex = segs[k, 2] - ax
            ey = segs[k, 3] - ay
            t = ((pos[i, 0] - ax) * ex + (pos[i, 1] - ay) * ey) / (ex * ex + ey * ey)
            t = min(1.0, max(0.0, t))
            d = math.sqrt((pos[i, 0] - ax - t * ex) ** 2 + (pos[i, 1] - ay - t * ey) ** 2)
            best_o = min(best_o, d - radius[i])
    return best_a, best_o


# --- driver --------------------------------------------------------------------


class Simulation:
    """Mutable world state for one run; ``step`` advances every agent by ``dt``."""

    def __init__(self, scenario: Scenario, cfg: EngineConfig = EngineConfig(), policy: Policy | None = None):
        self.scenario = scenario
        self.cfg = cfg
        self.policy = policy or alan_policy()
        agents = scenario.agents
        n = len(agents)
        self.ids = [a.id for a in agents]
        self.pos = np.array([a.start for a in agents], dtype=np.float64).reshape(n, 2)
        self.vel = np.zeros((n, 2))
        self.radius = np.array([a.radius for a in agents], dtype=np.float64)
        self.vmax = np.array([a.max_speed for a in agents], dtype=np.float64)
        self.goal = np.array([a.goal for a in agents], dtype=np.float64).reshape(n, 2)
        self.active = np.ones(n, dtype=np.bool_)
        self.arrival = np.full(n, np.nan)
        self.segs = scenario.segment_array()

        aset = self.policy.action_set
        self.angles = aset.angles()
        self.speeds = aset.speeds()
        n_act = len(aset)
        self.cur_action = np.full(n, aset.goal_action_index, dtype=np.int64)
        self.rewards = np.zeros((n, n_act))
        self.stamps = np.full((n, n_act), -np.inf)
        self.counts = np.zeros((n, n_act), dtype=np.int64)
        self.total = np.zeros(n, dtype=np.int64)
        self.n_dec = np.zeros(n, dtype=np.int64)
        self.v_pref = np.zeros((n, 2))
        self._goal_dir = np.zeros((n, 2))
        self._new_pos = np.zeros((n, 2))
        self._new_vel = np.zeros((n, 2))
        cap = max(2 * n + len(self.segs), 1)
        self._lines = np.empty((cap, 4))
        self._scratch = np.empty((cap, 4))
        # min agent clearance, min obstacle clearance, infeasible solves, max speed excess
        self.stats = np.array([np.inf, np.inf, 0.0, -np.inf])

        if cfg.start_moving and n:
            # agents enter already walking their initial (goal) action
            d = self.goal - self.pos
            dist = np.linalg.norm(d, axis=1)
            speed = np.minimum(self.speeds[aset.goal_action_index], self.vmax)
            moving = dist > 0
            self.vel[moving] = d[moving] / dist[moving, None] * speed[moving, None]

        self.streams = AgentStreams(cfg.seed, self.ids)
        period = self.policy.period if self.policy.kind == "random" else cfg.decision_period_mean
        self.next_dec = self.streams.initial_uniforms() * period
        self.k = 0
        self.time_cap = cfg.time_cap if cfg.time_cap is not None else default_time_cap(scenario)
        self.trace: list | None = [] if cfg.trace_every > 0 else None
        if self.trace is not None:
            self._record()

    @property
    def t(self) -> float:
        return self.k * self.cfg.dt

    @property
    def done(self) -> bool:
        return not self.active.any()

    def _record(self) -> None:
        idx = np.flatnonzero(self.active)
        self._record_idx(idx)

    def _record_idx(self, idx) -> None:
        self.trace.append(
            (self.t, np.asarray(self.ids)[idx], self.pos[idx].copy(), self.vel[idx].copy(), self.cur_action[idx].copy())
        )

    def step(self) -> "Simulation":
        cfg = self.cfg
        sel = cfg.selection
        mode = 1 if self.policy.kind == "random" else 0
        was_active = np.flatnonzero(self.active) if self.trace is not None else None
        rnd = self.streams.next_step()
        _step_kernel(
            self.t, cfg.dt, self.pos, self.vel, self.radius, self.vmax, self.goal, self.active,
            self.angles, self.speeds, self.policy.action_set.goal_action_index, mode, sel.strategy_code, sel.temperature, sel.epsilon, sel.ucb_c,
            sel.gamma, sel.window_length,
            cfg.decision_period_mean, cfg.decision_jitter, cfg.actuator_failure_prob, cfg.pref_noise,
            self.policy.period,
            self.cur_action, self.next_dec, self.rewards, self.stamps, self.counts, self.total, self.n_dec,
            rnd, self.segs, cfg.agent_horizon, cfg.obstacle_horizon,
            cfg.sense_radius_agents, cfg.sense_radius_obstacles, cfg.safety_margin, sel.normalize_rewards,
            self._new_pos, self._new_vel, self.v_pref, self._goal_dir, self.arrival,
            self._lines, self._scratch, self.stats,
        )
        self.pos, self._new_pos = self._new_pos, self.pos
        self.vel, self._new_vel = self._new_vel, self.vel
        self.k += 1
        if self.trace is not None and (self.k % cfg.trace_every == 0 or self.done):
            self._record_idx(was_active)
        return self

    def agent(self, i: int) -> AgentState:
        arr = self.arrival[i]
        return AgentState(
            id=self.ids[i],
            position=(float(self.pos[i, 0]), float(self.pos[i, 1])),
            velocity=(float(self.vel[i, 0]), float(self.vel[i, 1])),
            v_pref=(float(self.v_pref[i, 0]), float(self.v_pref[i, 1])),
            current_action=int(self.cur_action[i]),
            next_decision_time=float(self.next_dec[i]),
            arrived=not bool(self.active[i]),
            arrival_time=None if math.isnan(arr) else float(arr),
            window_rewards=tuple(float(x) for x in self.rewards[i]),
            window_stamps=tuple(float(x) for x in self.stamps[i]),
        )

    def run(self) -> SimulationResult:
        max_steps = int(round(self.time_cap / self.cfg.dt))
        while not self.done and self.k < max_steps:
            self.step()
        final_a, final_o = pairwise_clearance(self.pos, self.radius, self.active, self.segs)
        return SimulationResult(
            scenario=self.scenario.name,
            agent_ids=list(self.ids),
            arrival_times=self.arrival.copy(),
            completed=self.done,
            end_time=self.t,
            time_cap=self.time_cap,
            steps=self.k,
            min_agent_clearance=float(min(self.stats[0], final_a)),
            min_obstacle_clearance=float(min(self.stats[1], final_o)),
            max_speed_excess=float(self.stats[3]),
            infeasible_solves=int(self.stats[2]),
            decisions=self.n_dec.copy(),
            config={
                "engine": self.cfg.to_dict(),
                "policy": self.policy.describe(),
                "time_cap": self.time_cap,
            },
            trace=self.trace,
        )


def run(scenario: Scenario, cfg: EngineConfig = EngineConfig(), policy: Policy | None = None) -> SimulationResult:
    """Step until every agent arrives or the time cap elapses."""
    return Simulation(scenario, cfg, policy).run()


def result_json(result: SimulationResult, extra: dict | None = None) -> str:
    doc = result.summary()
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=True)
