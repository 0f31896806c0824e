import math
from dataclasses import replace

import numpy as np
import pytest

from banditnav.actions import GOAL_ONLY_SET
from banditnav.engine import (
    EngineConfig,
    Policy,
    Simulation,
    alan_policy,
    baseline_policy,
    default_time_cap,
    run,
)
from banditnav.scenarios import builtin_scenario
from banditnav.world import AgentSpec, Obstacle, Scenario


def solo(goal=(10, 0)):
    return Scenario("solo", (AgentSpec(0, (0, 0), goal),))


def head_on():
    return Scenario("pair", (AgentSpec(0, (0, 0), (10, 0)), AgentSpec(1, (10, 0), (0, 0))))


def test_single_step_advances_full_speed():
    sim = Simulation(solo(), EngineConfig(pref_noise=0.0))
    sim.step()
    a = sim.agent(0)
    assert a.position == pytest.approx((0.075, 0.0), abs=1e-12)


def test_head_on_pair_stays_separated():
    sim = Simulation(head_on(), EngineConfig(seed=3))
    while not sim.done and sim.t < 60:
        sim.step()
        live = sim.active
        if live.all():
            d = math.dist(sim.pos[0], sim.pos[1])
            assert d > sim.radius[0] + sim.radius[1]
    assert sim.done


def test_full_actuator_failure_freezes_action():
    sc = builtin_scenario("incoming", 16)
    sim = Simulation(sc, EngineConfig(actuator_failure_prob=1.0, seed=1))
    start = sim.cur_action.copy()
    for _ in range(200):
        sim.step()
        assert np.array_equal(sim.cur_action, start)


def test_empty_scenario_completes_immediately():
    res = run(Scenario("empty"))
    assert res.completed
    assert res.end_time == 0.0
    assert res.steps == 0


def test_same_seed_same_trace_other_seed_differs():
    sc = builtin_scenario("incoming", 16)
    cfg = EngineConfig(seed=7, trace_every=1, time_cap=20)
    a = run(sc, cfg)
    b = run(sc, cfg)
    c = run(sc, replace(cfg, seed=8))
    assert a.trace_csv() == b.trace_csv()
    assert a.trace_csv() != c.trace_csv()


def test_decision_cadence():
    sim = Simulation(solo((500, 0)), EngineConfig(seed=2))
    for _ in range(4000):
        sim.step()
    interval = sim.t / sim.n_dec[0]
    assert interval == pytest.approx(0.2, rel=0.05)


def test_random_baseline_period():
    sim = Simulation(solo((500, 0)), EngineConfig(seed=2), baseline_policy("random_action", 1.0))
    for _ in range(4000):
        sim.step()
    # each period counts two switches: into the random action and back to the goal action
    assert sim.t / (sim.n_dec[0] / 2) == pytest.approx(1.0, rel=0.05)


def test_speed_limit_every_step():
    res = run(builtin_scenario("congested"), EngineConfig(seed=0))
    assert res.max_speed_excess <= 1e-9


def test_orca_only_equals_single_arm_alan():
    sc = builtin_scenario("incoming", 16)
    cfg = EngineConfig(seed=4, trace_every=5, time_cap=30)
    a = run(sc, cfg, baseline_policy("orca_only"))
    b = run(sc, cfg, alan_policy(GOAL_ONLY_SET))
    eps = run(sc, cfg.with_selection(strategy="epsilon_greedy"), alan_policy(GOAL_ONLY_SET))
    assert a.trace_csv() == b.trace_csv() == eps.trace_csv()


def test_orca_only_single_agent_goes_straight():
    res = run(solo(), EngineConfig(trace_every=1), baseline_policy("orca_only"))
    ys = [xy[0, 1] for _, _, xy, _, _ in res.trace]
    assert max(abs(y) for y in ys) < 0.05
    assert res.completed


def test_arrived_agents_leave_the_world():
    res = run(solo((3, 0)), EngineConfig(pref_noise=0.0))
    # arrival counts once the centre is within one radius of the goal
    assert res.completed
    assert res.arrival_times[0] == pytest.approx((3 - 0.5) / 1.5, abs=0.05)


def test_deadlock_orca_only_never_completes():
    res = run(builtin_scenario("deadlock"), EngineConfig(seed=0), baseline_policy("orca_only"))
    assert not res.completed
    assert res.end_time == pytest.approx(res.time_cap)


def test_wall_is_never_penetrated():
    sc = Scenario(
        "wall",
        (AgentSpec(0, (0, -3), (0, 3)),),
        (Obstacle(((-2, 0), (2, 0))),),
    )
    res = run(sc, EngineConfig(seed=0))
    assert res.completed
    assert res.min_obstacle_clearance >= -1e-3


def test_default_time_cap_floor():
    assert default_time_cap(solo()) == 300.0
    far = solo((1000, 0))
    assert default_time_cap(far) == pytest.approx(4 * 1000 / 1.5)


def test_config_validation():
    for bad in ({"dt": 0}, {"time_cap": -1}, {"actuator_failure_prob": 1.5}, {"seed": -1}):
        with pytest.raises(ValueError):
            EngineConfig(**bad)
    with pytest.raises(ValueError):
        Policy("random", period=0)
    with pytest.raises(ValueError):
        baseline_policy("greedy")


def test_incoming_with_multi_scenario_set_completes():
    from banditnav.actions import builtin_action_set

    multi = builtin_action_set("multi")
    assert multi.actions[multi.goal_action_index].angle_offset == 0.0
    for seed in range(3):
        assert run(builtin_scenario("incoming", 16), EngineConfig(seed=seed), alan_policy(multi)).completed
