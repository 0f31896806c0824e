import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from banditnav.actions import (
    Action,
    combined_reward,
    goal_reward,
    polite_reward,
    preferred_velocity,
    softmax_probs,
)
from banditnav.mcmc import AnnealSchedule, apply_modification, initial_set, select_modification
from banditnav.metrics import min_ttime, ttime
from banditnav.orca import HalfPlane, NeighborView, agent_halfplane, solve_lp
from banditnav.world import AgentSpec, Scenario

finite = st.floats(-50, 50, allow_nan=False)
small = st.floats(-3, 3, allow_nan=False)
values = st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=12)


def disc(radius):
    return st.tuples(st.floats(0, radius), st.floats(-math.pi, math.pi)).map(
        lambda ra: (ra[0] * math.cos(ra[1]), ra[0] * math.sin(ra[1]))
    )


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10), st.floats(-100, 100), st.floats(0.05, 2))
def test_softmax_shift_invariance(v, c, tau):
    assert np.allclose(softmax_probs(v, tau), softmax_probs([x + c for x in v], tau), atol=1e-12, rtol=0)


@given(values, st.floats(0.05, 5))
def test_softmax_sums_to_one(v, tau):
    p = softmax_probs(v, tau)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p >= 0)


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=8), st.data(), st.floats(0.01, 1.0))
def test_softmax_monotonicity(v, data, bump):
    k = data.draw(st.integers(0, len(v) - 1))
    p = softmax_probs(v, 0.2)
    w = list(v)
    w[k] += bump
    q = softmax_probs(w, 0.2)
    assert q[k] > p[k]
    for j in range(len(v)):
        if j != k:
            assert q[j] < p[j]


@given(disc(1.5), disc(1.5), small, small, small, small, st.floats(0, 0.99))
def test_reward_bounds(v_new, v_pref, px, py, gx, gy, gamma):
    assume(math.hypot(gx - px, gy - py) > 1e-6)
    rg = goal_reward(v_new, (px, py), (gx, gy))
    rp = polite_reward(v_new, v_pref)
    assert abs(rg) <= 1.5 + 1e-9
    assert abs(rp) <= 2.25 + 1e-9
    assert abs(combined_reward(rg, rp, gamma)) <= (1 - gamma) * 1.5 + gamma * 2.25 + 1e-9


@given(st.floats(-math.pi, math.pi), st.floats(0, 1.5), small, small, small, small)
def test_preferred_velocity_has_action_speed(angle, speed, px, py, gx, gy):
    assume(math.hypot(gx - px, gy - py) > 1e-6)
    v = preferred_velocity(Action(angle, speed), (px, py), (gx, gy))
    assert abs(v.norm() - speed) <= 1e-9


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=30))
def test_ttime_at_least_mean(times):
    t = ttime(times)
    m = float(np.mean(times))
    assert t >= m - 1e-9
    if len(set(times)) == 1:
        assert abs(t - m) <= 1e-9


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=30), st.floats(-100, 100), st.floats(0.01, 100))
def test_ttime_translation_and_scale(times, c, s):
    base = ttime(times)
    assert math.isclose(ttime([x + c for x in times]), base + c, rel_tol=1e-9, abs_tol=1e-6)
    assert math.isclose(ttime([x * s for x in times]), base * s, rel_tol=1e-9, abs_tol=1e-6)


@settings(max_examples=30)
@given(st.lists(st.tuples(finite, finite, finite, finite), min_size=1, max_size=6))
def test_obstacle_free_min_ttime_is_straight_line(pairs):
    agents = []
    for k, (sx, sy, gx, gy) in enumerate(pairs):
        agents.append(AgentSpec(k, (sx + 200 * k, sy), (gx + 200 * k, gy)))
    sc = Scenario("free", tuple(agents))
    straight = [math.hypot(a.goal.x - a.start.x, a.goal.y - a.start.y) / a.max_speed for a in agents]
    assert min_ttime(sc) == ttime(straight)


views = st.tuples(small, small, small, small, small, small, st.floats(0.2, 1.5))


@given(views)
def test_reciprocity(v):
    px, py, vix, viy, vjx, vjy, r = v
    assume(math.hypot(px, py) > r + 1e-3)
    hi = agent_halfplane(NeighborView((px, py), (vix - vjx, viy - vjy), r, (vjx, vjy)))
    hj = agent_halfplane(NeighborView((-px, -py), (vjx - vix, vjy - viy), r, (vix, viy)))
    assert abs(hi.u.x + hj.u.x) <= 1e-9 and abs(hi.u.y + hj.u.y) <= 1e-9


@given(views, st.floats(0.1, 10))
def test_scale_covariance(v, s):
    px, py, vix, viy, vjx, vjy, r = v
    assume(math.hypot(px, py) > r + 1e-3)
    h1 = agent_halfplane(NeighborView((px, py), (vix - vjx, viy - vjy), r, (vjx, vjy)))
    h2 = agent_halfplane(
        NeighborView((s * px, s * py), (s * (vix - vjx), s * (viy - vjy)), s * r, (s * vjx, s * vjy))
    )
    assert np.allclose(np.array(h2.u), s * np.array(h1.u), atol=1e-9 * max(1, s), rtol=1e-7)


constraints = st.lists(
    st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-math.pi, math.pi)), max_size=12
)


@given(constraints, st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_lp_solution_is_feasible_when_flagged(cons, v_pref):
    hps = [HalfPlane((x, y), (math.cos(a), math.sin(a))) for x, y, a in cons]
    res = solve_lp(hps, v_pref, 1.5)
    assert res.velocity.norm() <= 1.5 + 1e-9
    if res.feasible:
        for hp in hps:
            assert hp.slack(res.velocity) >= -1e-9


@given(constraints, st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_lp_is_deterministic(cons, v_pref):
    hps = [HalfPlane((x, y), (math.cos(a), math.sin(a))) for x, y, a in cons]
    a = solve_lp(hps, v_pref, 1.5)
    b = solve_lp(hps, v_pref, 1.5)
    assert (a.velocity.x, a.velocity.y, a.feasible) == (b.velocity.x, b.velocity.y, b.feasible)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 60))
def test_goal_action_survives_every_modification(seed, steps):
    rng = np.random.default_rng(seed)
    sched = AnnealSchedule(n_iterations=steps + 1, max_set_size=6)
    aset = initial_set(rng)
    for i in range(steps):
        aset = apply_modification(aset, select_modification(aset, i, sched, rng))
        assert aset.actions[aset.goal_action_index].angle_offset == 0.0
        assert all(-math.pi < a.angle_offset <= math.pi for a in aset.actions)
        assert 1 <= len(aset) <= sched.max_set_size
