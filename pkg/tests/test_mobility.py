import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from manetids import mobility as mob
from manetids.errors import ConfigInvalid

BOUNDS = mob.Bounds(500.0, 500.0)
PARAMS = mob.RwpParams(0.0, 20.0, 2.0)


def moving(x, y, wx, wy, speed, t=0.0):
    return mob.MotionState(x, y, wx, wy, speed, t, None)


def test_bounds_and_params_validate():
    with pytest.raises(ConfigInvalid):
        mob.Bounds(0, 10)
    with pytest.raises(ConfigInvalid):
        mob.RwpParams(5, 5, 1)
    with pytest.raises(ConfigInvalid):
        mob.RwpParams(0, 5, -1)


def test_leg_from_fig4_start_is_legal():
    state = mob.MotionState(133.0, 180.0, 133.0, 180.0, 0.0, 2.0, 2.0)
    params = mob.RwpParams(0.0, 10.0, 2.0)
    rng = mob.node_rng(4, 0)
    for _ in range(200):
        leg = mob.sample_next_leg(state, params, BOUNDS, rng)
        assert leg.moving
        assert 0.0 < leg.speed <= 10.0
        assert BOUNDS.contains(*leg.waypoint)
        assert leg.position == (133.0, 180.0)


def test_sample_requires_expired_pause():
    state = mob.MotionState(1, 1, 1, 1, 0, 0.0, 2.0)
    with pytest.raises(ValueError):
        mob.sample_next_leg(state, PARAMS, BOUNDS, mob.node_rng(1, 1))


def test_same_seed_same_legs():
    def legs(seed):
        rng = mob.node_rng(seed, 3)
        s = mob.initial_state(BOUNDS, PARAMS, rng)
        out = []
        for _ in range(20):
            s = mob.step(s, PARAMS, BOUNDS, rng, 7.3)
            out.append((s.x, s.y, s.wx, s.wy, s.speed))
        return out

    assert legs(11) == legs(11)
    assert legs(11) != legs(12)


def test_paused_node_stays_put():
    s = mob.MotionState(10, 20, 10, 20, 0, 0.0, 2.0)
    out = mob.advance(s, PARAMS, 1.5)
    assert out.position == (10, 20)
    assert out.time == 1.5


def test_linear_kinematics_halfway():
    out = mob.advance(moving(0, 0, 100, 0, 10.0), PARAMS, 5.0)
    assert out.position == (50.0, 0.0)
    assert out.moving


def test_arrival_clamps_and_pauses():
    out = mob.advance(moving(0, 0, 30, 0, 10.0, t=4.0), PARAMS, 5.0)
    assert out.position == (30, 0)
    assert out.paused_until == pytest.approx(4.0 + 3.0 + PARAMS.pause_time)


def test_position_at_identity_and_initial_pause():
    rng = mob.node_rng(5, 0)
    init = mob.initial_state(BOUNDS, PARAMS, rng)
    assert mob.position_at(init, PARAMS, BOUNDS, rng, 0.0) == init.position
    assert mob.position_at(init, PARAMS, BOUNDS, rng, PARAMS.pause_time / 2) == init.position


def _closed_form(seed, node, t_query):
    """Independent re-derivation of the trajectory from the raw random stream."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, node]))
    x, y = rng.uniform(0, 500), rng.uniform(0, 500)
    clock = PARAMS.pause_time
    while True:
        if t_query <= clock:
            return x, y
        wx, wy = rng.uniform(0, 500), rng.uniform(0, 500)
        v = 20.0 - 20.0 * rng.random()
        d = math.hypot(wx - x, wy - y)
        if t_query < clock + d / v:
            f = (t_query - clock) * v / d
            return x + (wx - x) * f, y + (wy - y) * f
        x, y = wx, wy
        clock += d / v + PARAMS.pause_time


@given(st.integers(0, 10_000), st.integers(0, 14), st.floats(0, 200))
@settings(max_examples=200, deadline=None)
def test_position_at_matches_closed_form(seed, node, t):
    rng = mob.node_rng(seed, node)
    init = mob.initial_state(BOUNDS, PARAMS, rng)
    got = mob.position_at(init, PARAMS, BOUNDS, rng, t)
    want = _closed_form(seed, node, t)
    assert math.hypot(got[0] - want[0], got[1] - want[1]) < 1e-9


@given(st.integers(0, 10_000), st.floats(0, 100))
@settings(max_examples=50, deadline=None)
def test_position_at_matches_fine_stepping(seed, t):
    rng_a = mob.node_rng(seed, 0)
    init = mob.initial_state(BOUNDS, PARAMS, rng_a)
    direct = mob.position_at(init, PARAMS, BOUNDS, rng_a, t)

    rng_b = mob.node_rng(seed, 0)
    s = mob.initial_state(BOUNDS, PARAMS, rng_b)
    n = int(t // 0.1)
    for _ in range(n):
        s = mob.step(s, PARAMS, BOUNDS, rng_b, 0.1)
    s = mob.step(s, PARAMS, BOUNDS, rng_b, t - s.time)
    assert math.hypot(direct[0] - s.x, direct[1] - s.y) < 1e-9


def test_positions_stay_in_bounds_million_samples():
    n = 0
    for seed in range(1000):
        rng = mob.node_rng(seed, seed % 15)
        s = mob.initial_state(BOUNDS, PARAMS, rng)
        for t in np.sort(np.random.default_rng(seed).uniform(0, 200, 1000)):
            s = mob.step(s, PARAMS, BOUNDS, rng, t - s.time)
            assert 0.0 <= s.x <= 500.0 and 0.0 <= s.y <= 500.0
            n += 1
    assert n == 10**6


def test_leg_properties_along_a_trajectory():
    rng = mob.node_rng(77, 2)
    s = mob.initial_state(BOUNDS, PARAMS, rng)
    prev = s
    pause_start = 0.0
    for _ in range(2000):
        s = mob.step(prev, PARAMS, BOUNDS, rng, 0.1)
        if prev.moving and s.moving and prev.waypoint == s.waypoint:
            dist = math.hypot(s.x - prev.x, s.y - prev.y)
            assert dist == pytest.approx(s.speed * 0.1, abs=1e-9)
        if s.moving:
            assert 0.0 < s.speed <= PARAMS.max_speed
        if not prev.moving and not s.moving and prev.paused_until == s.paused_until:
            assert s.position == prev.position
        if prev.moving and not s.moving:
            # pause length fixed from the arrival instant
            arrival = s.paused_until - PARAMS.pause_time
            assert prev.time <= arrival <= s.time
            pause_start = arrival
        if not prev.moving and s.moving:
            assert prev.paused_until - pause_start == pytest.approx(PARAMS.pause_time, abs=1e-12) or pause_start == 0.0
        prev = s
