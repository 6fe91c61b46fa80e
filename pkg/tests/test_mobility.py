import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from thzmc.simulator.mobility import Arena, BlockerState, initial_state, rdm_step, straight_legs


def test_straight_motion_between_turns():
    arena = Arena(50.0, speed=1.5)
    state = BlockerState(np.array([[1.0, 2.0]]), np.array([0.3]), np.array([100.0]))
    out = rdm_step(state, 2.0, arena, np.random.default_rng(0))
    np.testing.assert_allclose(out.position[0], [1 + 3 * math.cos(0.3), 2 + 3 * math.sin(0.3)],
                               rtol=1e-12)
    assert out.time_to_turn[0] == pytest.approx(98.0)
    assert out.heading[0] == 0.3


def test_specular_reflection():
    arena = Arena(10.0)
    state = BlockerState(np.array([[9.0, 0.0]]), np.array([0.0]), np.array([100.0]))
    out = rdm_step(state, 3.0, arena, np.random.default_rng(0))
    np.testing.assert_allclose(out.position[0], [8.0, 0.0], atol=1e-9)
    assert math.cos(out.heading[0]) == pytest.approx(-1.0)


def test_step_validation():
    arena = Arena(10.0)
    state = initial_state(3, arena, np.random.default_rng(0))
    with pytest.raises(ValueError):
        rdm_step(state, 0.0, arena, np.random.default_rng(0))
    with pytest.raises(ValueError):
        Arena(0.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), dt=st.floats(0.1, 50.0))
def test_blockers_stay_in_arena(seed, dt):
    arena = Arena(12.0, speed=2.0, leg_mean=3.0)
    rng = np.random.default_rng(seed)
    out = rdm_step(initial_state(50, arena, rng), dt, arena, rng)
    assert np.all(np.hypot(*out.position.T) <= arena.radius * (1 + 1e-12))
    assert np.all(out.time_to_turn > 0)


def test_legs_are_continuous_and_cover_horizon():
    arena = Arena(8.0, leg_mean=2.0)
    rng = np.random.default_rng(1)
    state = initial_state(5, arena, rng)
    pieces = list(straight_legs(state, 60.0, arena, rng, batch=4))
    t0, t1, x0, y0, vx, vy = (np.concatenate(c) for c in zip(*pieces))
    assert np.all(t1 >= t0)
    np.testing.assert_allclose(np.hypot(vx, vy), 1.0, rtol=1e-12)
    assert t1.max() == pytest.approx(60.0)
    ends = np.hypot(x0 + vx * (t1 - t0), y0 + vy * (t1 - t0))
    assert np.all(ends <= arena.radius + 1e-9)


def test_long_run_positions_stay_uniform():
    arena = Arena(20.0)
    rng = np.random.default_rng(2)
    state = initial_state(2000, arena, rng)
    radii, angles = [], []
    # frames 200 s apart are well beyond the arena mixing time R^2 / (v^2 leg_mean)
    for _ in range(10):
        state = rdm_step(state, 200.0, arena, rng)
        radii.append(np.hypot(*state.position.T))
        angles.append(np.arctan2(state.position[:, 1], state.position[:, 0]))
    u = (np.concatenate(radii) / arena.radius) ** 2
    a = np.concatenate(angles)
    assert stats.chisquare(np.histogram(u, np.linspace(0, 1, 21))[0]).pvalue > 0.01
    assert stats.chisquare(np.histogram(a, np.linspace(-math.pi, math.pi, 21))[0]).pvalue > 0.01


def test_subregion_counts_poisson():
    lam, arena = 0.2, Arena(15.0)
    rng = np.random.default_rng(3)
    counts = []
    for _ in range(1500):
        n = rng.poisson(lam * math.pi * arena.radius ** 2)
        state = rdm_step(initial_state(n, arena, rng), 30.0, arena, rng)
        x, y = state.position.T
        counts.append(int(np.sum((np.abs(x - 3) < 1.5) & (np.abs(y) < 1.0))))
    counts = np.array(counts)
    mean = lam * 3.0 * 2.0
    assert abs(counts.mean() - mean) <= 3 * math.sqrt(mean / counts.size)
    k = np.arange(0, 4)
    expected = np.append(stats.poisson.pmf(k, mean), stats.poisson.sf(k[-1], mean)) * counts.size
    observed = np.append(np.bincount(np.minimum(counts, 4), minlength=5)[:4],
                         np.sum(counts >= 4))
    assert stats.chisquare(observed, expected).pvalue > 0.01
