import math
from itertools import combinations

import numpy as np
import pytest
from shapely import affinity
from shapely.geometry import box
from shapely.ops import unary_union

from thzmc.analysis import Strategy, StrategyKind, conn_prob_mc, conn_prob_sc
from thzmc.blockage import blockage_depth
from thzmc.simulator.snapshot import (
    InconclusiveError,
    _trial_chunk,
    draw_snapshot,
    links_blocked,
    snapshot_connection_probability,
)


def zone(x, azimuth, params):
    d = float(blockage_depth(x, params))
    rect = box(0.0, -params.r_b, d, params.r_b)
    return affinity.rotate(rect, azimuth, origin=(0, 0), use_radians=True)


def overlap_aware_conn_prob(xs, azimuths, params):
    """1 - P(every zone occupied), by inclusion-exclusion over PPP void probabilities."""
    zones = [zone(x, a, params) for x, a in zip(xs, azimuths)]
    n = len(zones)
    all_blocked = 0.0
    for k in range(n + 1):
        for s in combinations(range(n), k):
            area = unary_union([zones[i] for i in s]).area if s else 0.0
            all_blocked += (-1) ** k * math.exp(-params.lambda_b * area)
    return 1.0 - all_blocked


def test_no_blockers_always_connected(params):
    out = snapshot_connection_probability([1, 3], params.with_(lambda_b=0.0), 5000, 1)
    assert out[1] == (1.0, 0.0) and out[3] == (1.0, 0.0)


def test_single_ap_matches_closed_form(params):
    for lam in (2e-3, 1e-2):
        p = params.with_(lambda_a=lam)
        est, se = snapshot_connection_probability(1, p, 100_000, np.random.default_rng(2))[1]
        assert abs(est - conn_prob_sc(p).value) <= 3 * se


def test_dense_aps_analysis_overestimates(params):
    p = params.with_(lambda_a=1.5e-2)
    sim = snapshot_connection_probability(4, p, 100_000, np.random.default_rng(3))[4][0]
    ana = conn_prob_mc(4, p, samples=200_000, rng=np.random.default_rng(4)).value
    assert sim <= ana


def test_fixed_topology_matches_overlap_oracle(params):
    xs, az = (3.0, 5.0, 8.0), (0.0, 0.05, -0.04)
    ap = np.array([[x * math.cos(a), x * math.sin(a)] for x, a in zip(xs, az)])
    rng = np.random.default_rng(5)
    trials, hits = 20_000, 0
    R = 10.0
    for _ in range(trials):
        n = rng.poisson(params.lambda_b * math.pi * R * R)
        r = R * np.sqrt(rng.uniform(0, 1, n))
        t = rng.uniform(0, 2 * math.pi, n)
        blocked = links_blocked(ap, np.column_stack([r * np.cos(t), r * np.sin(t)]), params)
        hits += not blocked.all()
    est = hits / trials
    se = math.sqrt(est * (1 - est) / trials)
    want = overlap_aware_conn_prob(xs, az, params)
    independent = 1 - np.prod([1 - math.exp(-params.lambda_b * zone(x, 0, params).area) for x in xs])
    assert abs(est - want) <= 3 * se
    # strongly overlapping zones make the independence product visibly optimistic
    assert independent - want > 10 * se


def test_links_blocked_rectangle_edges(params):
    ap = np.array([[5.0, 0.0]])
    d = float(blockage_depth(5.0, params))
    inside = np.array([[d - 1e-9, params.r_b - 1e-9]])
    outside = np.array([[d + 1e-6, 0.0], [-1e-6, 0.0], [1.0, params.r_b + 1e-6]])
    assert links_blocked(ap, inside, params).tolist() == [True]
    assert links_blocked(ap, outside, params).tolist() == [False]
    assert links_blocked(ap, np.zeros((0, 2)), params).tolist() == [False]


def test_trial_chunk_agrees_with_links_blocked(params):
    # same realisation evaluated by the full-snapshot path
    snap = draw_snapshot(params, np.random.default_rng(6))
    d = np.hypot(*snap.ap_positions.T)
    order = np.argsort(d)[:4]
    flags = links_blocked(snap.ap_positions[order], snap.blocker_positions, params)
    assert flags.shape == (4,)
    dist, los, short = _trial_chunk(4, params, 60.0, 2000, np.random.default_rng(7))
    assert short == 0 and dist.shape == (2000, 4)
    assert np.all(np.diff(dist, axis=1) >= 0) and np.all(dist >= params.r0)
    # per-link LOS rate close to the marginal p_L average of each rank
    from thzmc.blockage import los_probability
    np.testing.assert_allclose(los.mean(axis=0), los_probability(dist, params).mean(axis=0),
                               atol=4 * 0.5 / math.sqrt(2000))


def test_standard_error_shrinks_with_trials(params):
    a = snapshot_connection_probability(2, params, 20_000, 8)[2][1]
    b = snapshot_connection_probability(2, params, 80_000, 8)[2][1]
    assert b / a == pytest.approx(0.5, rel=0.1)


def test_same_seed_same_result(params):
    a = snapshot_connection_probability([1, 2], params, 10_000, 9)
    b = snapshot_connection_probability([1, 2], params, 10_000, 9)
    assert a == b


def test_small_region_is_inconclusive(params):
    with pytest.raises(InconclusiveError):
        snapshot_connection_probability(4, params.with_(lambda_a=1e-3), 2000, 1, region_radius=5.0)


def test_degree_arguments(params):
    kind = StrategyKind(Strategy.C_MC, 2)
    assert list(snapshot_connection_probability(kind, params, 1000, 1)) == [2]
    with pytest.raises(ValueError):
        snapshot_connection_probability(0, params, 1000, 1)
    with pytest.raises(ValueError):
        snapshot_connection_probability(1, params, 0, 1)
