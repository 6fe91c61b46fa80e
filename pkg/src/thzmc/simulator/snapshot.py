"""Snapshot Monte Carlo for connection probability.

Each trial drops APs as a PPP in the UE's non-self-blockage sector beyond
``r0`` and blockers as a PPP over the plane, then checks every associated
link's rectangular blockage zone for blocker centres. Blockers are shared by
all links of a trial, so overlapping zones are correlated exactly as in the
geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..analysis import StrategyKind
from ..blockage import SystemParams, blockage_depth
from ..distances import truncation_radius

__all__ = ["Snapshot", "InconclusiveError", "arena_radius", "draw_snapshot",
           "snapshot_connection_probability", "snapshot_capacity", "links_blocked"]

CHUNK = 4096


class InconclusiveError(RuntimeError):
    """Region too small to hold the associated APs in enough trials."""


def arena_radius(params: SystemParams) -> float:
    """max(50 m, 3x the quadrature truncation radius of the closest-AP distance)."""
    return max(50.0, 3.0 * truncation_radius(params, 1))


@dataclass
class Snapshot:
    """One realisation: UE at the origin facing +x, sector |azimuth| <= omega/2."""

    ap_positions: np.ndarray
    blocker_positions: np.ndarray
    region_radius: float


def draw_snapshot(params: SystemParams, rng: np.random.Generator,
                  region_radius: float | None = None) -> Snapshot:
    """Full snapshot with every AP and blocker inside the region (for inspection)."""
    R = arena_radius(params) if region_radius is None else region_radius
    n_ap = rng.poisson(params.lambda_a * 0.5 * params.omega * (R * R - params.r0 ** 2))
    r = np.sqrt(rng.uniform(params.r0 ** 2, R * R, n_ap))
    th = rng.uniform(-0.5 * params.omega, 0.5 * params.omega, n_ap)
    n_b = rng.poisson(params.lambda_b * math.pi * R * R)
    rb = R * np.sqrt(rng.uniform(0, 1, n_b))
    tb = rng.uniform(0, 2 * math.pi, n_b)
    return Snapshot(np.column_stack([r * np.cos(th), r * np.sin(th)]),
                    np.column_stack([rb * np.cos(tb), rb * np.sin(tb)]), R)


def links_blocked(ap_xy: np.ndarray, blockers: np.ndarray, params: SystemParams) -> np.ndarray:
    """Boolean per AP: some blocker centre lies in the link's 2 r_b x d(x) rectangle."""
    if len(ap_xy) == 0:
        return np.zeros(0, dtype=bool)
    dist = np.hypot(ap_xy[:, 0], ap_xy[:, 1])
    ux, uy = ap_xy[:, 0] / dist, ap_xy[:, 1] / dist
    d = blockage_depth(dist, params)
    if len(blockers) == 0:
        return np.zeros(len(ap_xy), dtype=bool)
    along = blockers[:, None, 0] * ux + blockers[:, None, 1] * uy
    across = -blockers[:, None, 0] * uy + blockers[:, None, 1] * ux
    inside = (along >= 0) & (along <= d) & (np.abs(across) <= params.r_b)
    return inside.any(axis=0)


def _closest_in_annulus(rate: float, a: float, b: float, half: float, need: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = rng.poisson(rate * half * (b * b - a * a))
    r = np.sort(np.sqrt(rng.uniform(a * a, b * b, n)))[:need]
    return r, rng.uniform(-half, half, r.size)


def _trial_chunk(n_max: int, params: SystemParams, R: float, size: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, int]:
    """Distances and LOS flags of the ``n_max`` closest APs of each trial.

    Returns ``dist`` and ``los`` of shape (size, n_max) (NaN / False where a
    trial has fewer APs) and the number of trials that had fewer than
    ``n_max`` APs in the region.

    APs are drawn in an inner disc holding the ``n_max`` closest APs except
    with probability ~1e-9; trials short there get the outer annulus drawn
    separately (disjoint regions of a PPP are independent).
    """
    r0 = params.r0
    half = 0.5 * params.omega
    lam = params.lambda_a
    r_in = min(R, truncation_radius(params, n_max))
    counts = rng.poisson(lam * half * (r_in * r_in - r0 * r0), size)
    total = int(counts.sum())
    trial = np.repeat(np.arange(size), counts)
    radius = np.sqrt(rng.uniform(r0 * r0, r_in * r_in, total))
    theta = rng.uniform(-half, half, total)
    order = np.lexsort((radius, trial))
    trial, radius, theta = trial[order], radius[order], theta[order]
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rank = np.arange(total) - np.repeat(starts, counts)
    keep = rank < n_max
    trial, radius, theta, rank = trial[keep], radius[keep], theta[keep], rank[keep]

    short = 0
    if r_in < R:
        extra_t, extra_r, extra_a, extra_k = [], [], [], []
        for t in np.flatnonzero(counts < n_max):
            have = int(counts[t])
            r, a = _closest_in_annulus(lam, r_in, R, half, n_max - have, rng)
            extra_t += [t] * r.size
            extra_r += r.tolist()
            extra_a += a.tolist()
            extra_k += list(range(have, have + r.size))
            short += have + r.size < n_max
        if extra_t:
            trial = np.concatenate((trial, extra_t)).astype(int)
            radius = np.concatenate((radius, extra_r))
            theta = np.concatenate((theta, extra_a))
            rank = np.concatenate((rank, extra_k)).astype(int)
    else:
        short = int(np.sum(counts < n_max))

    dist = np.full((size, n_max), np.nan)
    ang = np.zeros((size, n_max))
    dist[trial, rank] = radius
    ang[trial, rank] = theta
    depth = blockage_depth(np.nan_to_num(dist, nan=0.0), params)
    # blockers only matter inside the disc reaching every kept rectangle corner
    reach = np.sqrt(np.nanmax(np.where(np.isnan(dist), 0.0, depth), axis=1) ** 2 + params.r_b ** 2)
    nb = rng.poisson(params.lambda_b * math.pi * reach * reach)
    btrial = np.repeat(np.arange(size), nb)
    br = reach[btrial] * np.sqrt(rng.uniform(0, 1, btrial.size))
    bt = rng.uniform(0, 2 * math.pi, btrial.size)
    bx, by = br * np.cos(bt), br * np.sin(bt)

    blocked = np.zeros((size, n_max), dtype=bool)
    for k in range(n_max):
        a = ang[btrial, k]
        along = bx * np.cos(a) + by * np.sin(a)
        across = -bx * np.sin(a) + by * np.cos(a)
        hit = (along >= 0) & (along <= depth[btrial, k]) & (np.abs(across) <= params.r_b)
        np.logical_or.at(blocked[:, k], btrial[hit], True)
    los = ~blocked & ~np.isnan(dist)
    return dist, los, short


def _degrees(n) -> list[int]:
    if isinstance(n, StrategyKind):
        return [n.degree]
    degrees = [n] if isinstance(n, (int, np.integer)) else sorted(set(int(k) for k in n))
    if not degrees or min(degrees) < 1:
        raise ValueError("degrees must be >= 1")
    return degrees


def _run_chunks(n_max, params, trials, rng, region_radius, chunk, reduce):
    if trials < 1:
        raise ValueError("need trials >= 1")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    R = arena_radius(params) if region_radius is None else region_radius
    short = 0
    streams = gen.spawn(math.ceil(trials / chunk))
    for i, g in enumerate(streams):
        size = min(chunk, trials - i * chunk)
        dist, los, s = _trial_chunk(n_max, params, R, size, g)
        reduce(dist, los)
        short += s
    if short > 0.01 * trials:
        raise InconclusiveError(
            f"{short} of {trials} snapshots had fewer than {n_max} APs within "
            f"{R:.1f} m; enlarge the region")


def snapshot_connection_probability(n, params: SystemParams, trials: int, rng,
                                    region_radius: float | None = None,
                                    chunk: int = CHUNK) -> dict[int, tuple[float, float]]:
    """Fraction of snapshots in which one of the ``n`` closest in-sector APs is LOS.

    ``n`` is a degree, a list of degrees (all evaluated on the same
    snapshots) or a ``StrategyKind``. Returns ``{degree: (estimate, std_error)}``.
    """
    degrees = _degrees(n)
    n_max = max(degrees)
    hits = np.zeros(n_max)

    def reduce(dist, los):
        hits[:] += np.logical_or.accumulate(los, axis=1).sum(axis=0)

    _run_chunks(n_max, params, trials, rng, region_radius, chunk, reduce)
    out = {}
    for k in degrees:
        p = hits[k - 1] / trials
        out[k] = (float(p), math.sqrt(p * (1 - p) / trials))
    return out


def snapshot_capacity(n, params: SystemParams, capacity: Callable, trials: int, rng,
                      region_radius: float | None = None,
                      chunk: int = CHUNK) -> dict[str, dict[int, tuple[float, float]]]:
    """Mean capacity over snapshots when served by the closest LOS AP.

    Returns ``{"SC": {1: (mean, se)}, "C-MC": {degree: (mean, se)},
    "gain": {degree: (gain, se)}}`` where gain is C-MC relative to SC on the
    same snapshots (delta-method standard error). SC uses only the closest AP. Reactive switching depends on the link
    history and is not defined on a single snapshot.
    """
    degrees = _degrees(n)
    n_max = max(degrees)
    s1 = np.zeros(n_max + 1)
    s2 = np.zeros(n_max + 1)
    s12 = np.zeros(n_max + 1)

    def reduce(dist, los):
        c = np.zeros(dist.shape)
        ok = ~np.isnan(dist)
        c[ok] = capacity(dist[ok])
        served = np.zeros(len(dist))
        done = np.zeros(len(dist), dtype=bool)
        sc = np.where(los[:, 0], c[:, 0], 0.0)
        for k in range(n_max):
            take = los[:, k] & ~done
            served[take] = c[take, k]
            done |= take
            s1[k + 1] += served.sum()
            s2[k + 1] += (served ** 2).sum()
            s12[k + 1] += (served * sc).sum()
        s1[0] += sc.sum()
        s2[0] += (sc ** 2).sum()

    _run_chunks(n_max, params, trials, rng, region_radius, chunk, reduce)

    def stat(i):
        m = s1[i] / trials
        var = max(s2[i] / trials - m * m, 0.0) * trials / max(trials - 1, 1)
        return float(m), math.sqrt(var / trials)

    def gain(i):
        m0, mk = s1[0] / trials, s1[i] / trials
        if m0 <= 0:
            return math.nan, math.nan
        r = mk / m0
        v0 = s2[0] / trials - m0 * m0
        vk = s2[i] / trials - mk * mk
        cov = s12[i] / trials - m0 * mk
        var = max(vk - 2 * r * cov + r * r * v0, 0.0) / (m0 * m0)
        return float(r - 1.0), math.sqrt(var / trials)

    return {"SC": {1: stat(0)}, "C-MC": {k: stat(k) for k in degrees},
            "gain": {k: gain(k) for k in degrees}}
