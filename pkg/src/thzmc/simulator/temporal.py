"""Event-driven simulation of link blockage under RDM blocker mobility.

Blocker trajectories are straight legs; the times a leg spends inside a
link's blockage rectangle are found exactly by slab clipping, so no time
stepping is involved. Per-link blocked intervals are merged and then fed to
the SC / C-MC / R-MC state machines.
"""

from __future__ import annotations

import functools
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..analysis import Strategy, StrategyKind
from ..blockage import SystemParams, blockage_depth
from ..channel import AbsorptionSpectrum, CapacityCurve, LinkBudget, TransmissionWindow
from .mobility import Arena, initial_state, straight_legs

__all__ = ["Topology", "LinkHistory", "SimTrace", "OUTAGE", "simulate_links", "follow_strategy",
           "run_temporal", "temporal_throughput", "mean_and_se", "ratio_and_se", "time_shares",
           "los_fraction", "mean_los_interval", "throughput_and_se", "write_trace",
           "run_replicas", "replicate_links"]

OUTAGE = -1
MERGE_TOL = 1e-9  # s


@dataclass(frozen=True)
class Topology:
    """Fixed AP layout seen from the UE: 2D distances (ascending) and azimuths."""

    distances: tuple[float, ...]
    azimuths: tuple[float, ...]

    def __post_init__(self):
        d = tuple(float(v) for v in self.distances)
        a = tuple(float(v) for v in self.azimuths)
        if not d or len(d) != len(a):
            raise ValueError("need one azimuth per distance")
        if any(v <= 0 for v in d) or any(b < a_ for a_, b in zip(d, d[1:])):
            raise ValueError("distances must be positive and ascending")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "azimuths", a)

    def __len__(self):
        return len(self.distances)

    def arena_radius(self) -> float:
        return max(50.0, 3.0 * max(self.distances))


@dataclass(frozen=True, eq=False)
class LinkHistory:
    """Merged blocked intervals of every link over ``[0, t_end]``."""

    topology: Topology
    t_end: float
    blocked: tuple[np.ndarray, ...]  # each (k, 2), sorted, disjoint

    def los_intervals(self, i: int) -> np.ndarray:
        b = self.blocked[i]
        starts = np.concatenate(([0.0], b[:, 1]))
        ends = np.concatenate((b[:, 0], [self.t_end]))
        keep = ends > starts
        return np.column_stack([starts[keep], ends[keep]])


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Result of one temporal run under one strategy.

    ``switch_times[k]`` starts a period in which the UE is on AP
    ``states[k]`` (0-based, or ``OUTAGE``) until the next switch or
    ``t_end``. ``events`` lists ``(t, ap, blocked, state)`` per link change.
    """

    kind: StrategyKind
    history: LinkHistory
    switch_times: np.ndarray
    states: np.ndarray
    events: list = field(default_factory=list, repr=False)

    @property
    def t_end(self) -> float:
        return self.history.t_end

    @property
    def topology(self) -> Topology:
        return self.history.topology

    def los_intervals(self, i: int) -> np.ndarray:
        return self.history.los_intervals(i)

    def durations(self) -> np.ndarray:
        return np.diff(np.concatenate((self.switch_times, [self.t_end])))

    def connected_time(self) -> np.ndarray:
        """Total time on each AP."""
        n = len(self.topology)
        dur = self.durations()
        on = self.states >= 0
        return np.bincount(self.states[on], weights=dur[on], minlength=n)


# --------------------------------------------------------------------------
# link process
# --------------------------------------------------------------------------

def _clip_slab(c, v, lo, hi, t_max):
    """Entry/exit times in ``[0, t_max]`` of ``c + v t`` within ``[lo, hi]``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - c) / v
        t2 = (hi - c) / v
    still = v == 0
    enter = np.where(still, np.where((c >= lo) & (c <= hi), -np.inf, np.inf), np.minimum(t1, t2))
    leave = np.where(still, np.where((c >= lo) & (c <= hi), np.inf, -np.inf), np.maximum(t1, t2))
    return np.maximum(enter, 0.0), np.minimum(leave, t_max)


def _merge(intervals: np.ndarray) -> np.ndarray:
    if intervals.size == 0:
        return np.zeros((0, 2))
    iv = intervals[np.argsort(intervals[:, 0], kind="stable")]
    out = [list(iv[0])]
    for a, b in iv[1:]:
        if a <= out[-1][1] + MERGE_TOL:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return np.asarray(out)


def simulate_links(topology: Topology, params: SystemParams, t_end: float,
                   rng: np.random.Generator, arena: Arena | None = None) -> LinkHistory:
    """Blocked intervals of every link from blockers moving by RDM."""
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    arena = arena or Arena(topology.arena_radius(), params.v_b)
    n = len(topology)
    if params.lambda_b == 0:
        return LinkHistory(topology, t_end, tuple(np.zeros((0, 2)) for _ in range(n)))
    nb = rng.poisson(params.lambda_b * math.pi * arena.radius ** 2)
    state = initial_state(nb, arena, rng)
    depth = blockage_depth(np.asarray(topology.distances), params)
    cos = np.cos(topology.azimuths)
    sin = np.sin(topology.azimuths)
    reach = math.hypot(float(depth.max()), params.r_b)
    pieces: list[list[np.ndarray]] = [[] for _ in range(n)]
    for t0, t1, x0, y0, vx, vy in straight_legs(state, t_end, arena, rng):
        dt = t1 - t0
        # legs that never come within reach of the UE cannot hit any rectangle
        px = np.clip(-(x0 * vx + y0 * vy) / (vx * vx + vy * vy), 0.0, dt)
        near = np.hypot(x0 + vx * px, y0 + vy * px) <= reach
        if not np.any(near):
            continue
        t0, dt, x0, y0, vx, vy = t0[near], dt[near], x0[near], y0[near], vx[near], vy[near]
        for k in range(n):
            along = x0 * cos[k] + y0 * sin[k]
            v_al = vx * cos[k] + vy * sin[k]
            across = -x0 * sin[k] + y0 * cos[k]
            v_ac = -vx * sin[k] + vy * cos[k]
            a1, b1 = _clip_slab(along, v_al, 0.0, depth[k], dt)
            a2, b2 = _clip_slab(across, v_ac, -params.r_b, params.r_b, dt)
            a, b = np.maximum(a1, a2), np.minimum(b1, b2)
            hit = b > a
            if np.any(hit):
                pieces[k].append(np.column_stack([t0[hit] + a[hit], t0[hit] + b[hit]]))
    blocked = tuple(_merge(np.concatenate(p) if p else np.zeros((0, 2))) for p in pieces)
    return LinkHistory(topology, t_end, blocked)


# --------------------------------------------------------------------------
# strategies
# --------------------------------------------------------------------------

def _link_events(history: LinkHistory):
    """Initial LOS flags and the sorted change events ``(t, ap, becomes_blocked)``."""
    n = len(history.topology)
    los0 = np.ones(n, dtype=bool)
    ts, aps, kinds = [], [], []
    for i, b in enumerate(history.blocked):
        if len(b) == 0:
            continue
        if b[0, 0] <= 0.0:
            los0[i] = False
        starts = b[:, 0][b[:, 0] > 0.0]
        ends = b[:, 1][b[:, 1] < history.t_end]
        ts += [starts, ends]
        aps += [np.full(starts.size, i), np.full(ends.size, i)]
        kinds += [np.ones(starts.size, dtype=bool), np.zeros(ends.size, dtype=bool)]
    if not ts:
        return los0, np.zeros(0), np.zeros(0, dtype=int), np.zeros(0, dtype=bool)
    t, ap, kind = np.concatenate(ts), np.concatenate(aps), np.concatenate(kinds)
    order = np.lexsort((ap, t))
    return los0, t[order], ap[order], kind[order]


def _first_los(los: np.ndarray) -> int:
    idx = np.flatnonzero(los)
    return int(idx[0]) if idx.size else OUTAGE


def follow_strategy(kind: StrategyKind | Strategy, history: LinkHistory) -> SimTrace:
    """Apply a connectivity strategy to a link history.

    Link changes sharing a timestamp are applied together (AP-index order)
    before the strategy reacts.
    """
    if not isinstance(kind, StrategyKind):
        s = Strategy(kind)
        kind = StrategyKind(s, 1 if s is Strategy.SC else len(history.topology))
    n = kind.degree
    if n > len(history.topology):
        raise ValueError("strategy degree exceeds the number of APs in the topology")
    los0, t, ap, blk = _link_events(history)
    keep = ap < n
    t, ap, blk = t[keep], ap[keep], blk[keep]
    los = los0[:n].copy()
    strategy = kind.strategy

    def choose(current):
        if strategy is Strategy.SC:
            return 0 if los[0] else OUTAGE
        if strategy is Strategy.C_MC:
            return _first_los(los)
        if current != OUTAGE and los[current]:
            return current
        return _first_los(los)

    state = choose(OUTAGE)
    switch_t, states, events = [0.0], [state], []
    i = 0
    while i < t.size:
        j = i
        while j < t.size and t[j] == t[i]:
            j += 1
        los[ap[i:j]] = ~blk[i:j]
        new = choose(state)
        if strategy is Strategy.C_MC:
            assert new == _first_los(los)
        elif strategy is Strategy.R_MC and state != OUTAGE and los[state]:
            assert new == state
        for k in range(i, j):
            events.append((float(t[k]), int(ap[k]), bool(blk[k]), new))
        if new != state:
            switch_t.append(float(t[i]))
            states.append(new)
            state = new
        i = j
    return SimTrace(kind, history, np.asarray(switch_t), np.asarray(states, dtype=int), events)


def run_temporal(kind: StrategyKind | Strategy, topology: Topology, params: SystemParams,
                 t_end: float, rng) -> SimTrace:
    """Simulate blocker motion for ``t_end`` seconds and apply ``kind``."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return follow_strategy(kind, simulate_links(topology, params, t_end, gen))


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------
#
# Blocker density fluctuates on the arena scale for ~R^2 / (v^2 leg_mean)
# seconds and the blocker count of a run is drawn once, so consecutive
# batches of one long run are correlated. Standard errors therefore come
# from independent replicas, each started from the stationary state.

def mean_and_se(values) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over the first axis (one row per replica)."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n < 2:
        raise ValueError("need at least two replicas")
    return v.mean(axis=0), v.std(axis=0, ddof=1) / math.sqrt(n)


def ratio_and_se(num, den) -> tuple[np.ndarray, np.ndarray]:
    """Pooled ratio sum(num) / sum(den) with its delta-method standard error."""
    a = np.asarray(num, dtype=float)
    b = np.asarray(den, dtype=float)
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two replicas")
    r = a.sum(axis=0) / b.sum(axis=0)
    resid = a - r * b
    se = np.sqrt((resid ** 2).sum(axis=0) / (n * (n - 1))) / b.mean(axis=0)
    return r, se


def time_shares(traces) -> tuple[np.ndarray, np.ndarray]:
    """Per-AP share of non-outage time across replicas: estimate, standard error."""
    t = np.array([tr.connected_time() for tr in traces])
    return ratio_and_se(t, t.sum(axis=1, keepdims=True))


def los_fraction(histories, i: int = 0) -> tuple[float, float]:
    """LOS time fraction of link ``i`` across replicas."""
    f = [np.diff(h.los_intervals(i), axis=1).sum() / h.t_end for h in histories]
    m, s = mean_and_se(f)
    return float(m), float(s)


def mean_los_interval(histories, i: int = 0) -> tuple[float, float]:
    """Mean length of LOS intervals of link ``i`` that start and end inside a run."""
    tot, cnt = [], []
    for h in histories:
        iv = h.los_intervals(i)
        inner = iv[(iv[:, 0] > 0) & (iv[:, 1] < h.t_end)]
        tot.append(np.diff(inner, axis=1).sum())
        cnt.append(len(inner))
    m, s = ratio_and_se(tot, cnt)
    return float(m), float(s)


def _capacity_callable(spec, window, budget, params, topology):
    if spec is None or window is None or budget is None or params is None:
        raise ValueError("need a capacity callable, or spec, window, budget and params")
    x = np.asarray(topology.distances)
    curve = CapacityCurve(spec, window, budget, params.h_a, params.h_u,
                          float(x.min()), float(x.max()) + 1e-6)
    return curve.exact


def temporal_throughput(trace: SimTrace, spec: AbsorptionSpectrum | None = None,
                        window: TransmissionWindow | None = None,
                        budget: LinkBudget | None = None, *,
                        params: SystemParams | None = None,
                        capacity: Callable | None = None) -> float:
    """Time-average capacity (bit/s) of one trace; outage contributes nothing.

    ``capacity`` (any C(x) callable) overrides building the channel from
    ``spec``, ``window``, ``budget`` and the heights in ``params``.
    """
    if capacity is None:
        capacity = _capacity_callable(spec, window, budget, params, trace.topology)
    c = np.asarray(capacity(np.asarray(trace.topology.distances)), dtype=float)
    return float(trace.connected_time() @ c / trace.t_end)


def throughput_and_se(traces, capacity: Callable) -> tuple[float, float]:
    """Replica mean and standard error of the time-average throughput."""
    m, s = mean_and_se([temporal_throughput(tr, capacity=capacity) for tr in traces])
    return float(m), float(s)


def _state_name(state: int) -> str:
    return "OUTAGE" if state == OUTAGE else f"AP_{state + 1}"


def write_trace(trace: SimTrace, out: io.TextIOBase | None = None) -> str:
    """Dump link events as ``t<TAB>ap<TAB>BLOCKED|UNBLOCKED<TAB>state`` lines."""
    buf = io.StringIO()
    for t, ap, blk, state in trace.events:
        buf.write(f"{t:.9f}\t{ap + 1}\t{'BLOCKED' if blk else 'UNBLOCKED'}\t{_state_name(state)}\n")
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def run_replicas(fn: Callable[[np.random.Generator], object], seed, replicas: int,
                 workers: int = 1) -> list:
    """Run ``fn`` on independent spawned streams; results keep replica order."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(replicas)
    gens = [np.random.default_rng(s) for s in streams]
    if workers <= 1:
        return [fn(g) for g in gens]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, gens))


def _links_task(topology, params, t_each, rng):
    return simulate_links(topology, params, t_each, rng)


def replicate_links(topology: Topology, params: SystemParams, t_each: float, replicas: int,
                    seed=None, workers: int = 1) -> list[LinkHistory]:
    """Independent link histories of ``t_each`` seconds each."""
    return run_replicas(functools.partial(_links_task, topology, params, t_each),
                        seed, replicas, workers)
