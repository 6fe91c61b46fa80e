"""Analytic-versus-oracle checks shared by ``thzmc validate`` and the test suite.

Each ``check_*`` function returns a list of :class:`Check` results; none of
them raise on a tolerance violation.
"""

from __future__ import annotations

import filecmp
import math
import os
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, TextIO

import numpy as np
from scipy import integrate

from .analysis import (
    Strategy,
    build_switch_chain,
    conn_prob_mc,
    conn_prob_sc,
    conditional_capacity,
    ergodic_capacity_sc,
    expected_capacity,
    gamma_cmc,
    rmc_weights,
)
from .blockage import SystemParams, los_probability, mean_los_duration, mean_nlos_duration
from .channel import CapacityCurve, LinkGeometry, load_spectrum, usable_bandwidth
from .distances import joint_pdf, pdf_closest
from .simulator.snapshot import snapshot_connection_probability
from .simulator.temporal import (
    Topology,
    follow_strategy,
    replicate_links,
    throughput_and_se,
    time_shares,
)

__all__ = ["Check", "run_all", "CRITERIA", "TEMPORAL_TOPOLOGY", "HITRAN_ENV"]

#: Environment variable naming a HITRAN-grade spectrum file (10% humidity).
HITRAN_ENV = "THZMC_HITRAN_SPECTRUM"

#: Fixed 3-AP layout for the temporal checks (m, rad). AP1 and AP2 face
#: opposite ways so their blockage zones share no area.
TEMPORAL_TOPOLOGY = Topology((3.0, 6.0, 9.0), (-math.pi / 2, math.pi / 2, 0.0))


@dataclass(frozen=True)
class Check:
    criterion: str
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0
    skipped: bool = False
    info: bool = False

    def line(self) -> str:
        tag = "INFO" if self.info else "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"[{tag}] {self.criterion} {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _timed(criterion: str, limit: float, checks_fn: Callable[[], list[Check]]) -> list[Check]:
    t0 = time.perf_counter()
    checks = checks_fn()
    dt = time.perf_counter() - t0
    out = [replace(c, seconds=dt) for c in checks]
    out.append(Check(criterion, "runtime", dt < limit, f"{dt:.1f} s < {limit:g} s", dt))
    return out


def _z(a: float, b: float, se: float) -> float:
    return abs(a - b) / se if se > 0 else (0.0 if a == b else math.inf)


# --------------------------------------------------------------------------
# 1-3: deterministic identities
# --------------------------------------------------------------------------

def check_closed_form(base: SystemParams | None = None) -> list[Check]:
    base = base or SystemParams()
    worst = 0.0
    for la in np.logspace(-3, math.log10(2e-2), 5):
        for lb in (0.05, 0.1, 0.2, 0.5, 1.0):
            p = base.with_(lambda_a=float(la), lambda_b=lb)
            cf = conn_prob_sc(p, "closed_form").value
            qd = conn_prob_sc(p, "quadrature").value
            worst = max(worst, abs(cf - qd) / abs(qd))
    return [Check("1", "closed form vs quadrature (25 points)", worst <= 1e-6,
                  f"max rel diff {worst:.2e} <= 1e-6")]


def check_renewal(base: SystemParams | None = None) -> list[Check]:
    p = base or SystemParams()
    x = np.arange(1.0, 31.0)
    tl = mean_los_duration(x, p)
    tn = mean_nlos_duration(x, p)
    err = np.max(np.abs(los_probability(x, p) * (tl + tn) - tl) / tl)
    return [Check("2", "p_L (E[t_LOS] + E[t_NLOS]) = E[t_LOS]", err <= 1e-12,
                  f"max rel err {err:.2e} <= 1e-12")]


def check_normalization(base: SystemParams | None = None, topologies: int = 1000,
                        seed: int = 3) -> list[Check]:
    p = base or SystemParams()
    a = 0.5 * p.omega * p.lambda_a
    x_max = p.r0 + math.sqrt(40 / a)
    i1 = integrate.quad(lambda x: pdf_closest(x, p), p.r0, x_max, epsabs=0, epsrel=1e-12,
                        limit=200)[0]
    i2 = integrate.dblquad(lambda x2, x1: joint_pdf([x1, x2], p), p.r0, x_max,
                           lambda x1: x1, lambda x1: x_max, epsabs=0, epsrel=1e-10)[0]
    rng = np.random.default_rng(seed)
    worst_g, worst_u = 0.0, 0.0
    for _ in range(topologies):
        n = int(rng.integers(2, 7))
        xs = np.sort(rng.uniform(p.r0, 60.0, n))
        worst_g = max(worst_g, abs(gamma_cmc(xs, p).sum() - 1), abs(rmc_weights(xs, p).sum() - 1))
        ch = build_switch_chain(xs, p)
        worst_u = max(worst_u, float(np.max(np.abs(ch.u @ ch.d - (ch.d - np.eye(n))))))
    return [
        Check("3", "pdf_closest integrates to 1", abs(i1 - 1) <= 1e-6, f"|I-1| = {abs(i1 - 1):.1e}"),
        Check("3", "joint_pdf (N=2) integrates to 1", abs(i2 - 1) <= 1e-6, f"|I-1| = {abs(i2 - 1):.1e}"),
        Check("3", "gamma_C, gamma_R sum to 1", worst_g <= 1e-12, f"max |sum-1| = {worst_g:.1e}"),
        Check("3", "U D = D - I", worst_u <= 1e-10, f"max abs err {worst_u:.1e}"),
    ]


# --------------------------------------------------------------------------
# 4-5: simulator oracles
# --------------------------------------------------------------------------

def check_snapshot(base: SystemParams | None = None, trials: int = 100_000,
                   seed: int = 4) -> list[Check]:
    base = base or SystemParams()
    out = []
    ss = np.random.SeedSequence(seed)
    for lam, child in zip((5e-3, 1e-2, 1.5e-2), ss.spawn(3)):
        p = base.with_(lambda_a=lam)
        g_sim, g_mc = child.spawn(2)
        sim = snapshot_connection_probability([1, 2, 3, 4], p, trials, np.random.default_rng(g_sim))
        for n in (1, 2, 3, 4):
            an = conn_prob_mc(n, p, 10 ** 6, np.random.default_rng(g_mc.spawn(1)[0]))
            est, se = sim[n]
            if lam < 1.5e-2:
                z = _z(est, an.value, math.hypot(se, an.std_error))
                out.append(Check("4", f"lambda_a={lam:g} N={n} within 3 SE", z <= 3,
                                 f"sim {est:.4f} +- {se:.4f} vs analytic {an.value:.4f} (z={z:.1f})"))
            elif n >= 2:
                out.append(Check("4", f"lambda_a={lam:g} N={n} analytic >= simulated",
                                 an.value >= est,
                                 f"analytic {an.value:.4f} vs sim {est:.4f} +- {se:.4f}"))
    return out


def temporal_histories(params: SystemParams | None = None, t_each: float = 500.0,
                       replicas: int = 40, seed: int = 5, workers: int = 1):
    return replicate_links(TEMPORAL_TOPOLOGY, params or SystemParams(), t_each, replicas,
                           seed, workers)


def check_temporal(config=None, histories=None, strategies=(Strategy.C_MC, Strategy.R_MC),
                   capacity: Callable | None = None) -> list[Check]:
    """Connected-time shares and throughput on :data:`TEMPORAL_TOPOLOGY`."""
    from .cli import default_config

    config = config or default_config()
    p = config.params
    if histories is None:
        histories = temporal_histories(p)
    total = sum(h.t_end for h in histories)
    xs = np.asarray(TEMPORAL_TOPOLOGY.distances)
    if capacity is None:
        curve = CapacityCurve(config.get_spectrum(), config.window("W1").window,
                              config.budget("W1"), p.h_a, p.h_u, 1.0, 10.0)
        capacity = curve.exact
    out = []
    for strategy in strategies:
        label = f"5 {strategy.value}"
        traces = [follow_strategy(strategy, h) for h in histories]
        share, se = time_shares(traces)
        gamma = gamma_cmc(xs, p) if strategy is Strategy.C_MC else rmc_weights(xs, p)
        z = np.abs(share - gamma) / se
        out.append(Check(label, f"connected-time shares ({total:g} s)", bool(np.all(z <= 3)),
                         "sim " + np.array2string(share, precision=4) + " +- "
                         + np.array2string(se, precision=4) + " vs analytic "
                         + np.array2string(gamma, precision=4)
                         + " (z " + np.array2string(z, precision=1) + ")"))
        thr, tse = throughput_and_se(traces, capacity)
        an = float(conditional_capacity(strategy, xs, p, capacity))
        zt = _z(thr, an, tse)
        out.append(Check(label, "throughput vs sum-form conditional capacity", zt <= 3,
                         f"sim {thr / 1e9:.3f} +- {tse / 1e9:.3f} Gbit/s vs "
                         f"analytic {an / 1e9:.3f} Gbit/s (z={zt:.1f})"))
    return out


# --------------------------------------------------------------------------
# 6: reference numbers and trends
# --------------------------------------------------------------------------

def gain_grid(config, window: str, lambdas, degrees=(2, 3, 4), samples: int = 200_000,
              seed: int = 6, curve=None) -> dict:
    """Analytic capacity gains ``{(strategy, N): array over lambdas}``."""
    from .cli import shared_curve

    curve = curve or shared_curve(replace(config, degrees=tuple(degrees)), window,
                                  lambdas=lambdas)
    p0 = config.params
    out = {(s, n): np.zeros(len(lambdas)) for s in (Strategy.C_MC, Strategy.R_MC) for n in degrees}
    for i, lam in enumerate(lambdas):
        p = p0.with_(lambda_a=float(lam))
        sc = ergodic_capacity_sc(p, curve=curve).value
        for n in degrees:
            for s in (Strategy.C_MC, Strategy.R_MC):
                # same stream for every lambda and strategy: smooth, paired curves
                rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
                mc = expected_capacity(s, n, p, curve, samples, rng).value
                out[(s, n)][i] = (mc - sc) / sc
    return out


def check_reference_numbers(config=None, samples: int = 200_000) -> list[Check]:
    from .cli import default_config

    config = config or default_config()
    p = config.params
    out = []
    cp = conn_prob_mc(2, p.with_(lambda_a=1.5e-2)).value
    out.append(Check("6", "conn prob at lambda_a=0.015, N=2 ~ 0.95 +- 0.02",
                     abs(cp - 0.95) <= 0.02, f"{cp:.4f}"))

    path = os.environ.get(HITRAN_ENV)
    if path:
        spec = load_spectrum(path)
        w1 = config.window("W1").window
        bw = [np.subtract(*usable_bandwidth(LinkGeometry.from_heights(d, p.h_a, p.h_u), spec, w1)[::-1])
              for d in (1.0, 10.0)]
        for d, got, want in zip((1, 10), bw, (91.46e9, 58.65e9)):
            out.append(Check("6", f"W1 usable bandwidth at {d} m", abs(got - want) <= 2e9,
                             f"{got / 1e9:.2f} GHz vs {want / 1e9:.2f} +- 2 GHz"))
        g = gain_grid(replace(config, spectrum=spec), "W1", [1.5e-2], (2,), samples)
        for s, want in ((Strategy.C_MC, 0.10), (Strategy.R_MC, 0.02)):
            got = float(g[(s, 2)][0])
            out.append(Check("6", f"gain {s.value} N=2 at lambda_a=0.015",
                             abs(got - want) <= 0.03, f"{100 * got:.1f}% vs {100 * want:.0f} +- 3 pp"))
    else:
        out.append(Check("6", "HITRAN-grade numbers (bandwidth, gains)", True,
                         f"skipped: set {HITRAN_ENV} to a spectrum file", skipped=True))
    return out


def check_trends(config=None, samples: int = 200_000, lambdas=None) -> list[Check]:
    from .cli import default_config

    config = config or default_config()
    p = config.params
    spec = config.get_spectrum()
    lambdas = list(lambdas if lambdas is not None else config.lambda_grid)
    ref = 1.5e-2
    out = []

    for name, setup in config.windows:
        d = np.arange(1.0, 31.0)
        bw = np.array([np.subtract(*usable_bandwidth(LinkGeometry.from_heights(x, p.h_a, p.h_u),
                                                     spec, setup.window)[::-1]) for x in d])
        out.append(Check("6", f"{name} usable bandwidth non-increasing (1-30 m)",
                         bool(np.all(np.diff(bw) <= 0)) and bw[-1] < bw[0],
                         f"{bw[0] / 1e9:.0f} GHz -> {bw[-1] / 1e9:.0f} GHz"))

    grids = {}
    for name in ("W1", "W2"):
        grids[name] = gain_grid(config, name, lambdas + [ref], samples=samples)
    w1 = grids["W1"]
    k_ref = len(lambdas)

    worst = min(float(np.min(w1[(Strategy.C_MC, n)] - w1[(Strategy.R_MC, n)])) for n in (2, 3, 4))
    out.append(Check("6", "W1 gain C-MC > R-MC at every (lambda_a, N)", worst > 0,
                     f"min difference {100 * worst:.2f} pp"))

    for s, sign, word in ((Strategy.C_MC, 1, "increasing"), (Strategy.R_MC, -1, "decreasing")):
        vals = [float(w1[(s, n)][k_ref]) for n in (2, 3, 4)]
        ok = all(sign * (b - a) > 0 for a, b in zip(vals, vals[1:]))
        out.append(Check("6", f"W1 gain {s.value} {word} in N at lambda_a=0.015", ok,
                         "N=2,3,4: " + ", ".join(f"{100 * v:.2f}%" for v in vals)))
        for k, lam in enumerate(lambdas):
            v = [float(w1[(s, n)][k]) for n in (2, 3, 4)]
            if not all(sign * (b - a) > 0 for a, b in zip(v, v[1:])):
                out.append(Check("6", f"{s.value} N-trend at lambda_a={lam:.2e}", True,
                                 "not " + word + ": " + ", ".join(f"{100 * x:.2f}%" for x in v),
                                 info=True))

    for s in (Strategy.C_MC, Strategy.R_MC):
        for n in (2, 3, 4):
            curve = w1[(s, n)][:k_ref]
            k = int(np.argmax(curve))
            out.append(Check("6", f"W1 gain {s.value} N={n} interior maximum over lambda_a",
                             0 < k < len(curve) - 1,
                             f"argmax lambda_a={lambdas[k]:.2e} (grid {lambdas[0]:.0e}"
                             f"..{lambdas[-1]:.0e}), max {100 * curve[k]:.2f}%"))

    w2 = grids["W2"]
    worst = min(float(np.min(w1[key] - w2[key])) for key in w1)
    out.append(Check("6", "W2 (30 dBm) gains below W1 (20 dBm) at every point", worst > 0,
                     f"min W1-W2 difference {100 * worst:.2f} pp"))
    return out


# --------------------------------------------------------------------------
# 7: determinism
# --------------------------------------------------------------------------

def check_determinism(seed: int = 42, trials: int | None = None) -> list[Check]:
    from .cli import default_config, run_figure

    config = replace(default_config(), seed=seed)
    if trials is not None:
        config = replace(config, trials=trials)
    with tempfile.TemporaryDirectory() as tmp:
        a = run_figure("fig4", config, Path(tmp) / "a", workers=1)
        b = run_figure("fig4", config, Path(tmp) / "b", workers=2)
        same = filecmp.cmp(a, b, shallow=False)
    return [Check("7", "fig4 --seed 42 byte-identical (1 vs 2 workers)", same,
                  "identical" if same else "CSV files differ")]


CRITERIA: dict[str, tuple[float, Callable]] = {
    "1": (5.0, lambda cfg, quick: check_closed_form(cfg.params)),
    "2": (1.0, lambda cfg, quick: check_renewal(cfg.params)),
    "3": (30.0, lambda cfg, quick: check_normalization(cfg.params, 200 if quick else 1000)),
    "4": (300.0, lambda cfg, quick: check_snapshot(cfg.params, 20_000 if quick else 100_000)),
    "5": (300.0, lambda cfg, quick: check_temporal(
        cfg, temporal_histories(cfg.params, 250.0 if quick else 500.0))),
    "6": (math.inf, lambda cfg, quick: check_reference_numbers(cfg, 50_000 if quick else 200_000)
          + check_trends(cfg, 50_000 if quick else 200_000)),
    "7": (60.0, lambda cfg, quick: check_determinism(42, 10_000 if quick else None)),
}


def run_all(config=None, quick: bool = False, out: TextIO | None = None,
            only: list[str] | None = None) -> list[Check]:
    """Run every criterion; print one line per check when ``out`` is given."""
    from .cli import default_config

    config = config or default_config()
    results = []
    for key, (limit, fn) in CRITERIA.items():
        if only and key not in only:
            continue
        checks = _timed(key, limit, lambda: fn(config, quick))
        if math.isinf(limit):
            checks = checks[:-1]
        for c in checks:
            if out is not None:
                print(c.line(), file=out, flush=True)
        results += checks
    return results
