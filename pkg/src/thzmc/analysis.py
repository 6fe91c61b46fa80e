"""Connection probability and average ergodic capacity of SC, C-MC and R-MC.

Integrals over one or two AP distances use nested adaptive quadrature
(``scipy.integrate.quad``) truncated where the residual distance mass is
below 1e-9. Three or more distances are integrated by Monte Carlo over exact
ordered-distance samples, reported with a standard error.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .blockage import (
    SystemParams,
    blockage_stats,
    los_probability,
    mean_los_duration,
    mean_nlos_duration,
)
from .channel import AbsorptionSpectrum, CapacityCurve, LinkBudget, TransmissionWindow
from .distances import joint_pdf, pdf_closest, sample_ordered, truncation_radius

__all__ = [
    "Estimator",
    "MetricResult",
    "Strategy",
    "StrategyKind",
    "SwitchChain",
    "conn_prob_sc",
    "conn_prob_mc",
    "conn_prob_given",
    "gamma_cmc",
    "build_switch_chain",
    "gamma_rmc",
    "rmc_weights",
    "conditional_capacity",
    "capacity_curve",
    "ergodic_capacity_sc",
    "ergodic_capacity_mc",
    "expected_capacity",
    "capacity_gain",
    "mc_expectation",
]

QUAD_EPSREL = 1e-10
TAIL = 1e-9
MC_BLOCK = 1 << 16


class Estimator(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo_integration"


@dataclass(frozen=True)
class MetricResult:
    value: float
    estimator: Estimator
    std_error: float = 0.0

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")

    def __float__(self):
        return float(self.value)


class Strategy(str, enum.Enum):
    SC = "SC"
    C_MC = "C-MC"
    R_MC = "R-MC"


@dataclass(frozen=True)
class StrategyKind:
    strategy: Strategy
    degree: int = 1

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.strategy is Strategy.SC and self.degree != 1:
            raise ValueError("SC has degree 1")
        if self.strategy is not Strategy.SC and self.degree < 2:
            raise ValueError("multi-connectivity needs degree >= 2")

    def __str__(self):
        return self.strategy.value if self.strategy is Strategy.SC \
            else f"{self.strategy.value}(N={self.degree})"


# --------------------------------------------------------------------------
# Monte Carlo helper
# --------------------------------------------------------------------------

def _generator(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def mc_expectation(fn: Callable[[np.ndarray], np.ndarray], n: int, params: SystemParams,
                   samples: int, rng=None, block: int = MC_BLOCK) -> tuple[float, float]:
    """Mean and standard error of ``fn(x)`` over ordered-distance samples.

    Samples are drawn in blocks, each from its own child stream spawned off
    ``rng``, and block statistics are merged in block order, so the result
    depends only on ``rng`` and ``samples``.
    """
    gen = _generator(rng)
    n_blocks = max(1, math.ceil(samples / block))
    streams = gen.spawn(n_blocks)
    count, mean, m2 = 0, 0.0, 0.0
    for i, g in enumerate(streams):
        size = min(block, samples - i * block)
        vals = np.asarray(fn(sample_ordered(n, params, g, size=size)), dtype=float)
        b_mean = float(vals.mean())
        b_m2 = float(((vals - b_mean) ** 2).sum())
        tot = count + size
        delta = b_mean - mean
        mean += delta * size / tot
        m2 += b_m2 + delta * delta * count * size / tot
        count = tot
    var = m2 / (count - 1) if count > 1 else 0.0
    return mean, math.sqrt(var / count)


# --------------------------------------------------------------------------
# connection probability
# --------------------------------------------------------------------------

def conn_prob_given(xs, params: SystemParams):
    """P(at least one of the links at distances ``xs`` is LOS), last axis = AP."""
    p = los_probability(np.asarray(xs, dtype=float), params)
    return 1.0 - np.prod(1.0 - p, axis=-1)


def conn_prob_sc(params: SystemParams, method: str = "closed_form") -> MetricResult:
    """Average SC connection probability, in closed form or by quadrature."""
    s = blockage_stats(params)
    if method == "closed_form":
        lw = params.lambda_a * params.omega
        varpi = (s.beta + params.lambda_a * params.r0 * params.omega) / math.sqrt(2 * lw)
        # exp(varpi^2) erfc(varpi) == erfcx(varpi), stable for large varpi
        val = s.zeta * math.exp(-s.beta * params.r0) * (
            1.0 - s.beta * math.sqrt(math.pi / (2 * lw)) * special.erfcx(varpi))
        return MetricResult(float(val), Estimator.CLOSED_FORM)
    if method == "quadrature":
        x_max = truncation_radius(params, 1, TAIL)
        val, _ = integrate.quad(lambda x: los_probability(x, params) * pdf_closest(x, params),
                                params.r0, x_max, epsabs=0, epsrel=QUAD_EPSREL, limit=200)
        return MetricResult(val, Estimator.QUADRATURE)
    raise ValueError(f"unknown method {method!r}")


def _nested2(w: Callable[[float, float], float], params: SystemParams) -> float:
    """Integral of ``w(x1, x2) f(x1, x2)`` over r0 <= x1 <= x2 <= x_max."""
    x_max = truncation_radius(params, 2, TAIL)
    a = 0.5 * params.omega * params.lambda_a
    c = (2 * a) ** 2 * math.exp(a * params.r0 ** 2)

    def inner(x1):
        return integrate.quad(lambda x2: w(x1, x2) * x2 * math.exp(-a * x2 * x2),
                              x1, x_max, epsabs=0, epsrel=QUAD_EPSREL, limit=200)[0]

    val, _ = integrate.quad(lambda x1: c * x1 * inner(x1), params.r0, x_max,
                            epsabs=0, epsrel=QUAD_EPSREL, limit=200)
    return val


def conn_prob_mc(n: int, params: SystemParams, samples: int = 10 ** 6, rng=None) -> MetricResult:
    """Average connection probability with ``n`` associated APs (independent links)."""
    if n < 1:
        raise ValueError("degree must be at least 1")
    if n == 1:
        return conn_prob_sc(params, "quadrature")
    if n == 2:
        s = blockage_stats(params)

        def w(x1, x2):
            return 1.0 - (1.0 - s.zeta * math.exp(-s.beta * x1)) * (1.0 - s.zeta * math.exp(-s.beta * x2))

        return MetricResult(_nested2(w, params), Estimator.QUADRATURE)
    mean, se = mc_expectation(lambda x: conn_prob_given(x, params), n, params, samples, rng)
    return MetricResult(mean, Estimator.MONTE_CARLO, se)


# --------------------------------------------------------------------------
# time-share weights
# --------------------------------------------------------------------------

def gamma_cmc(xs, params: SystemParams) -> np.ndarray:
    """Share of non-outage time spent on each AP when always using the closest LOS AP."""
    p = los_probability(np.asarray(xs, dtype=float), params)
    blocked_before = np.cumprod(1.0 - p, axis=-1)
    prefix = np.concatenate([np.ones_like(p[..., :1]), blocked_before[..., :-1]], axis=-1)
    num = p * prefix
    return num / (1.0 - blocked_before[..., -1:])


@dataclass(frozen=True, eq=False)
class SwitchChain:
    """Absorbing chain of reactive switching: transient states are the APs.

    ``u[i, j]`` is the probability of moving from AP i to AP j when AP i is
    blocked, ``b`` the initial distribution after an outage, ``d`` the
    fundamental matrix ``(I - u)^-1``.
    """

    u: np.ndarray
    b: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        u, b, d = self.u, self.b, self.d
        if np.any(np.diag(u) != 0) or np.any(u < 0) or np.any(u > 1):
            raise ValueError("u must have zero diagonal and entries in [0, 1]")
        if np.any(u.sum(axis=1) > 1 + 1e-12):
            raise ValueError("row sums of u must not exceed 1")
        if np.any(b < 0) or abs(b.sum() - 1) > 1e-12:
            raise ValueError("b must be a probability vector")
        if np.any(d < -1e-12) or np.any(np.diag(d) < 1 - 1e-12):
            raise ValueError("fundamental matrix violates d >= 0, diag(d) >= 1")

    @property
    def absorption(self) -> np.ndarray:
        """Per-step probability of entering outage from each AP."""
        return 1.0 - self.u.sum(axis=1)


def _switch_matrix(p: np.ndarray) -> np.ndarray:
    n = p.shape[-1]
    prefix = np.concatenate([np.ones_like(p[..., :1]),
                             np.cumprod(1.0 - p, axis=-1)[..., :-1]], axis=-1)
    row = p * prefix
    u = np.broadcast_to(row[..., None, :], p.shape[:-1] + (n, n)).copy()
    idx = np.arange(n)
    u[..., idx, idx] = 0.0
    return u


def build_switch_chain(xs, params: SystemParams) -> SwitchChain:
    x = np.asarray(xs, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need at least two AP distances")
    if not params.blocked_ever:
        raise ValueError("switching chain is undefined without blockers")
    p = los_probability(x, params)
    if np.any(p >= 1.0):
        raise ArithmeticError("I - U is singular when an AP is never blocked")
    u = _switch_matrix(p)
    tn = mean_nlos_duration(x, params)
    b = tn / tn.sum()
    d = np.linalg.solve(np.eye(x.size) - u, np.eye(x.size))
    return SwitchChain(u, b, d)


def gamma_rmc(chain: SwitchChain, xs, params: SystemParams) -> np.ndarray:
    """Share of non-outage time per AP under reactive switching."""
    tl = np.asarray(mean_los_duration(np.asarray(xs, dtype=float), params))
    visit_time = chain.d * tl[None, :]
    per_start = visit_time / visit_time.sum(axis=1, keepdims=True)
    return chain.b @ per_start


def rmc_weights(xs, params: SystemParams) -> np.ndarray:
    """``gamma_rmc`` for a batch of topologies (last axis = AP index).

    Without blockers the UE never leaves AP_1.
    """
    x = np.asarray(xs, dtype=float)
    n = x.shape[-1]
    if not params.blocked_ever or n == 1:
        out = np.zeros_like(x)
        out[..., 0] = 1.0
        return out
    p = los_probability(x, params)
    u = _switch_matrix(p)
    eye = np.broadcast_to(np.eye(n), u.shape)
    d = np.linalg.solve(eye - u, eye)
    tl = mean_los_duration(x, params)
    tn = mean_nlos_duration(x, params)
    b = tn / tn.sum(axis=-1, keepdims=True)
    visit_time = d * tl[..., None, :]
    per_start = visit_time / visit_time.sum(axis=-1, keepdims=True)
    return np.einsum("...j,...ji->...i", b, per_start)


def _weights(strategy: Strategy, xs: np.ndarray, params: SystemParams) -> np.ndarray:
    if strategy is Strategy.C_MC:
        return gamma_cmc(xs, params)
    if strategy is Strategy.R_MC:
        return rmc_weights(xs, params)
    out = np.zeros_like(xs)
    out[..., 0] = 1.0
    return out


def conditional_capacity(kind: StrategyKind | Strategy, xs, params: SystemParams,
                         capacity: Callable[[np.ndarray], np.ndarray]):
    """Ergodic capacity for fixed AP distances: p_c(xs) * sum_i gamma_i C(x_i).

    For SC this is p_L(x_1) C(x_1).
    """
    strategy = kind.strategy if isinstance(kind, StrategyKind) else Strategy(kind)
    x = np.asarray(xs, dtype=float)
    if strategy is Strategy.SC:
        x1 = x[..., 0]
        return los_probability(x1, params) * capacity(x1)
    g = _weights(strategy, x, params)
    return conn_prob_given(x, params) * np.sum(g * capacity(x), axis=-1)


# --------------------------------------------------------------------------
# ergodic capacity
# --------------------------------------------------------------------------

def capacity_curve(params: SystemParams, spec: AbsorptionSpectrum, window: TransmissionWindow,
                   budget: LinkBudget, n: int = 4) -> CapacityCurve:
    """Capacity curve covering the integration range of up to ``n`` APs."""
    x_hi = truncation_radius(params, n, TAIL)
    return CapacityCurve(spec, window, budget, params.h_a, params.h_u, params.r0, x_hi)


def _segments(curve: CapacityCurve, lo: float, hi: float):
    for k, (a, b) in enumerate(curve.segments):
        a, b = max(a, lo), min(b, hi)
        if b > a:
            yield k, a, b
    if hi > curve.x_hi:
        yield None, max(lo, curve.x_hi), hi


def _seg_eval(curve: CapacityCurve, k, x: float) -> float:
    if k is None:
        return float(curve.exact(np.array([x]))[0])
    return float(curve.on_segment(k, x)[0])


def _quad_over_curve(curve: CapacityCurve, g: Callable[[float], float], lo: float, hi: float) -> float:
    """Integral of C(x) g(x) on [lo, hi], split at the breakpoints of C."""
    total = 0.0
    for k, a, b in _segments(curve, lo, hi):
        total += integrate.quad(lambda x: _seg_eval(curve, k, x) * g(x), a, b,
                                epsabs=0, epsrel=QUAD_EPSREL, limit=200)[0]
    return total


def ergodic_capacity_sc(params: SystemParams, spec: AbsorptionSpectrum | None = None,
                        window: TransmissionWindow | None = None,
                        budget: LinkBudget | None = None, *,
                        curve: Callable | None = None) -> MetricResult:
    """E[p_L(x_1) C(x_1)] over the closest-AP distance (bit/s).

    ``curve`` overrides the channel (any callable C(x); a ``CapacityCurve``
    is split at its breakpoints).
    """
    if curve is None:
        curve = capacity_curve(params, spec, window, budget, 1)
    x_max = truncation_radius(params, 1, TAIL)

    def g(x):
        return los_probability(x, params) * pdf_closest(x, params)

    if isinstance(curve, CapacityCurve):
        val = _quad_over_curve(curve, g, params.r0, x_max)
    else:
        val = integrate.quad(lambda x: float(curve(np.array([x]))[0]) * g(x), params.r0, x_max,
                             epsabs=0, epsrel=QUAD_EPSREL, limit=200)[0]
    return MetricResult(val, Estimator.QUADRATURE)


def _scalar_weights2(strategy: Strategy, params: SystemParams):
    """Pure-Python p_c * gamma for two APs (quadrature inner loops)."""
    s = blockage_stats(params)
    slope, r_b = params.slope, params.r_b
    rate = 2.0 * r_b * params.v_b * params.lambda_b

    if strategy is Strategy.C_MC or not params.blocked_ever:
        def w(x1, x2):
            p1 = s.zeta * math.exp(-s.beta * x1)
            p2 = s.zeta * math.exp(-s.beta * x2)
            return p1, (1.0 - p1) * p2
        return w

    def w(x1, x2):
        p1 = s.zeta * math.exp(-s.beta * x1)
        p2 = s.zeta * math.exp(-s.beta * x2)
        pc = 1.0 - (1.0 - p1) * (1.0 - p2)
        mu1, mu2 = rate * (slope * x1 + r_b), rate * (slope * x2 + r_b)
        tl1, tl2 = 1.0 / mu1, 1.0 / mu2
        tn1, tn2 = tl1 * (1.0 - p1) / p1, tl2 * (1.0 - p2) / p2
        b1, b2 = tn1 / (tn1 + tn2), tn2 / (tn1 + tn2)
        u12, u21 = p2 * (1.0 - p1), p1
        # rows of (I - U)^-1 up to the common factor, which cancels per row
        r1 = (tl1, u12 * tl2)
        r2 = (u21 * tl1, tl2)
        g1 = b1 * r1[0] / (r1[0] + r1[1]) + b2 * r2[0] / (r2[0] + r2[1])
        return pc * g1, pc * (1.0 - g1)
    return w


def expected_capacity(strategy: Strategy, n: int, params: SystemParams, curve: Callable,
                      samples: int = 10 ** 6, rng=None) -> MetricResult:
    """E[p_c(x) sum_i gamma_i C(x_i)] over the ``n`` closest AP distances.

    Quadrature for ``n <= 2``, Monte Carlo integration otherwise. With
    ``n = 1`` every strategy reduces to SC.
    """
    strategy = Strategy(strategy)
    if n == 1:
        return ergodic_capacity_sc(params, curve=curve)
    if n == 2:
        w = _scalar_weights2(strategy, params)
        x_max = truncation_radius(params, 2, TAIL)
        a = 0.5 * params.omega * params.lambda_a
        c = (2 * a) ** 2 * math.exp(a * params.r0 ** 2)

        def closer(x1):
            # weight of C(x1): integrate out the farther AP
            return c * x1 * integrate.quad(
                lambda x2: w(x1, x2)[0] * x2 * math.exp(-a * x2 * x2),
                x1, x_max, epsabs=0, epsrel=QUAD_EPSREL, limit=200)[0]

        def farther(x2):
            return c * x2 * math.exp(-a * x2 * x2) * integrate.quad(
                lambda x1: w(x1, x2)[1] * x1,
                params.r0, x2, epsabs=0, epsrel=QUAD_EPSREL, limit=200)[0]

        if isinstance(curve, CapacityCurve):
            val = _quad_over_curve(curve, closer, params.r0, x_max) \
                + _quad_over_curve(curve, farther, params.r0, x_max)
        else:
            def c_of(x):
                return float(curve(np.array([x]))[0])
            val = sum(integrate.quad(lambda x: c_of(x) * h(x), params.r0, x_max,
                                     epsabs=0, epsrel=QUAD_EPSREL, limit=200)[0]
                      for h in (closer, farther))
        return MetricResult(val, Estimator.QUADRATURE)
    mean, se = mc_expectation(lambda x: conditional_capacity(strategy, x, params, curve),
                              n, params, samples, rng)
    return MetricResult(mean, Estimator.MONTE_CARLO, se)


def ergodic_capacity_mc(kind: StrategyKind, params: SystemParams,
                        spec: AbsorptionSpectrum | None = None,
                        window: TransmissionWindow | None = None,
                        budget: LinkBudget | None = None, *, curve: Callable | None = None,
                        samples: int = 10 ** 6, rng=None) -> MetricResult:
    """Average ergodic capacity of an N-degree C-MC or R-MC strategy (bit/s)."""
    if kind.strategy is Strategy.SC:
        raise ValueError("use ergodic_capacity_sc for single connectivity")
    if curve is None:
        curve = capacity_curve(params, spec, window, budget, kind.degree)
    return expected_capacity(kind.strategy, kind.degree, params, curve, samples, rng)


def capacity_gain(kind: StrategyKind, params: SystemParams,
                  spec: AbsorptionSpectrum | None = None,
                  window: TransmissionWindow | None = None,
                  budget: LinkBudget | None = None, *, curve: Callable | None = None,
                  samples: int = 10 ** 6, rng=None, sc: MetricResult | None = None) -> MetricResult:
    """Relative capacity gain (C_MC - C_SC) / C_SC of an MC strategy over SC."""
    if curve is None:
        curve = capacity_curve(params, spec, window, budget, kind.degree)
    if sc is None:
        sc = ergodic_capacity_sc(params, curve=curve)
    if sc.value <= 0:
        raise ZeroDivisionError("SC capacity is zero; gain undefined")
    mc = ergodic_capacity_mc(kind, params, curve=curve, samples=samples, rng=rng)
    gain = (mc.value - sc.value) / sc.value
    return MetricResult(gain, mc.estimator, mc.std_error / sc.value)
