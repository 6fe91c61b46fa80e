"""Single-link blockage statistics: blockage-zone depth, LOS probability and
the mean durations of the alternating LOS/NLOS renewal process."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SystemParams",
    "BlockageStats",
    "NEVER_BLOCKED",
    "blockage_depth",
    "blockage_stats",
    "los_probability",
    "temporal_density",
    "mean_los_duration",
    "mean_nlos_duration",
]

#: Mean LOS duration reported when there are no blockers at all.
NEVER_BLOCKED = math.inf


@dataclass(frozen=True)
class SystemParams:
    """Scenario constants. Defaults describe the reference indoor scenario with
    ``lambda_a = 0.01`` AP/m^2 and ``r0 = 1`` m.

    Attributes
    ----------
    h_a, h_u, h_b : float
        AP, UE and blocker heights (m), ``h_a > h_b >= h_u``.
    r_b : float
        Blocker (cylinder) radius, m.
    lambda_b, lambda_a : float
        Blocker and AP densities, 1/m^2. ``lambda_b = 0`` means no blockers.
    v_b : float
        Blocker speed, m/s.
    omega : float
        Non-self-blockage angle, rad, in ``(0, 2 pi]``.
    r0 : float
        Minimum AP distance, m.
    """

    h_a: float = 3.0
    h_u: float = 1.2
    h_b: float = 1.7
    r_b: float = 0.3
    lambda_b: float = 0.2
    lambda_a: float = 1e-2
    v_b: float = 1.0
    omega: float = math.pi
    r0: float = 1.0

    def __post_init__(self):
        if not (self.h_a > self.h_b >= self.h_u):
            raise ValueError("heights must satisfy h_a > h_b >= h_u")
        if self.h_u < 0:
            raise ValueError("h_u must be non-negative")
        for name in ("r_b", "lambda_a", "v_b", "r0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_b < 0:
            raise ValueError("lambda_b must be non-negative")
        if not (0 < self.omega <= 2 * math.pi + 1e-12):
            raise ValueError("omega must lie in (0, 2 pi]")

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    @property
    def slope(self) -> float:
        """(h_b - h_u) / (h_a - h_u)."""
        return (self.h_b - self.h_u) / (self.h_a - self.h_u)

    @property
    def blocked_ever(self) -> bool:
        return self.lambda_b > 0


@dataclass(frozen=True)
class BlockageStats:
    zeta: float
    beta: float


def blockage_stats(params: SystemParams) -> BlockageStats:
    """LOS probability constants: p_L(x) = zeta * exp(-beta x)."""
    zeta = math.exp(-2.0 * params.lambda_b * params.r_b ** 2)
    beta = 2.0 * params.lambda_b * params.r_b * params.slope
    return BlockageStats(zeta, beta)


def _as_float(x):
    return np.asarray(x, dtype=float) if np.ndim(x) else float(x)


def blockage_depth(x, params: SystemParams):
    """Length of the rectangular LOS blockage zone for 2D distance ``x``."""
    return params.slope * _as_float(x) + params.r_b


def los_probability(x, params: SystemParams):
    """Void probability of the 2 r_b x d(x) blockage zone."""
    s = blockage_stats(params)
    if np.ndim(x):
        return s.zeta * np.exp(-s.beta * _as_float(x))
    return s.zeta * math.exp(-s.beta * float(x))


def temporal_density(x, params: SystemParams):
    """Rate mu_B(x) = 2 r_b v_b lambda_b d(x) of blockers entering the zone (1/s)."""
    return 2.0 * params.r_b * params.v_b * params.lambda_b * blockage_depth(x, params)


def mean_los_duration(x, params: SystemParams):
    """E[t_LOS; x] = 1 / mu_B(x); ``NEVER_BLOCKED`` when ``lambda_b == 0``."""
    if not params.blocked_ever:
        return np.full(np.shape(x), NEVER_BLOCKED) if np.ndim(x) else NEVER_BLOCKED
    return 1.0 / temporal_density(x, params)


def mean_nlos_duration(x, params: SystemParams):
    """E[t_NLOS; x], the value that makes the LOS time fraction equal p_L(x)."""
    if not params.blocked_ever:
        raise ValueError("mean blockage duration is undefined without blockers")
    s = blockage_stats(params)
    x = _as_float(x)
    e = np.exp(-s.beta * x)
    num = 1.0 - s.zeta * e
    den = 2.0 * s.zeta * params.r_b * params.v_b * params.lambda_b * blockage_depth(x, params) * e
    out = num / den
    return out if np.ndim(out) else float(out)
