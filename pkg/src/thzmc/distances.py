"""Distances to the N closest APs inside the non-self-blockage sector.

APs form a PPP of density ``lambda_a`` restricted to an angular sector of
width ``omega`` and to distances beyond ``r0``. The ordered distances have
joint density

    (omega lambda_a)^N exp(omega lambda_a r0^2 / 2) prod(x_i) exp(-omega lambda_a x_N^2 / 2)

on ``r0 <= x_1 <= ... <= x_N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .blockage import SystemParams

__all__ = [
    "OrderedDistances",
    "pdf_closest",
    "cdf_closest",
    "conditional_pdf",
    "joint_pdf",
    "sample_ordered",
    "truncation_radius",
]


@dataclass(frozen=True)
class OrderedDistances:
    """Distances ``x_1 <= ... <= x_N`` (m) of the associated APs."""

    xs: tuple[float, ...]

    def __post_init__(self):
        xs = tuple(float(v) for v in self.xs)
        if not xs:
            raise ValueError("need at least one distance")
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError(f"distances are not ordered: {xs}")
        if xs[0] < 0:
            raise ValueError("distances must be non-negative")
        object.__setattr__(self, "xs", xs)

    def __len__(self):
        return len(self.xs)

    def __iter__(self):
        return iter(self.xs)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.xs, dtype=dtype)


def _rate(params: SystemParams) -> float:
    return 0.5 * params.omega * params.lambda_a


def pdf_closest(x1, params: SystemParams):
    """Density of the closest-AP distance; zero below ``r0``."""
    a = _rate(params)
    x = np.asarray(x1, dtype=float)
    val = 2 * a * x * np.exp(-a * (x * x - params.r0 ** 2))
    out = np.where(x >= params.r0, val, 0.0)
    return out if out.ndim else float(out)


def cdf_closest(x1, params: SystemParams):
    a = _rate(params)
    x = np.maximum(np.asarray(x1, dtype=float), params.r0)
    out = -np.expm1(-a * (x * x - params.r0 ** 2))
    return out if out.ndim else float(out)


def conditional_pdf(x_next, x_prev, params: SystemParams):
    """Density of the next distance given the previous one, zero below it."""
    a = _rate(params)
    x = np.asarray(x_next, dtype=float)
    xp = np.asarray(x_prev, dtype=float)
    out = np.where(x >= xp, 2 * a * x * np.exp(-a * (x * x - xp * xp)), 0.0)
    return out if out.ndim else float(out)


def joint_pdf(xs, params: SystemParams):
    """Joint density of the ordered distances (last axis = AP index).

    Raises ``ValueError`` for unordered input; returns 0 when ``x_1 < r0``.
    """
    x = np.asarray(xs, dtype=float)
    if np.any(np.diff(x, axis=-1) < 0):
        raise ValueError("distances must be non-decreasing")
    n = x.shape[-1]
    a = _rate(params)
    val = (2 * a) ** n * np.prod(x, axis=-1) * np.exp(-a * (x[..., -1] ** 2 - params.r0 ** 2))
    out = np.where(x[..., 0] >= params.r0, val, 0.0)
    return out if out.ndim else float(out)


def sample_ordered(n: int, params: SystemParams, rng: np.random.Generator,
                   size: int | None = None):
    """Exact draw of the ``n`` closest in-sector AP distances.

    Successive sector areas ``(omega/2)(x_{i+1}^2 - x_i^2)`` between ordered
    points are i.i.d. exponential with mean ``1 / lambda_a``. Returns an
    ``OrderedDistances`` when ``size`` is None, else an array ``(size, n)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    shape = (n,) if size is None else (size, n)
    gaps = rng.standard_exponential(shape)
    sq = params.r0 ** 2 + np.cumsum(gaps, axis=-1) / _rate(params)
    x = np.sqrt(sq)
    if size is None:
        return OrderedDistances(tuple(x.tolist()))
    return x


def truncation_radius(params: SystemParams, n: int = 1, tail: float = 1e-9) -> float:
    """Radius beyond which the ``n``-th closest AP lies with probability < ``tail``.

    For ``n = 1`` this is ``r0 + sqrt(2 ln(1/tail) / (omega lambda_a))``.
    """
    if n == 1:
        return params.r0 + math.sqrt(2 * math.log(1 / tail) / (params.omega * params.lambda_a))
    # mean number of APs in the annulus such that P(fewer than n) = tail
    m = stats.gamma.isf(tail, n)
    return math.sqrt(params.r0 ** 2 + m / _rate(params))
