"""Bounded-support feature densities: uniform and truncated normal.

Every function accepts a scalar or an array for ``x``/``p`` and returns the
same shape back (a Python float for scalar input).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import math
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, StructureError

Kind = Literal["uniform", "truncated_normal"]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_2 = math.sqrt(2.0)
_MAX_BISECT = 200


@dataclass(frozen=True)
class SubgroupDistribution:
    kind: Kind
    support_lo: float
    support_hi: float
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "truncated_normal"):
            raise StructureError(f"unknown distribution kind {self.kind!r}")
        lo, hi = float(self.support_lo), float(self.support_hi)
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise DomainError(f"support must satisfy lo < hi, got [{lo}, {hi}]")
        if self.kind == "truncated_normal":
            if not (np.isfinite(self.sigma) and self.sigma > 0):
                raise DomainError(f"sigma must be positive, got {self.sigma}")
            if not np.isfinite(self.mu):
                raise DomainError("mu must be finite")
            if _mass(self) <= 0.0:
                raise DomainError("support carries no normal mass")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "SubgroupDistribution":
        return cls("uniform", float(lo), float(hi))

    @classmethod
    def truncated_normal(cls, mu: float, sigma: float, lo: float, hi: float) -> "SubgroupDistribution":
        return cls("truncated_normal", float(lo), float(hi), float(mu), float(sigma))

    def pdf(self, x):
        return pdf(self, x)

    def cdf(self, x):
        return cdf(self, x)

    def quantile(self, p):
        return quantile(self, p)


def _out(values: np.ndarray, scalar: bool):
    return float(values) if scalar else values


def _standard_bounds(d: SubgroupDistribution) -> tuple[float, float]:
    return (d.support_lo - d.mu) / d.sigma, (d.support_hi - d.mu) / d.sigma


def _ndtr(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT_2)


def _mass(d: SubgroupDistribution) -> float:
    a, b = _standard_bounds(d)
    # subtract in the tail where the normal cdf keeps its relative precision
    if a > 0:
        return _ndtr(-a) - _ndtr(-b)
    return _ndtr(b) - _ndtr(a)


@lru_cache(maxsize=1024)
def _consts(d: SubgroupDistribution) -> tuple[float, float, float, float, bool]:
    """(a, b, anchor, mass, upper_tail) of a truncated normal."""
    a, b = _standard_bounds(d)
    upper = a > 0
    anchor = _ndtr(-a) if upper else _ndtr(a)
    return a, b, anchor, _mass(d), upper


def pdf(d: SubgroupDistribution, x):
    """Density at ``x``; zero outside the closed support."""
    if isinstance(x, (float, int)):
        if not d.support_lo <= x <= d.support_hi:
            return 0.0
        if d.kind == "uniform":
            return 1.0 / (d.support_hi - d.support_lo)
        z = (x - d.mu) / d.sigma
        return math.exp(-0.5 * z * z) / (_SQRT_2PI * d.sigma * _consts(d)[3])
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    inside = (x >= d.support_lo) & (x <= d.support_hi)
    if d.kind == "uniform":
        val = np.where(inside, 1.0 / (d.support_hi - d.support_lo), 0.0)
    else:
        z = (x - d.mu) / d.sigma
        dens = np.exp(-0.5 * z * z) / (_SQRT_2PI * d.sigma * _consts(d)[3])
        val = np.where(inside, dens, 0.0)
    return _out(val, scalar)


def cdf(d: SubgroupDistribution, x):
    """P(X <= x), clamped to [0, 1]."""
    if isinstance(x, (float, int)):
        x = min(max(float(x), d.support_lo), d.support_hi)
        if d.kind == "uniform":
            val = (x - d.support_lo) / (d.support_hi - d.support_lo)
        else:
            a, b, anchor, mass, upper = _consts(d)
            z = (x - d.mu) / d.sigma
            val = (anchor - _ndtr(-z)) / mass if upper else (_ndtr(z) - anchor) / mass
        return min(max(val, 0.0), 1.0)
    scalar = np.ndim(x) == 0
    x = np.clip(np.asarray(x, dtype=float), d.support_lo, d.support_hi)
    if d.kind == "uniform":
        val = (x - d.support_lo) / (d.support_hi - d.support_lo)
    else:
        a, b = _standard_bounds(d)
        z = (x - d.mu) / d.sigma
        if a > 0:
            val = (ndtr(-a) - ndtr(-z)) / (ndtr(-a) - ndtr(-b))
        else:
            val = (ndtr(z) - ndtr(a)) / (ndtr(b) - ndtr(a))
    return _out(np.clip(val, 0.0, 1.0), scalar)


def survival(d: SubgroupDistribution, x):
    """P(X > x)."""
    return 1.0 - cdf(d, x)


def quantile(d: SubgroupDistribution, p):
    """Smallest x in the support with cdf(x) >= p."""
    scalar = np.ndim(p) == 0
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any((p < 0.0) | (p > 1.0)):
        raise DomainError("quantile level must lie in [0, 1]")
    if d.kind == "uniform":
        val = d.support_lo + p * (d.support_hi - d.support_lo)
        return _out(np.clip(val, d.support_lo, d.support_hi), scalar)
    lo = np.full(p.shape, d.support_lo)
    hi = np.full(p.shape, d.support_hi)
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        above = np.asarray(cdf(d, mid)) >= p
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    val = np.where(p <= 0.0, d.support_lo, hi)
    return _out(val, scalar)


@dataclass(frozen=True)
class AssumptionReport:
    holds: bool
    f1_increasing: bool
    f0_decreasing: bool
    overlap_lo: float
    overlap_hi: float
    grid_points: int


def check_assumption1(f0: SubgroupDistribution, f1: SubgroupDistribution,
                      grid_points: int = 1000) -> AssumptionReport:
    """Scan the overlap [lo(f1), hi(f0)] for strict monotonicity of both densities.

    The label-1 density must rise and the label-0 density must fall across
    the whole overlap. The report is advisory; nothing downstream refuses to
    run when it fails.
    """
    if not (f0.support_lo < f1.support_lo < f0.support_hi < f1.support_hi):
        raise StructureError(
            "supports must satisfy lo(f0) < lo(f1) < hi(f0) < hi(f1), got "
            f"f0=[{f0.support_lo}, {f0.support_hi}] f1=[{f1.support_lo}, {f1.support_hi}]"
        )
    lo, hi = f1.support_lo, f0.support_hi
    grid = np.linspace(lo, hi, grid_points)
    inc = bool(np.all(np.diff(pdf(f1, grid)) > 0.0))
    dec = bool(np.all(np.diff(pdf(f0, grid)) < 0.0))
    return AssumptionReport(inc and dec, inc, dec, lo, hi, grid_points)
