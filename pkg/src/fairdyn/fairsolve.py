"""Fairness-constrained one-shot threshold selection.

Simple, EqOpt and StatPar couple the two thresholds through a strictly
increasing map ``theta_a = phi(theta_b)``; the weighted loss is then a function
of ``theta_b`` alone and is minimized over the box spanned by the two groups'
unconstrained minimizers. EqLos has a closed form that ignores the group
weights, and MinMax is a shared-threshold baseline.
"""
from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import dist
from .errors import CaseError, DomainError, RangeError, RegimeError, StructureError
from .popmodel import (GroupSpec, _check_weights, acceptance_rate, expected_loss,
                       false_positive_rate, loss_is_unimodal, unconstrained_minimizer)

GRID_POINTS = 2001
MINMAX_GRID_POINTS = 4001
GOLDEN_TOL = 1e-9
TIE_TOL = 1e-12
_MAP_TOL = 1e-9
_RATE_ROUNDING = 1e-12
_MAX_BISECT = 200
_INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0


class Criterion(str, enum.Enum):
    SIMPLE = "Simple"
    EQOPT = "EqOpt"
    STATPAR = "StatPar"
    EQLOS = "EqLos"
    MINMAX = "MinMax"

    @classmethod
    def parse(cls, text) -> "Criterion":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        for c in cls:
            if c.value.lower() == key:
                return c
        raise DomainError(f"unknown fairness criterion {text!r}")

    @property
    def is_constraint(self) -> bool:
        return self in (Criterion.SIMPLE, Criterion.EQOPT, Criterion.STATPAR)

    def __str__(self) -> str:
        return self.value


COUPLED = (Criterion.SIMPLE, Criterion.EQOPT, Criterion.STATPAR)


@dataclass(frozen=True)
class DecisionPair:
    theta_a: float
    theta_b: float
    criterion: Criterion
    residual: float = 0.0

    def as_tuple(self) -> tuple[float, float]:
        return self.theta_a, self.theta_b


def constraint_residual(criterion, ga: GroupSpec, gb: GroupSpec, theta_a: float, theta_b: float) -> float:
    """|Gamma| at a pair: the gap in the quantity the criterion equalizes."""
    c = Criterion.parse(criterion)
    if c is Criterion.SIMPLE or c is Criterion.MINMAX:
        return abs(theta_a - theta_b)
    if c is Criterion.EQOPT:
        return abs(float(false_positive_rate(ga, theta_a)) - float(false_positive_rate(gb, theta_b)))
    if c is Criterion.STATPAR:
        return abs(float(acceptance_rate(ga, theta_a)) - float(acceptance_rate(gb, theta_b)))
    return abs(float(expected_loss(ga, theta_a)) - float(expected_loss(gb, theta_b)))


# ---------------------------------------------------------------- constraint map

def constraint_domain(criterion, ga: GroupSpec, gb: GroupSpec) -> tuple[float, float]:
    """Interval of theta_b on which the constraint map is strictly increasing."""
    c = Criterion.parse(criterion)
    if c is Criterion.SIMPLE:
        return min(ga.support[0], gb.support[0]), max(ga.support[1], gb.support[1])
    if c is Criterion.EQOPT:
        return gb.f0.support_lo, gb.f0.support_hi
    if c is Criterion.STATPAR:
        return gb.support
    raise DomainError(f"{c} does not define a threshold map")


def _mixture_level(g: GroupSpec, p):
    """Smallest theta with 1 - acceptance_rate(g, theta) >= p, by bisection."""
    p = np.asarray(p, dtype=float)
    lo = np.full(p.shape, g.support[0])
    hi = np.full(p.shape, g.support[1])
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        above = 1.0 - acceptance_rate(g, mid) >= p
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return np.where(p <= 0.0, g.support[0], hi)


def constraint_map(criterion, ga: GroupSpec, gb: GroupSpec, theta_b):
    """theta_a matching theta_b under the criterion.

    Raises RangeError when theta_b lies outside the domain where a matching
    threshold exists and the map is strictly increasing; callers clamp to the
    support ends.
    """
    c = Criterion.parse(criterion)
    scalar = np.ndim(theta_b) == 0
    tb = np.asarray(theta_b, dtype=float)
    if c is Criterion.SIMPLE:
        return float(tb) if scalar else tb.copy()
    lo, hi = constraint_domain(c, ga, gb)
    if np.any(~np.isfinite(tb)) or np.any(tb < lo - _MAP_TOL) or np.any(tb > hi + _MAP_TOL):
        raise RangeError(f"theta_b outside [{lo}, {hi}] where the {c} map is defined")
    tb = np.clip(tb, lo, hi)
    if c is Criterion.EQOPT:
        ta = np.asarray(dist.quantile(ga.f0, np.asarray(dist.cdf(gb.f0, tb))))
    else:
        ta = _mixture_level(ga, 1.0 - np.clip(acceptance_rate(gb, tb), 0.0, 1.0))
    return float(ta) if scalar else ta


def inverse_constraint_map(criterion, ga: GroupSpec, gb: GroupSpec, theta_a):
    return constraint_map(criterion, gb, ga, theta_a)


def _matched_rate(c: Criterion, g: GroupSpec, theta):
    return false_positive_rate(g, theta) if c is Criterion.EQOPT else acceptance_rate(g, theta)


def _map_scalar(c: Criterion, ga: GroupSpec, gb: GroupSpec, tb: float, lo_a: float, hi_a: float) -> float:
    """phi(tb) for a single point, bracketed by images of neighbouring points."""
    if c is Criterion.SIMPLE:
        return tb
    target = _matched_rate(c, gb, tb)
    fn = lambda x: _matched_rate(c, ga, x) - target
    flo, fhi = fn(lo_a), fn(hi_a)
    if flo == 0.0:
        return lo_a
    if fhi == 0.0:
        return hi_a
    if flo > 0.0 > fhi:
        return brentq(fn, lo_a, hi_a, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    # at the ends of the tabulated curve the bracket can miss by rounding only
    if flo > 0.0 and fhi <= _RATE_ROUNDING:
        return hi_a
    if fhi < 0.0 and flo >= -_RATE_ROUNDING:
        return lo_a
    return constraint_map(c, ga, gb, tb)


# ---------------------------------------------------------------- one-shot solver

@dataclass(frozen=True)
class _Curve:
    """Constraint curve over the solution box, tabulated once."""

    criterion: Criterion
    ga: GroupSpec
    gb: GroupSpec
    delta_a: float
    delta_b: float
    box: tuple[float, float]
    theta_b: np.ndarray = field(repr=False)
    theta_a: np.ndarray = field(repr=False)
    loss_a: np.ndarray = field(repr=False)
    loss_b: np.ndarray = field(repr=False)
    piecewise_linear: bool = False
    # loss slopes and the rate densities that convert d/dtheta_a into d/dtheta_b
    slope_a: Optional[np.ndarray] = field(default=None, repr=False)
    slope_b: Optional[np.ndarray] = field(default=None, repr=False)
    rate_a: Optional[np.ndarray] = field(default=None, repr=False)
    rate_b: Optional[np.ndarray] = field(default=None, repr=False)


def _kinks_b(c: Criterion, ga: GroupSpec, gb: GroupSpec) -> list[float]:
    lo, hi = constraint_domain(c, ga, gb)
    pts = [gb.f0.support_lo, gb.f0.support_hi, gb.f1.support_lo, gb.f1.support_hi]
    a_pts = [ga.f0.support_lo, ga.f0.support_hi, ga.f1.support_lo, ga.f1.support_hi]
    if c is Criterion.SIMPLE:
        pts += a_pts
    else:
        a_lo, a_hi = constraint_domain(c, gb, ga)
        for x in a_pts:
            if a_lo <= x <= a_hi:
                pts.append(float(inverse_constraint_map(c, ga, gb, x)))
    return [p for p in pts if lo <= p <= hi]


@lru_cache(maxsize=512)
def _curve(c: Criterion, ga: GroupSpec, gb: GroupSpec) -> _Curve:
    delta_a, _ = unconstrained_minimizer(ga)
    delta_b, _ = unconstrained_minimizer(gb)
    dom_lo, dom_hi = constraint_domain(c, ga, gb)
    if loss_is_unimodal(ga) and loss_is_unimodal(gb):
        inv = float(inverse_constraint_map(c, ga, gb, delta_a))
        lo = min(max(min(delta_b, inv), dom_lo), dom_hi)
        hi = min(max(max(delta_b, inv), dom_lo), dom_hi)
    else:
        # a loss with several local minima can pull the optimum outside the box
        inv, lo, hi = delta_b, dom_lo, dom_hi
    kinks = [x for x in _kinks_b(c, ga, gb) + [delta_b, inv] if lo <= x <= hi]
    tb = np.unique(np.concatenate([np.linspace(lo, hi, GRID_POINTS), np.asarray(kinks, dtype=float)]))
    ta = np.asarray(constraint_map(c, ga, gb, tb), dtype=float)
    return _Curve(c, ga, gb, delta_a, delta_b, (lo, hi), tb, ta,
                  np.asarray(expected_loss(ga, ta)), np.asarray(expected_loss(gb, tb)),
                  ga.is_uniform and gb.is_uniform,
                  np.asarray(ga.loss_slope(ta)), np.asarray(gb.loss_slope(tb)),
                  _rate_density(c, ga, ta), _rate_density(c, gb, tb))


def _rate_density(c: Criterion, g: GroupSpec, theta: np.ndarray) -> np.ndarray:
    if c is Criterion.SIMPLE:
        return np.ones_like(theta)
    if c is Criterion.EQOPT:
        return np.asarray(dist.pdf(g.f0, theta))
    return np.asarray(g.mixture_pdf(theta))


def solution_box(criterion, ga: GroupSpec, gb: GroupSpec) -> tuple[tuple[float, float], tuple[float, float]]:
    """((theta_a_lo, theta_a_hi), (theta_b_lo, theta_b_hi)) containing every one-shot optimum.

    The tight box spans the two minimizers and their images under the map.
    It relies on both losses being unimodal; otherwise the whole domain of
    the map is returned.
    """
    cv = _curve(Criterion.parse(criterion), ga, gb)
    lo, hi = cv.box
    return (float(cv.theta_a[0]), float(cv.theta_a[-1])), (lo, hi)


def _slope_sign_fn(cv: _Curve, alpha_a: float, alpha_b: float, lo_a: float, hi_a: float):
    """Positive multiple of dF/dtheta_b, free of divisions by vanishing densities."""
    c, ga, gb = cv.criterion, cv.ga, cv.gb

    def g(tb: float) -> float:
        ta = _map_scalar(c, ga, gb, tb, lo_a, hi_a)
        da, db = float(ga.loss_slope(ta)), float(gb.loss_slope(tb))
        if c is Criterion.SIMPLE:
            return alpha_a * da + alpha_b * db
        if c is Criterion.EQOPT:
            wa, wb = float(dist.pdf(ga.f0, ta)), float(dist.pdf(gb.f0, tb))
        else:
            wa, wb = float(ga.mixture_pdf(ta)), float(gb.mixture_pdf(tb))
        return alpha_a * da * wb + alpha_b * db * wa

    return g


def _golden(fn, lo: float, hi: float, tol: float = GOLDEN_TOL) -> float:
    x1 = hi - _INVGOLD * (hi - lo)
    x2 = lo + _INVGOLD * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVGOLD * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVGOLD * (hi - lo)
            f2 = fn(x2)
    return 0.5 * (lo + hi)


def _coupled_one_shot(c: Criterion, ga: GroupSpec, gb: GroupSpec, alpha_a: float, alpha_b: float) -> DecisionPair:
    cv = _curve(c, ga, gb)
    values = alpha_a * cv.loss_a + alpha_b * cv.loss_b
    best = float(values.min())
    # flat stretches: keep the largest theta_b among the minimizers
    i = int(np.nonzero(values <= best + TIE_TOL)[0][-1])
    tb, ta, fbest = float(cv.theta_b[i]), float(cv.theta_a[i]), float(values[i])
    n = len(cv.theta_b)
    if cv.piecewise_linear or n < 2:
        return DecisionPair(ta, tb, c, constraint_residual(c, ga, gb, ta, tb))
    # Near the optimum the objective is flat to rounding, while its slope is
    # not; local minima are bracketed by sign changes of the slope on the grid.
    slope = alpha_a * cv.slope_a * cv.rate_b + alpha_b * cv.slope_b * cv.rate_a
    cells = np.nonzero((slope[:-1] < 0.0) & (slope[1:] >= 0.0))[0]
    roots = []
    for j in cells:
        left, right = float(cv.theta_b[j]), float(cv.theta_b[j + 1])
        # one extra cell on each side keeps the image bracket strict
        lo_a, hi_a = float(cv.theta_a[max(j - 1, 0)]), float(cv.theta_a[min(j + 2, n - 1)])
        g = _slope_sign_fn(cv, alpha_a, alpha_b, lo_a, hi_a)
        gl, gr = g(left), g(right)
        if gr == 0.0:
            x = right
        elif gl < 0.0 < gr:
            x = brentq(g, left, right, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        else:
            continue
        xa = _map_scalar(c, ga, gb, x, lo_a, hi_a)
        roots.append((alpha_a * float(expected_loss(ga, xa)) + alpha_b * float(expected_loss(gb, x)), x, xa))
    if roots:
        fr, xr, xa = min(roots, key=lambda r: (r[0], -r[1]))
        # a certified stationary point wins unless the grid is clearly lower
        if fr <= fbest + 1e-13:
            tb, ta = xr, xa
    return DecisionPair(ta, tb, c, constraint_residual(c, ga, gb, ta, tb))


def one_shot(criterion, ga: GroupSpec, gb: GroupSpec, alpha_a: float, alpha_b: float) -> DecisionPair:
    """Minimize alpha_a*L_a + alpha_b*L_b subject to the fairness criterion."""
    c = Criterion.parse(criterion)
    _check_weights(alpha_a, alpha_b)
    if c is Criterion.EQLOS:
        return eqlos_solution(ga, gb)[0]
    if c is Criterion.MINMAX:
        return minmax_solution(ga, gb)
    return _coupled_one_shot(c, ga, gb, alpha_a, alpha_b)


def objective_along_constraint(criterion, ga: GroupSpec, gb: GroupSpec, alpha_a: float, alpha_b: float, theta_b):
    c = Criterion.parse(criterion)
    ta = constraint_map(c, ga, gb, theta_b)
    return alpha_a * expected_loss(ga, ta) + alpha_b * expected_loss(gb, theta_b)


# ---------------------------------------------------------------- EqLos / MinMax

def _level_root(g: GroupSpec, target: float, lo: float, hi: float) -> float:
    fn = lambda x: float(expected_loss(g, x)) - target
    flo, fhi = fn(lo), fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = fn(mid)
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=512)
def eqlos_solution(ga: GroupSpec, gb: GroupSpec) -> tuple[DecisionPair, float, tuple[DecisionPair, ...]]:
    """Equal-loss decision at the larger of the two groups' minimal losses.

    The group whose minimum is larger sits at its own minimizer. The other
    group has up to two thresholds on the target level, one on each side of
    its minimizer; the primary pair takes the one on the side facing the
    other group's minimizer. Group weights play no role.
    """
    da, _ = unconstrained_minimizer(ga)
    db, _ = unconstrained_minimizer(gb)
    la, lb = float(expected_loss(ga, da)), float(expected_loss(gb, db))
    target = max(la, lb)
    if la == lb:
        pair = DecisionPair(da, db, Criterion.EQLOS, 0.0)
        return pair, target, (pair,)
    a_high = la > lb
    low, d_low, d_high = (gb, db, da) if a_high else (ga, da, db)
    roots = []
    if low.g0 >= target:
        roots.append(("left", _level_root(low, target, low.support[0], d_low)))
    if low.g1 >= target:
        roots.append(("right", _level_root(low, target, d_low, low.support[1])))
    want = "right" if d_high >= d_low else "left"
    roots.sort(key=lambda r: r[0] != want)

    def make(theta: float) -> DecisionPair:
        ta, tb = (da, theta) if a_high else (theta, db)
        return DecisionPair(ta, tb, Criterion.EQLOS, constraint_residual(Criterion.EQLOS, ga, gb, ta, tb))

    alternates = tuple(make(t) for _, t in roots)
    return alternates[0], target, alternates


@lru_cache(maxsize=512)
def minmax_solution(ga: GroupSpec, gb: GroupSpec) -> DecisionPair:
    """Shared threshold minimizing the worse of the two group losses."""
    lo = min(ga.support[0], gb.support[0])
    hi = max(ga.support[1], gb.support[1])
    da, _ = unconstrained_minimizer(ga)
    db, _ = unconstrained_minimizer(gb)
    extra = [ga.f0.support_lo, ga.f0.support_hi, ga.f1.support_lo, ga.f1.support_hi,
             gb.f0.support_lo, gb.f0.support_hi, gb.f1.support_lo, gb.f1.support_hi, da, db]
    grid = np.unique(np.concatenate([np.linspace(lo, hi, MINMAX_GRID_POINTS), extra]))
    worst = lambda x: max(float(expected_loss(ga, x)), float(expected_loss(gb, x)))
    vals = np.maximum(expected_loss(ga, grid), expected_loss(gb, grid))
    i = int(np.argmin(vals))
    theta, fbest = float(grid[i]), float(vals[i])
    left, right = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, len(grid) - 1)])
    cands = []
    gap = lambda x: float(expected_loss(ga, x)) - float(expected_loss(gb, x))
    if gap(left) * gap(right) < 0.0:
        cands.append(brentq(gap, left, right, xtol=1e-14))
    if right > left:
        cands.append(_golden(worst, left, right))
    for x in cands:
        fx = worst(x)
        if fx < fbest:
            theta, fbest = x, fx
    return DecisionPair(theta, theta, Criterion.MINMAX, 0.0)


# ---------------------------------------------------------------- diagnostics

def stationarity_residual(criterion, ga: GroupSpec, gb: GroupSpec, theta_a: float, theta_b: float,
                          ratio: float) -> float:
    """First-order condition of the one-shot problem at an interior pair.

    ``ratio`` is alpha_a/alpha_b. The residual is a positive multiple of the
    derivative of the weighted loss along the constraint curve, written in the
    regime-specific density-ratio form, so its sign tells which way the
    objective decreases. RegimeError outside the regimes covered.
    """
    c = Criterion.parse(criterion)
    r = float(ratio)
    a0, a1 = dist.pdf(ga.f0, theta_a), dist.pdf(ga.f1, theta_a)
    b0, b1 = dist.pdf(gb.f0, theta_b), dist.pdf(gb.f1, theta_b)
    (a_lo1, a_hi0), (b_lo1, b_hi0) = ga.overlap, gb.overlap

    if c is Criterion.SIMPLE:
        lo, hi = max(a_lo1, b_lo1), min(a_hi0, b_hi0)
        da, _ = unconstrained_minimizer(ga)
        db, _ = unconstrained_minimizer(gb)
        if not (lo <= theta_b <= hi and lo <= da <= hi and lo <= db <= hi):
            raise RegimeError("Simple condition needs both minimizers and theta inside both overlaps")
        return r * (ga.g1 * a1 - ga.g0 * a0) + (gb.g1 * b1 - gb.g0 * b0)

    if c is Criterion.EQOPT:
        # theta_b in [lo(f_b1), hi(f_b0)] and theta_a below hi(f_a0)
        if not (b_lo1 <= theta_b <= b_hi0) or theta_a >= ga.f0.support_hi or a0 <= 0.0:
            raise RegimeError("EqOpt condition needs theta_b inside the b overlap and f_a0 > 0 at theta_a")
        base = gb.g0 / gb.g1 + r * ga.g0 / gb.g1
        if theta_a > a_lo1:
            base -= ga.g1 * r * a1 / (gb.g1 * a0)
        return gb.g1 * b0 * (b1 / b0 - base)

    if c is Criterion.STATPAR:
        if b_lo1 <= theta_b <= b_hi0 and theta_a <= a_lo1:
            return gb.g1 * b1 * (1.0 - r) - gb.g0 * b0 * (1.0 + r)
        if b_lo1 <= theta_b <= b_hi0 and a_lo1 <= theta_a <= a_hi0:
            rho_b = gb.g1 * b1 / (gb.g0 * b0)
            rho_a = ga.g1 * a1 / (ga.g0 * a0)
            return gb.g0 * b0 * (r * (rho_a - 1.0) * (1.0 + rho_b) / (rho_a + 1.0) + rho_b - 1.0)
        if theta_b >= b_hi0 and a_lo1 <= theta_a <= a_hi0 and theta_b < gb.f1.support_hi:
            fa = ga.g0 * a0 + ga.g1 * a1
            fb = gb.g1 * b1
            return (fb / fa) * (r * (ga.g1 * a1 - ga.g0 * a0) + ga.g1 * a1 + ga.g0 * a0)
        raise RegimeError("StatPar pair lies outside the three interior regimes")

    raise RegimeError(f"no stationarity condition for {c}")


# ---------------------------------------------------------------- uniform tables

@dataclass(frozen=True)
class UniformDecisionTable:
    """Finite menu of optimal pairs for all-uniform scenarios.

    Pair ``m`` is optimal when alpha_a/alpha_b falls in
    ``(thresholds[m-1], thresholds[m])``. At a threshold the upper pair is used.
    """

    criterion: Criterion
    pairs: tuple[tuple[float, float], ...]
    thresholds: tuple[float, ...]
    case: str = ""
    constants: tuple[tuple[str, float], ...] = ()
    extrapolated: bool = False

    def __post_init__(self):
        if len(self.pairs) == 0 or len(self.thresholds) != len(self.pairs) - 1:
            raise StructureError("a table needs M pairs and M-1 thresholds")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise StructureError("thresholds must be strictly increasing")
        if self.thresholds and self.thresholds[0] <= 0:
            raise StructureError("thresholds must be positive ratios")

    def index(self, ratio: float) -> int:
        return bisect.bisect_right(self.thresholds, ratio)

    def select(self, ratio: float) -> tuple[float, float]:
        return self.pairs[self.index(ratio)]

    def constant(self, name: str) -> float:
        return dict(self.constants)[name]


def _densities(g: GroupSpec) -> tuple[float, float]:
    return (g.g0 / (g.f0.support_hi - g.f0.support_lo), g.g1 / (g.f1.support_hi - g.f1.support_lo))


def _sign(x: float, what: str) -> int:
    if x == 0.0:
        raise CaseError(f"degenerate scenario: {what} are equal")
    return 1 if x > 0 else -1


def _finish(c: Criterion, raw_pairs: list, raw_thresholds: list, case: str, constants: dict,
            extrapolated: bool = False) -> UniformDecisionTable:
    """Drop cells that never apply to a positive ratio."""
    pairs, ths = list(raw_pairs), list(raw_thresholds)
    while ths and ths[0] <= 0.0:
        ths.pop(0)
        pairs.pop(0)
    keep_p, keep_t = [pairs[0]], []
    for p, t in zip(pairs[1:], ths):
        if keep_t and t <= keep_t[-1]:
            raise CaseError("closed-form thresholds are not increasing")
        keep_p.append(p)
        keep_t.append(t)
    return UniformDecisionTable(c, tuple((float(a), float(b)) for a, b in keep_p),
                                tuple(float(t) for t in keep_t), case,
                                tuple(sorted((k, float(v)) for k, v in constants.items())), extrapolated)


def _swap_table(t: UniformDecisionTable) -> UniformDecisionTable:
    """Table for swapped group labels: ratios invert and pairs flip."""
    pairs = tuple((b, a) for a, b in reversed(t.pairs))
    ths = tuple(1.0 / x for x in reversed(t.thresholds))
    return UniformDecisionTable(t.criterion, pairs, ths, t.case + " (groups swapped)", t.constants, t.extrapolated)


def _simple_table(ga: GroupSpec, gb: GroupSpec) -> UniformDecisionTable:
    a0s, a1s = ga.f0.support_hi, ga.f1.support_lo
    b0s, b1s = gb.f0.support_hi, gb.f1.support_lo
    if not (a1s < b1s < a0s < b0s):
        raise CaseError("Simple closed form needs lo(f_a1) < lo(f_b1) < hi(f_a0) < hi(f_b0)")
    # the piecewise slopes assume f_b0 is live from lo(f_a1) and f_a1 up to hi(f_b0)
    if gb.f0.support_lo > a1s or ga.f1.support_hi < b0s:
        raise CaseError("Simple closed form needs lo(f_b0) <= lo(f_a1) and hi(f_a1) >= hi(f_b0)")
    ka0, ka1 = _densities(ga)
    kb0, kb1 = _densities(gb)
    sa = _sign(ka1 - ka0, "group a densities")
    sb = _sign(kb1 - kb0, "group b densities")
    A = kb0 / (ka1 - ka0)
    B = (kb0 - kb1) / ka1
    C = (kb0 - kb1) / (ka1 - ka0)
    k = dict(A=A, B=B, C=C)
    if sb < 0 and sa > 0:
        return _finish(Criterion.SIMPLE, [(b0s, b0s), (a0s, a0s), (b1s, b1s), (a1s, a1s)], [B, C, A], "i", k)
    if sb > 0 and sa > 0:
        return _finish(Criterion.SIMPLE, [(b1s, b1s), (a1s, a1s)], [A], "ii", k)
    if sb < 0 and sa < 0:
        return _finish(Criterion.SIMPLE, [(b0s, b0s), (a0s, a0s)], [B], "iii", k)
    return _finish(Criterion.SIMPLE, [(b1s, b1s), (a0s, a0s)], [C], "iv", k)


def _eqopt_table(ga: GroupSpec, gb: GroupSpec) -> UniformDecisionTable:
    a_lo0, a_hi0, a_lo1 = ga.f0.support_lo, ga.f0.support_hi, ga.f1.support_lo
    b_lo0, b_hi0, b_lo1 = gb.f0.support_lo, gb.f0.support_hi, gb.f1.support_lo
    wa, wb = a_hi0 - a_lo0, b_hi0 - b_lo0
    fpr_b = (b_hi0 - b_lo1) / wb
    fpr_a = (a_hi0 - a_lo1) / wa
    _sign(fpr_a - fpr_b, "false positive rates at the overlap starts")
    if fpr_b > fpr_a:
        return _swap_table(_eqopt_table(gb, ga))
    theta_a_bar = a_hi0 - wa * fpr_b
    theta_b_bar = b_hi0 - wb * fpr_a
    ka0, ka1 = _densities(ga)
    kb0, kb1 = _densities(gb)
    sa = _sign(ka1 - ka0, "group a densities")
    A = (wb / wa) * (kb0 - kb1) / (ka1 - ka0)
    B = (gb.g0 / wa) / (ka1 - ka0)
    k = dict(A=A, B=B, theta_a_bar=theta_a_bar, theta_b_bar=theta_b_bar)
    if sa > 0:
        return _finish(Criterion.EQOPT, [(a_hi0, b_hi0), (theta_a_bar, b_lo1), (a_lo1, theta_b_bar)], [A, B], "i", k)
    return _finish(Criterion.EQOPT, [(theta_a_bar, b_lo1), (a_hi0, b_hi0)], [A], "ii", k)


def _statpar_table(ga: GroupSpec, gb: GroupSpec) -> UniformDecisionTable:
    c = Criterion.STATPAR
    a_hi0, a_lo1 = ga.f0.support_hi, ga.f1.support_lo
    b_hi0, b_lo1 = gb.f0.support_hi, gb.f1.support_lo
    theta_b_bar = float(inverse_constraint_map(c, ga, gb, a_hi0))
    if theta_b_bar < b_hi0:
        return _swap_table(_statpar_table(gb, ga))
    theta_a_bar = float(constraint_map(c, ga, gb, b_hi0))
    theta_a_tilde = float(constraint_map(c, ga, gb, b_lo1))
    theta_b_tilde = float(inverse_constraint_map(c, ga, gb, a_lo1))
    ka0, ka1 = _densities(ga)
    kb0, kb1 = _densities(gb)
    A = (kb1 - kb0) / (kb0 + kb1)
    B = (ka1 + ka0) / (ka0 - ka1)
    k = dict(A=A, B=B, theta_a_bar=theta_a_bar, theta_b_bar=theta_b_bar,
             theta_a_tilde=theta_a_tilde, theta_b_tilde=theta_b_tilde)
    if theta_a_bar > a_lo1:
        # remaining placements of the boundary thresholds: built from the same
        # piecewise-linear argument rather than a printed closed form
        t = envelope_table(c, ga, gb)
        return UniformDecisionTable(c, t.pairs, t.thresholds, "2" if theta_a_tilde <= a_lo1 else "3",
                                    tuple(sorted(k.items())), True)
    sb = _sign(kb1 - kb0, "group b densities")
    sa = _sign(ka1 - ka0, "group a densities")
    p1, p2 = (theta_a_tilde, b_lo1), (theta_a_bar, b_hi0)
    p3, p4 = (a_lo1, theta_b_tilde), (a_hi0, theta_b_bar)
    if sb > 0 and sa < 0:
        return _finish(c, [p1, p2, p3, p4], [A, 1.0, B], "1", k)
    if sb > 0 and sa > 0:
        return _finish(c, [p1, p2, p3], [A, 1.0], "1", k)
    if sb < 0 and sa < 0:
        return _finish(c, [p2, p3, p4], [1.0, B], "1", k)
    return _finish(c, [p2, p3], [1.0], "1", k)


def uniform_decision_table(criterion, ga: GroupSpec, gb: GroupSpec) -> UniformDecisionTable:
    """Closed-form candidate pairs and ratio thresholds for uniform scenarios."""
    c = Criterion.parse(criterion)
    if not (ga.is_uniform and gb.is_uniform):
        raise StructureError("decision tables need all four densities uniform")
    if c is Criterion.SIMPLE:
        a1s, b1s = ga.f1.support_lo, gb.f1.support_lo
        if b1s < a1s:
            return _swap_table(_simple_table(gb, ga))
        return _simple_table(ga, gb)
    if c is Criterion.EQOPT:
        return _eqopt_table(ga, gb)
    if c is Criterion.STATPAR:
        return _statpar_table(ga, gb)
    raise DomainError(f"no decision table for {c}")


def envelope_table(criterion, ga: GroupSpec, gb: GroupSpec) -> UniformDecisionTable:
    """Decision table from the lower envelope of the kink lines.

    With uniform densities the weighted loss is piecewise linear in theta_b,
    so its minimum sits at a kink. Each kink m contributes the line
    ``r*L_a(m) + L_b(m)`` in the ratio r, and the lower envelope over r > 0
    lists the optimal pairs in order with their switching ratios.
    """
    c = Criterion.parse(criterion)
    dom_lo, dom_hi = constraint_domain(c, ga, gb)
    tb = np.unique(np.asarray(_kinks_b(c, ga, gb) + [dom_lo, dom_hi], dtype=float))
    ta = np.asarray(constraint_map(c, ga, gb, tb), dtype=float)
    la = np.asarray(expected_loss(ga, ta), dtype=float)
    lb = np.asarray(expected_loss(gb, tb), dtype=float)
    # r -> 0: smallest L_b, then smallest L_a, then largest theta_b
    order = sorted(range(len(tb)), key=lambda m: (round(lb[m], 13), round(la[m], 13), -tb[m]))
    cur = order[0]
    pairs, ths = [(float(ta[cur]), float(tb[cur]))], []
    r_cur = 0.0
    while True:
        best, best_r = None, None
        for m in range(len(tb)):
            if la[m] < la[cur] - 1e-13:
                r = (lb[m] - lb[cur]) / (la[cur] - la[m])
                if r < r_cur - 1e-13:
                    continue
                key = (round(r, 12), la[m], -tb[m])
                if best is None or key < best_r:
                    best, best_r = m, key
        if best is None:
            break
        r = (lb[best] - lb[cur]) / (la[cur] - la[best])
        if r <= 0.0:
            pairs[-1] = (float(ta[best]), float(tb[best]))
        elif ths and abs(r - ths[-1]) <= 1e-12:
            pairs[-1] = (float(ta[best]), float(tb[best]))
        else:
            ths.append(float(r))
            pairs.append((float(ta[best]), float(tb[best])))
        cur, r_cur = best, max(r, 0.0)
    return UniformDecisionTable(c, tuple(pairs), tuple(ths), "envelope", (), False)
