"""Group specifications, expected-loss curves and population state."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from . import dist
from .dist import SubgroupDistribution
from .errors import DomainError, StructureError

_DELTA_TOL = 1e-10
_SIGN_SCAN = 1000


@dataclass(frozen=True)
class GroupSpec:
    """Label mix and the two label-conditional feature densities of one group."""

    g0: float
    g1: float
    f0: SubgroupDistribution
    f1: SubgroupDistribution

    def __post_init__(self):
        if self.g0 < 0 or self.g1 < 0 or abs(self.g0 + self.g1 - 1.0) > 1e-12:
            raise DomainError(f"label fractions must be nonnegative and sum to 1, got {self.g0}, {self.g1}")
        f0, f1 = self.f0, self.f1
        if not (f0.support_lo < f1.support_lo < f0.support_hi < f1.support_hi):
            raise StructureError(
                "supports must satisfy lo(f0) < lo(f1) < hi(f0) < hi(f1), got "
                f"f0=[{f0.support_lo}, {f0.support_hi}] f1=[{f1.support_lo}, {f1.support_hi}]"
            )

    @classmethod
    def from_label0(cls, g0: float, f0: SubgroupDistribution, f1: SubgroupDistribution) -> "GroupSpec":
        return cls(float(g0), 1.0 - float(g0), f0, f1)

    @property
    def overlap(self) -> tuple[float, float]:
        return self.f1.support_lo, self.f0.support_hi

    @property
    def support(self) -> tuple[float, float]:
        return self.f0.support_lo, self.f1.support_hi

    @property
    def is_uniform(self) -> bool:
        return self.f0.kind == "uniform" and self.f1.kind == "uniform"

    def mixture_pdf(self, x):
        return self.g0 * dist.pdf(self.f0, x) + self.g1 * dist.pdf(self.f1, x)

    def loss_slope(self, x):
        """Derivative of the expected loss: g1*f1 - g0*f0."""
        return self.g1 * dist.pdf(self.f1, x) - self.g0 * dist.pdf(self.f0, x)

    def relabel(self, g0: float) -> "GroupSpec":
        return GroupSpec(float(g0), 1.0 - float(g0), self.f0, self.f1)


@dataclass(frozen=True)
class PopulationState:
    """Expected user counts, optionally split by label."""

    n_a: float
    n_b: float
    n_a0: Optional[float] = None
    n_a1: Optional[float] = None
    n_b0: Optional[float] = None
    n_b1: Optional[float] = None

    def __post_init__(self):
        counts = [self.n_a, self.n_b] + [c for c in self.subgroup_counts() if c is not None]
        if any(not np.isfinite(c) or c < 0 for c in counts):
            raise DomainError("population counts must be finite and nonnegative")
        subs = self.subgroup_counts()
        if any(c is not None for c in subs):
            if any(c is None for c in subs):
                raise DomainError("subgroup counts must be given for all four subgroups")
            for total, c0, c1 in ((self.n_a, subs[0], subs[1]), (self.n_b, subs[2], subs[3])):
                if abs(total - (c0 + c1)) > 1e-9 * max(1.0, total):
                    raise DomainError("group count must equal the sum of its subgroup counts")

    @classmethod
    def from_subgroups(cls, n_a0: float, n_a1: float, n_b0: float, n_b1: float) -> "PopulationState":
        return cls(n_a0 + n_a1, n_b0 + n_b1, n_a0, n_a1, n_b0, n_b1)

    def subgroup_counts(self) -> tuple:
        return self.n_a0, self.n_a1, self.n_b0, self.n_b1

    @property
    def has_subgroups(self) -> bool:
        return self.n_a0 is not None

    @property
    def total(self) -> float:
        return self.n_a + self.n_b

    def proportion(self, group: Literal["a", "b"] = "a") -> float:
        if self.total <= 0:
            return 0.5
        return (self.n_a if group == "a" else self.n_b) / self.total

    def weights(self) -> tuple[float, float]:
        a = self.proportion("a")
        return a, 1.0 - a


def expected_loss(g: GroupSpec, theta):
    """Misclassification probability of a threshold rule within one group."""
    return g.g1 * dist.cdf(g.f1, theta) + g.g0 * (1.0 - dist.cdf(g.f0, theta))


def total_loss(ga: GroupSpec, gb: GroupSpec, alpha_a: float, alpha_b: float, theta_a, theta_b):
    _check_weights(alpha_a, alpha_b)
    return alpha_a * expected_loss(ga, theta_a) + alpha_b * expected_loss(gb, theta_b)


def acceptance_rate(g: GroupSpec, theta):
    return g.g0 * (1.0 - dist.cdf(g.f0, theta)) + g.g1 * (1.0 - dist.cdf(g.f1, theta))


def false_positive_rate(g: GroupSpec, theta):
    return 1.0 - dist.cdf(g.f0, theta)


def subgroup_loss(g: GroupSpec, label: int, theta):
    if label == 0:
        return 1.0 - dist.cdf(g.f0, theta)
    if label == 1:
        return dist.cdf(g.f1, theta)
    raise DomainError(f"label must be 0 or 1, got {label}")


def _check_weights(alpha_a: float, alpha_b: float) -> None:
    if alpha_a < 0 or alpha_b < 0 or abs(alpha_a + alpha_b - 1.0) > 1e-9:
        raise DomainError(f"group weights must be nonnegative and sum to 1, got {alpha_a}, {alpha_b}")


def _bisect_root(fn, lo: float, hi: float, tol: float) -> float:
    flo = fn(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = fn(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def unconstrained_minimizer(g: GroupSpec) -> tuple[float, str]:
    """Threshold minimizing the group's own expected loss.

    Returns ``(delta, branch)`` with ``branch`` one of ``lower_end``,
    ``interior`` or ``upper_end``. Below lo(f1) the loss only falls and above
    hi(f0) it only rises, so the minimizer sits in the overlap. The overlap
    ends are candidates when the slope ``g1*f1 - g0*f0`` points inward there;
    interior candidates are the sign changes of that slope from negative to
    positive, bracketed on a scan and refined by bisection. The lowest loss
    wins, the lower threshold on ties.
    """
    lo, hi = g.overlap
    slope = lambda x: float(g.loss_slope(x))
    cands = []
    if slope(lo) >= 0.0:
        cands.append((lo, "lower_end"))
    grid = np.linspace(lo, hi, _SIGN_SCAN + 1)
    s = g.loss_slope(grid)
    for i in np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]:
        cands.append((_bisect_root(slope, grid[i], grid[i + 1], _DELTA_TOL), "interior"))
    if slope(hi) <= 0.0:
        cands.append((hi, "upper_end"))
    losses = [float(expected_loss(g, x)) for x, _ in cands]
    return cands[int(np.argmin(losses))]


def loss_is_unimodal(g: GroupSpec) -> bool:
    """True when the expected loss falls and then rises, with no interior local maximum.

    Scans the slope across the overlap for a positive value followed by a
    negative one. Monotone densities in the overlap always pass.
    """
    s = g.loss_slope(np.linspace(*g.overlap, _SIGN_SCAN + 1))
    pos, neg = np.nonzero(s > 0)[0], np.nonzero(s < 0)[0]
    return not (pos.size and neg.size and pos[0] < neg[-1])
