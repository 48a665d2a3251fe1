"""Retention functions and one-step population updates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .errors import DivergenceError, DomainError, ModelError
from .fairsolve import DecisionPair
from .popmodel import GroupSpec, PopulationState, expected_loss, false_positive_rate, subgroup_loss

RetentionKind = Literal["one_minus_x", "one_minus_x_squared", "table"]
DynamicsKind = Literal["accuracy", "arrival_coupled", "fn_driven", "subgroup", "random_arrival"]
DYNAMICS_KINDS = ("accuracy", "arrival_coupled", "fn_driven", "subgroup", "random_arrival")


@dataclass(frozen=True)
class RetentionFn:
    """Probability that a user stays one more step, as a function of the loss felt."""

    kind: RetentionKind = "one_minus_x"
    table: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.kind not in ("one_minus_x", "one_minus_x_squared", "table"):
            raise DomainError(f"unknown retention kind {self.kind!r}")
        if self.kind == "table":
            if not self.table or len(self.table) < 2:
                raise DomainError("table retention needs at least two knots")
            xs = np.array([k[0] for k in self.table], dtype=float)
            ys = np.array([k[1] for k in self.table], dtype=float)
            if np.any(np.diff(xs) <= 0):
                raise DomainError("retention knots must have strictly increasing losses")
            if np.any(np.diff(ys) >= 0):
                raise DomainError("retention knots must be strictly decreasing in retention")
            if xs[0] > 0.0 or xs[-1] < 1.0:
                raise DomainError("retention knots must cover losses 0 to 1")
        grid = self(np.linspace(0.0, 1.0, 1001))
        if np.any(grid < 0.0) or np.any(grid > 1.0) or np.any(np.diff(grid) >= 0.0):
            raise DomainError("retention must map [0,1] into [0,1] and be strictly decreasing")

    def __call__(self, loss):
        x = np.clip(np.asarray(loss, dtype=float), 0.0, 1.0)
        if self.kind == "one_minus_x":
            out = 1.0 - x
        elif self.kind == "one_minus_x_squared":
            out = 1.0 - x * x
        else:
            out = np.interp(x, [k[0] for k in self.table], [k[1] for k in self.table])
        return float(out) if np.ndim(loss) == 0 else out


@dataclass(frozen=True)
class DynamicsModel:
    kind: DynamicsKind
    retention: RetentionFn
    beta_a: float
    beta_b: float
    rng_seed: int = 0
    arrival_mean_a: Optional[float] = None
    arrival_mean_b: Optional[float] = None

    def __post_init__(self):
        if self.kind not in DYNAMICS_KINDS:
            raise DomainError(f"unknown dynamics kind {self.kind!r}")
        for name in ("beta_a", "beta_b", "arrival_mean_a", "arrival_mean_b"):
            v = getattr(self, name)
            if v is not None and (not np.isfinite(v) or v < 0):
                raise DomainError(f"{name} must be finite and nonnegative, got {v}")

    @property
    def means(self) -> tuple[float, float]:
        """Expected arrivals per step for each group."""
        if self.kind == "random_arrival":
            ma = self.beta_a if self.arrival_mean_a is None else self.arrival_mean_a
            mb = self.beta_b if self.arrival_mean_b is None else self.arrival_mean_b
            return ma, mb
        return self.beta_a, self.beta_b

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)

    def with_betas(self, beta_a: float, beta_b: float) -> "DynamicsModel":
        return DynamicsModel(self.kind, self.retention, beta_a, beta_b, self.rng_seed,
                             None if self.arrival_mean_a is None else beta_a,
                             None if self.arrival_mean_b is None else beta_b)


def initial_state(model: DynamicsModel, ga: GroupSpec, gb: GroupSpec) -> PopulationState:
    """Near-empty start N_k(1) = beta_k, split by label for subgroup dynamics."""
    ba, bb = model.means
    if model.kind == "subgroup":
        return PopulationState.from_subgroups(ga.g0 * ba, ga.g1 * ba, gb.g0 * bb, gb.g1 * bb)
    return PopulationState(ba, bb)


def step(model: DynamicsModel, state: PopulationState, pair: DecisionPair, ga: GroupSpec, gb: GroupSpec,
         rng: Optional[np.random.Generator] = None) -> PopulationState:
    """Advance expected counts by one round under the chosen thresholds."""
    nu = model.retention
    ta, tb = pair.theta_a, pair.theta_b
    if (model.kind == "subgroup") != state.has_subgroups:
        raise ModelError(f"{model.kind} dynamics given a state "
                         f"{'with' if state.has_subgroups else 'without'} subgroup counts")
    if model.kind == "subgroup":
        na0, na1, nb0, nb1 = state.subgroup_counts()
        return PopulationState.from_subgroups(
            na0 * nu(subgroup_loss(ga, 0, ta)) + ga.g0 * model.beta_a,
            na1 * nu(subgroup_loss(ga, 1, ta)) + ga.g1 * model.beta_a,
            nb0 * nu(subgroup_loss(gb, 0, tb)) + gb.g0 * model.beta_b,
            nb1 * nu(subgroup_loss(gb, 1, tb)) + gb.g1 * model.beta_b,
        )
    if model.kind == "fn_driven":
        ra, rb = nu(false_positive_rate(ga, ta)), nu(false_positive_rate(gb, tb))
    else:
        ra, rb = nu(expected_loss(ga, ta)), nu(expected_loss(gb, tb))
    if model.kind == "arrival_coupled":
        return PopulationState((state.n_a + model.beta_a) * ra, (state.n_b + model.beta_b) * rb)
    if model.kind == "random_arrival":
        if rng is None:
            raise ModelError("random arrivals need the trajectory's generator")
        ma, mb = model.means
        ba, bb = (float(x) for x in rng.poisson([ma, mb]))
        return PopulationState(state.n_a * ra + ba, state.n_b * rb + bb)
    return PopulationState(state.n_a * ra + model.beta_a, state.n_b * rb + model.beta_b)


def fixed_point(model: DynamicsModel, losses: tuple[float, float]) -> tuple[float, float, float, float]:
    """Limit of constant-decision dynamics: (N_a, N_b, share of a, average loss).

    ``losses`` are the quantities that drive retention: expected losses for
    accuracy dynamics, false positive rates for fn_driven dynamics.
    """
    if model.kind not in ("accuracy", "fn_driven"):
        raise ModelError(f"no closed-form fixed point for {model.kind} dynamics")
    la, lb = losses
    nu = model.retention
    qa, qb = 1.0 - nu(la), 1.0 - nu(lb)
    if qa <= 0.0 or qb <= 0.0:
        raise DivergenceError("retention of one never reaches a finite population")
    ba, bb = model.beta_a, model.beta_b
    n_a, n_b = ba / qa, bb / qb
    if ba > 0:
        denom = 1.0 + (bb / ba) * qa / qb
        alpha_a = 1.0 / denom
        loss = lb + (la - lb) / denom
    else:
        alpha_a = 0.0
        loss = lb
    return n_a, n_b, alpha_a, loss
