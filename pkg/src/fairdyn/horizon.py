"""Greedy multi-step simulation, convergence checks and uniform-case visit analysis."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import DynamicsModel, fixed_point, initial_state, step
from .errors import DomainError, EmptyGroupError, FairDynError, ModelError, StructureError
from .fairsolve import (COUPLED, Criterion, DecisionPair, UniformDecisionTable, constraint_domain,
                        constraint_map, constraint_residual, eqlos_solution, inverse_constraint_map,
                        minmax_solution, one_shot)
from .popmodel import GroupSpec, PopulationState, expected_loss, false_positive_rate, unconstrained_minimizer

COLUMNS = ("t", "theta_a", "theta_b", "loss_a", "loss_b", "alpha_a", "n_a", "n_b",
           "step_total_loss", "avg_total_loss")


@dataclass(frozen=True)
class ConvergenceSpec:
    """Stop once thresholds and counts stay put for ``window`` consecutive steps.

    Thresholds must move less than ``eps`` in absolute terms and counts less
    than ``eps`` relative to their size. ``max_steps`` caps the run and
    ``tail_fraction`` sets how much of the run the long-run average uses.
    """

    eps: float = 1e-8
    window: int = 10
    max_steps: int = 100_000
    tail_fraction: float = 0.2

    def __post_init__(self):
        if not self.eps > 0 or self.window < 1 or self.max_steps < 0 or not 0 < self.tail_fraction <= 1:
            raise DomainError("invalid convergence settings")


@dataclass
class Trajectory:
    criterion: str = ""
    rows: list = field(default_factory=list)
    stop_reason: str = ""
    orientation: int = 1
    extinct_group: Optional[str] = None

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        i = COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def append(self, t: int, pair: DecisionPair, la: float, lb: float, state: PopulationState) -> None:
        alpha_a = state.proportion("a")
        total = alpha_a * la + (1.0 - alpha_a) * lb
        prev = self.rows[-1][9] if self.rows else 0.0
        avg = prev + (total - prev) / (len(self.rows) + 1)
        self.rows.append((t, pair.theta_a, pair.theta_b, la, lb, alpha_a, state.n_a, state.n_b, total, avg))

    @property
    def final(self) -> dict:
        return dict(zip(COLUMNS, self.rows[-1]))

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"

    @property
    def running_avg_total_loss(self) -> float:
        return self.rows[-1][9] if self.rows else float("nan")

    def long_run_average(self, tail_fraction: float = 0.2) -> float:
        """Mean step loss over the last ``tail_fraction`` of the recorded steps."""
        if not self.rows:
            return float("nan")
        k = max(1, int(math.ceil(tail_fraction * len(self.rows))))
        return float(np.mean([r[8] for r in self.rows[-k:]]))


def _effective_groups(ga: GroupSpec, gb: GroupSpec, state: PopulationState) -> tuple[GroupSpec, GroupSpec]:
    """Groups whose label mix follows the current subgroup counts."""
    if not state.has_subgroups:
        return ga, gb
    na0, na1, nb0, nb1 = state.subgroup_counts()
    out = []
    for g, c0, c1 in ((ga, na0, na1), (gb, nb0, nb1)):
        out.append(g.relabel(c0 / (c0 + c1)) if c0 + c1 > 0 else g)
    return out[0], out[1]


def _orientation(criterion: Criterion, ga: GroupSpec, gb: GroupSpec) -> int:
    """+1 when thresholds rise with the share of group a, -1 when they fall."""
    if criterion not in COUPLED:
        return 1
    da, _ = unconstrained_minimizer(ga)
    db, _ = unconstrained_minimizer(gb)
    return 1 if db <= float(inverse_constraint_map(criterion, ga, gb, da)) else -1


def greedy_decision(criterion: Criterion, ga: GroupSpec, gb: GroupSpec, state: PopulationState) -> DecisionPair:
    alpha_a, alpha_b = state.weights()
    return one_shot(criterion, ga, gb, alpha_a, alpha_b)


def simulate(ga: GroupSpec, gb: GroupSpec, criterion, model: DynamicsModel,
             init: Optional[PopulationState] = None, horizon_T: Optional[int] = None,
             conv: Optional[ConvergenceSpec] = None, fixed_pair: Optional[DecisionPair] = None,
             decide: Optional[Callable[[int, PopulationState], DecisionPair]] = None) -> Trajectory:
    """Run greedy decisions against the population dynamics.

    Row ``t`` holds the state at the start of round ``t`` and the decision
    taken in it; a horizon of T updates yields at most T + 1 rows. A constant
    ``fixed_pair`` or a custom ``decide(t, state)`` replaces the greedy solve.
    """
    c = Criterion.parse(criterion)
    conv = conv or ConvergenceSpec()
    T = conv.max_steps if horizon_T is None else int(horizon_T)
    if T < 0:
        raise DomainError("horizon must be nonnegative")
    state = init if init is not None else initial_state(model, ga, gb)
    rng = model.make_rng() if model.kind == "random_arrival" else None
    traj = Trajectory(c.value, orientation=_orientation(c, ga, gb))
    calm = 0
    prev = None
    for t in range(1, T + 2):
        try:
            if fixed_pair is not None:
                pair = fixed_pair
            elif decide is not None:
                pair = decide(t, state)
            else:
                ea, eb = _effective_groups(ga, gb, state)
                pair = greedy_decision(c, ea, eb, state)
            la, lb = float(expected_loss(ga, pair.theta_a)), float(expected_loss(gb, pair.theta_b))
            traj.append(t, pair, la, lb, state)
            if prev is not None:
                still = (abs(pair.theta_a - prev[0]) < conv.eps and abs(pair.theta_b - prev[1]) < conv.eps
                         and abs(state.n_a - prev[2]) <= conv.eps * max(1.0, state.n_a)
                         and abs(state.n_b - prev[3]) <= conv.eps * max(1.0, state.n_b))
                calm = calm + 1 if still else 0
                if calm >= conv.window:
                    traj.stop_reason = "converged"
                    return traj
            prev = (pair.theta_a, pair.theta_b, state.n_a, state.n_b)
            if t == T + 1:
                break
            state = step(model, state, pair, ga, gb, rng)
        except EmptyGroupError as e:
            # a learner ran out of users in one group; the run ends there
            traj.stop_reason = "extinct"
            traj.extinct_group = getattr(e, "group", None)
            return traj
        except FairDynError as e:
            e.args = (f"step {t}: {e}",)
            e.step = t
            raise
    traj.stop_reason = "horizon"
    return traj


# ---------------------------------------------------------------- uniform-case visits

@dataclass(frozen=True)
class VisitedDecisions:
    visits: tuple[tuple[tuple[float, float], int], ...]
    indices: tuple[int, ...]
    converged_pair: tuple[float, float]

    @property
    def pairs(self) -> list[tuple[float, float]]:
        return [p for p, _ in self.visits]


def _drift(model: DynamicsModel, ga: GroupSpec, gb: GroupSpec, pair: tuple[float, float]) -> float:
    """Limiting N_a/N_b if the pair were kept forever."""
    nu = model.retention
    qa = 1.0 - nu(float(expected_loss(ga, pair[0])))
    qb = 1.0 - nu(float(expected_loss(gb, pair[1])))
    if model.beta_b == 0 or qa == 0:
        return math.inf
    return model.beta_a * qb / (model.beta_b * qa)


def visited_decisions(table: UniformDecisionTable, ga: GroupSpec, gb: GroupSpec, model: DynamicsModel,
                      init: Optional[PopulationState] = None, max_steps: int = 10_000_000) -> VisitedDecisions:
    """Sequence of table pairs the greedy policy passes through, without simulating the solver.

    Starting from the cell holding the initial ratio, compare the ratio the
    current pair would settle at against the cell bounds and step one cell up
    or down until it lands inside. First-visit times come from iterating the
    constant-pair recursion between switches.
    """
    if model.kind != "accuracy":
        raise ModelError("visit analysis applies to accuracy-driven dynamics")
    if not isinstance(table, UniformDecisionTable):
        raise StructureError("expected a UniformDecisionTable")
    M = len(table.pairs)
    if len(table.thresholds) != M - 1:
        raise StructureError("malformed decision table")
    state = init if init is not None else initial_state(model, ga, gb)
    if state.n_b <= 0 or model.beta_b <= 0:
        raise DomainError("visit analysis needs positive group-b counts and arrivals")
    ratio = state.n_a / state.n_b
    if not math.isclose(ratio, model.beta_a / model.beta_b, rel_tol=1e-9):
        raise DomainError("initial counts must be proportional to the arrivals")
    nu = model.retention
    k = table.index(ratio)
    indices, visits = [k], [(table.pairs[k], 1)]
    n_a, n_b, t = state.n_a, state.n_b, 1
    while True:
        lower = table.thresholds[k - 1] if k > 0 else 0.0
        upper = table.thresholds[k] if k < M - 1 else math.inf
        d = _drift(model, ga, gb, table.pairs[k])
        if lower <= d <= upper:
            break
        nxt = k + 1 if d > upper else k - 1
        ra = nu(float(expected_loss(ga, table.pairs[k][0])))
        rb = nu(float(expected_loss(gb, table.pairs[k][1])))
        while table.index(n_a / n_b) == k:
            n_a, n_b, t = n_a * ra + model.beta_a, n_b * rb + model.beta_b, t + 1
            if t > max_steps:
                raise DomainError("switch not reached within the step cap")
        k = table.index(n_a / n_b)
        if k != nxt or k in indices:
            raise StructureError("ratio left its cell in an unexpected direction")
        indices.append(k)
        visits.append((table.pairs[k], t))
    return VisitedDecisions(tuple(visits), tuple(indices), table.pairs[k])


def visit_sequence(traj: Trajectory, tol: float = 1e-6) -> list[tuple[tuple[float, float], int]]:
    """Distinct consecutive decisions of a trajectory with their first steps."""
    out = []
    for r in traj.rows:
        p = (r[1], r[2])
        if not out or abs(p[0] - out[-1][0][0]) > tol or abs(p[1] - out[-1][0][1]) > tol:
            out.append((p, int(r[0])))
    return out


# ---------------------------------------------------------------- monotone course

@dataclass(frozen=True)
class MonotonicityReport:
    case: int
    violations: tuple[tuple[int, str], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first_violation(self) -> Optional[tuple[int, str]]:
        return self.violations[0] if self.violations else None


def check_monotone_course(traj: Trajectory, tol: float = 1e-9) -> MonotonicityReport:
    """Classify a run by its first-round loss gap and verify the monotone course.

    Case 1: group a starts with the larger loss, its share falls and the
    thresholds move with the share. Case 2 mirrors it. Case 3: equal losses,
    everything stays constant. The loss ordering must persist throughout.
    """
    if not traj.rows:
        return MonotonicityReport(3, ())
    ta, tb = traj.column("theta_a"), traj.column("theta_b")
    la, lb = traj.column("loss_a"), traj.column("loss_b")
    na, nb = traj.column("n_a"), traj.column("n_b")
    steps = traj.column("t").astype(int)
    if la[0] > lb[0] + tol:
        case, share_dir = 1, -1
    elif la[0] < lb[0] - tol:
        case, share_dir = 2, 1
    else:
        case, share_dir = 3, 0
    theta_dir = share_dir * traj.orientation
    bad = []
    for i in range(1, len(steps)):
        s = int(steps[i])
        for name, seq, direction in (("theta_a", ta, theta_dir), ("theta_b", tb, theta_dir)):
            d = seq[i] - seq[i - 1]
            if (direction == 0 and abs(d) > tol) or (direction != 0 and direction * d < -tol):
                bad.append((s, f"{name} moved {d:+.3e} against the predicted direction"))
        r0 = na[i - 1] / nb[i - 1] if nb[i - 1] > 0 else math.inf
        r1 = na[i] / nb[i] if nb[i] > 0 else math.inf
        rel = (r1 - r0) / max(abs(r0), 1e-300)
        if (share_dir == 0 and abs(rel) > tol) or (share_dir != 0 and share_dir * rel < -tol):
            bad.append((s, f"population ratio moved {rel:+.3e} against the predicted direction"))
    for i in range(len(steps)):
        gap = la[i] - lb[i]
        if (case == 1 and gap < -tol) or (case == 2 and gap > tol) or (case == 3 and abs(gap) > tol):
            bad.append((int(steps[i]), f"loss ordering flipped (gap {gap:+.3e})"))
    bad.sort(key=lambda v: v[0])
    return MonotonicityReport(case, tuple(bad))


# ---------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class SweepCell:
    beta_a: float
    beta_b: float
    final_alpha_a: float = float("nan")
    min_share: float = float("nan")
    final_theta_a: float = float("nan")
    final_theta_b: float = float("nan")
    final_loss_a: float = float("nan")
    final_loss_b: float = float("nan")
    converged: bool = False
    error: Optional[str] = None


@dataclass(frozen=True)
class SweepResult:
    criterion: str
    cells: tuple[SweepCell, ...]


def _sweep_cell(args) -> SweepCell:
    ga, gb, c, model, ba, bb, horizon_T, conv = args
    try:
        traj = simulate(ga, gb, c, model.with_betas(ba, bb), None, horizon_T, conv)
        f = traj.final
        a = f["alpha_a"]
        return SweepCell(ba, bb, a, min(a, 1.0 - a), f["theta_a"], f["theta_b"], f["loss_a"], f["loss_b"],
                         traj.converged)
    except FairDynError as e:
        return SweepCell(ba, bb, error=f"{type(e).__name__}: {e}")


def sweep_final_proportion(ga: GroupSpec, gb: GroupSpec, criterion, model_template: DynamicsModel,
                           beta_grid: Sequence[tuple[float, float]], horizon_T: Optional[int] = None,
                           conv: Optional[ConvergenceSpec] = None, jobs: Optional[int] = None) -> SweepResult:
    """Final share of group a for each arrival pair, run from near-empty starts."""
    c = Criterion.parse(criterion)
    grid = list(beta_grid)
    if not grid:
        raise DomainError("sweep grid is empty")
    tasks = [(ga, gb, c, model_template, float(ba), float(bb), horizon_T, conv) for ba, bb in grid]
    jobs = (os.cpu_count() or 1) if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(tasks) == 1:
        cells = [_sweep_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            cells = list(pool.map(_sweep_cell, tasks))
    return SweepResult(c.value, tuple(cells))


# ---------------------------------------------------------------- trade-offs

@dataclass(frozen=True)
class TradeoffPoint:
    criterion: str
    avg_total_loss: float
    final_alpha_a: float
    converged: bool


def tradeoff_curve(ga: GroupSpec, gb: GroupSpec, model: DynamicsModel, horizon_T: Optional[int] = None,
                   conv: Optional[ConvergenceSpec] = None,
                   criteria: Sequence = (Criterion.SIMPLE, Criterion.EQLOS, Criterion.MINMAX)) -> list[TradeoffPoint]:
    conv = conv or ConvergenceSpec()
    out = []
    for c in criteria:
        traj = simulate(ga, gb, c, model, None, horizon_T, conv)
        out.append(TradeoffPoint(Criterion.parse(c).value, traj.long_run_average(conv.tail_fraction),
                                 traj.final["alpha_a"], traj.converged))
    return out


@dataclass(frozen=True)
class Witness:
    found: bool
    pair: Optional[tuple[float, float]]
    pair_average: float
    greedy_average: float


def suboptimality_witness(ga: GroupSpec, gb: GroupSpec, criterion, model: DynamicsModel,
                          conv: Optional[ConvergenceSpec] = None, grid_points: int = 41) -> Witness:
    """Search constant feasible pairs for one whose long-run loss beats the greedy run."""
    c = Criterion.parse(criterion)
    if c not in COUPLED:
        raise DomainError("witness search needs a coupled criterion")
    conv = conv or ConvergenceSpec()
    greedy = simulate(ga, gb, c, model, None, None, conv).long_run_average(conv.tail_fraction)
    lo, hi = constraint_domain(c, ga, gb)
    best = None
    for tb in np.linspace(lo, hi, grid_points + 2)[1:-1]:
        ta = float(constraint_map(c, ga, gb, tb))
        pair = DecisionPair(ta, float(tb), c, constraint_residual(c, ga, gb, ta, float(tb)))
        avg = simulate(ga, gb, c, model, None, None, conv, fixed_pair=pair).long_run_average(conv.tail_fraction)
        if best is None or avg < best[1]:
            best = ((ta, float(tb)), avg)
    found = best is not None and best[1] < greedy - 1e-12
    return Witness(found, best[0] if found else None, best[1], greedy)


def trajectory_fixed_point(traj: Trajectory, model: DynamicsModel, ga: GroupSpec, gb: GroupSpec):
    """Closed-form limit for the trajectory's final decision."""
    f = traj.final
    if model.kind == "fn_driven":
        drive = (float(false_positive_rate(ga, f["theta_a"])), float(false_positive_rate(gb, f["theta_b"])))
    else:
        drive = (f["loss_a"], f["loss_b"])
    return fixed_point(model, drive)
