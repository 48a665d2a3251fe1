"""Decisions learned from finite samples, and the learned-versus-Bayes experiment.

The empirical solver mirrors the population solver with every probability
replaced by a sample frequency. A user is accepted when its feature exceeds
the threshold, so a label-1 user at or below the threshold and a label-0 user
above it are both misclassified.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dist
from .dynamics import DynamicsModel
from .errors import DomainError, EmptyGroupError, ModelError
from .fairsolve import Criterion, DecisionPair
from .horizon import ConvergenceSpec, Trajectory, simulate
from .popmodel import GroupSpec, PopulationState

_LEARNABLE = (Criterion.SIMPLE, Criterion.EQOPT, Criterion.STATPAR, Criterion.EQLOS)


@dataclass(frozen=True)
class SampleSet:
    """Features and labels per group, with each group's support for candidate ends."""

    features_a: np.ndarray
    labels_a: np.ndarray
    features_b: np.ndarray
    labels_b: np.ndarray
    support_a: tuple[float, float]
    support_b: tuple[float, float]
    seed: object = 0

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.features_a), len(self.features_b)


def _draw_group(g: GroupSpec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    labels = (rng.random(n) >= g.g0).astype(np.int8)
    u = rng.random(n)
    x = np.empty(n)
    for lab, f in ((0, g.f0), (1, g.f1)):
        m = labels == lab
        if m.any():
            x[m] = dist.quantile(f, u[m])
    return x, labels


def draw_samples(ga: GroupSpec, gb: GroupSpec, state: PopulationState, seed) -> SampleSet:
    """round(N_k) i.i.d. users per group, drawn by inverse transform."""
    if state.n_a < 0 or state.n_b < 0:
        raise DomainError("sample counts must be nonnegative")
    rng = np.random.default_rng(seed)
    xa, ya = _draw_group(ga, int(round(state.n_a)), rng)
    xb, yb = _draw_group(gb, int(round(state.n_b)), rng)
    return SampleSet(xa, ya, xb, yb, ga.support, gb.support, seed)


@dataclass(frozen=True)
class _Stats:
    """Empirical rates of one group at each candidate threshold."""

    cands: np.ndarray
    loss: np.ndarray
    fpr: np.ndarray
    accept: np.ndarray


def _candidates(features: np.ndarray, support: tuple[float, float]) -> np.ndarray:
    u = np.unique(features)
    mids = 0.5 * (u[:-1] + u[1:])
    return np.unique(np.concatenate([[support[0], support[1]], mids]))


def _stats(features: np.ndarray, labels: np.ndarray, cands: np.ndarray) -> _Stats:
    n = len(features)
    x0 = np.sort(features[labels == 0])
    x1 = np.sort(features[labels == 1])
    below0 = np.searchsorted(x0, cands, side="right")
    below1 = np.searchsorted(x1, cands, side="right")
    above0 = len(x0) - below0
    above1 = len(x1) - below1
    loss = (below1 + above0) / n
    fpr = above0 / len(x0) if len(x0) else np.zeros(len(cands))
    accept = (above0 + above1) / n
    return _Stats(cands, loss, fpr, accept)


def empirical_rates(features: np.ndarray, labels: np.ndarray, theta) -> dict:
    """Empirical loss, false positive rate and acceptance rate at ``theta``."""
    if len(features) == 0:
        raise EmptyGroupError("?", "no samples")
    s = _stats(np.asarray(features, float), np.asarray(labels), np.atleast_1d(np.asarray(theta, float)))
    scalar = np.ndim(theta) == 0
    pick = (lambda v: float(v[0])) if scalar else (lambda v: v)
    return {"loss": pick(s.loss), "fpr": pick(s.fpr), "accept": pick(s.accept)}


def _best_match(rate_a: np.ndarray, loss_a: np.ndarray, targets: np.ndarray):
    """For each target, the a-candidate with the closest rate, then the lowest loss.

    Returns (index into a's candidates, absolute residual).
    """
    # rate_a is nonincreasing along the candidates; group by distinct value
    vals, start = np.unique(-rate_a, return_index=True)
    vals = -vals  # descending rates
    bounds = np.append(start, len(rate_a))
    gid = np.repeat(np.arange(len(vals)), np.diff(bounds))
    gmin = np.minimum.reduceat(loss_a, start)
    hits = np.flatnonzero(loss_a == gmin[gid])
    _, first = np.unique(gid[hits], return_index=True)
    best_in = hits[first]
    asc = vals[::-1]
    pos = np.searchsorted(asc, targets)
    lo = np.clip(pos - 1, 0, len(asc) - 1)
    hi = np.clip(pos, 0, len(asc) - 1)
    d_lo, d_hi = np.abs(asc[lo] - targets), np.abs(asc[hi] - targets)
    k_asc = np.where(d_hi < d_lo, hi, lo)
    tie = d_hi == d_lo
    k = len(vals) - 1 - k_asc
    k_other = len(vals) - 1 - hi
    idx = best_in[k]
    alt = best_in[k_other]
    idx = np.where(tie & (loss_a[alt] < loss_a[idx]), alt, idx)
    return idx, np.minimum(d_lo, d_hi)


def _pick(objective: np.ndarray, residual: np.ndarray, theta_b: np.ndarray) -> int:
    order = np.lexsort((theta_b, residual, objective))
    return int(order[0])


def _empirical_min(st: _Stats) -> int:
    return int(np.flatnonzero(st.loss == st.loss.min())[0])


def _eqlos(sa: _Stats, sb: _Stats) -> tuple[float, float, float]:
    ia, ib = _empirical_min(sa), _empirical_min(sb)
    la, lb = float(sa.loss[ia]), float(sb.loss[ib])
    if la == lb:
        return float(sa.cands[ia]), float(sb.cands[ib]), 0.0
    a_high = la > lb
    high, hi_i, low, lo_i = (sa, ia, sb, ib) if a_high else (sb, ib, sa, ia)
    target = max(la, lb)
    right = high.cands[hi_i] >= low.cands[lo_i]
    sides = [np.arange(lo_i, len(low.cands)), np.arange(0, lo_i + 1)]
    if not right:
        sides.reverse()
    for idx in sides:
        if low.loss[idx].max() >= target:
            break
    res = np.abs(low.loss[idx] - target)
    j = int(idx[np.lexsort((low.cands[idx], res))[0]])
    theta_low = float(low.cands[j])
    if a_high:
        return float(high.cands[hi_i]), theta_low, float(res.min())
    return theta_low, float(high.cands[hi_i]), float(res.min())


def empirical_one_shot(criterion, samples: SampleSet, alpha_a: Optional[float] = None,
                       alpha_b: Optional[float] = None) -> DecisionPair:
    """Fair threshold pair minimizing the empirical weighted misclassification rate.

    Weights default to the sample shares. Constraints hold to the smallest
    residual the candidates allow; ties go to the smaller residual, then to
    the smaller theta_b.
    """
    c = Criterion.parse(criterion)
    if c not in _LEARNABLE:
        raise DomainError(f"{c} cannot be learned from samples")
    na, nb = samples.sizes
    if na == 0:
        raise EmptyGroupError("a")
    if nb == 0:
        raise EmptyGroupError("b")
    if alpha_a is None or alpha_b is None:
        alpha_a, alpha_b = na / (na + nb), nb / (na + nb)
    ca = _candidates(samples.features_a, samples.support_a)
    cb = _candidates(samples.features_b, samples.support_b)
    if c is Criterion.SIMPLE:
        ca = cb = np.union1d(ca, cb)
    sa = _stats(samples.features_a, samples.labels_a, ca)
    sb = _stats(samples.features_b, samples.labels_b, cb)
    if c is Criterion.EQLOS:
        ta, tb, res = _eqlos(sa, sb)
        return DecisionPair(ta, tb, c, res)
    if c is Criterion.SIMPLE:
        obj = alpha_a * sa.loss + alpha_b * sb.loss
        i = _pick(obj, np.zeros(len(cb)), cb)
        return DecisionPair(float(cb[i]), float(cb[i]), c, 0.0)
    rate_a, rate_b = (sa.fpr, sb.fpr) if c is Criterion.EQOPT else (sa.accept, sb.accept)
    idx, res = _best_match(rate_a, sa.loss, rate_b)
    obj = alpha_a * sa.loss[idx] + alpha_b * sb.loss
    i = _pick(obj, res, cb)
    return DecisionPair(float(ca[idx[i]]), float(cb[i]), c, float(res[i]))


def quality_experiment(ga: GroupSpec, gb: GroupSpec, criterion, model: DynamicsModel, horizon_T: int,
                       seed: int = 0, init: Optional[PopulationState] = None) -> tuple[Trajectory, Trajectory]:
    """Paired runs: population-optimal decisions versus decisions learned each round.

    Both runs start from the same state and run the full horizon. The learned
    run draws fresh users every round from the current counts; the dynamics
    always respond to the population losses of the chosen thresholds. The
    learned run stops early, with ``extinct_group`` set, once a group has no
    users left to sample.
    """
    if model.kind != "arrival_coupled":
        raise ModelError("the quality experiment uses arrival-coupled dynamics")
    c = Criterion.parse(criterion)
    if c not in _LEARNABLE:
        raise DomainError(f"{c} cannot be learned from samples")
    T = int(horizon_T)
    # no early stop: both runs cover the same rounds
    conv = ConvergenceSpec(window=T + 2, max_steps=T)
    bayes = simulate(ga, gb, c, model, init, T, conv)

    def learn(t: int, state: PopulationState) -> DecisionPair:
        return empirical_one_shot(c, draw_samples(ga, gb, state, (seed, t)))

    learned = simulate(ga, gb, c, model, init, T, conv, decide=learn)
    return bayes, learned
