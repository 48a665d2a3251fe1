import math

import numpy as np
import pytest

from fairdyn.dynamics import DynamicsModel, RetentionFn
from fairdyn.empirics import SampleSet, draw_samples, empirical_one_shot, empirical_rates, quality_experiment
from fairdyn.errors import DomainError, EmptyGroupError, ModelError
from fairdyn.fairsolve import Criterion, one_shot
from fairdyn.popmodel import PopulationState, expected_loss

from fairdyn.cli import load_config, resolve_config

from conftest import uniform_groups

LEARNABLE = ["Simple", "EqOpt", "StatPar", "EqLos"]


def _coupled(beta=10.0):
    return DynamicsModel("arrival_coupled", RetentionFn("one_minus_x_squared"), beta, beta)


def test_label_fraction_concentrates(uniform):
    ga, gb = uniform
    s = draw_samples(ga, gb, PopulationState(1e5, 10), seed=3)
    frac0 = float(np.mean(s.labels_a == 0))
    sigma = math.sqrt(0.8 * 0.2 / 1e5)
    assert abs(frac0 - 0.8) <= 3 * sigma


def test_draw_is_deterministic(uniform):
    ga, gb = uniform
    st = PopulationState(500, 700)
    s1, s2 = draw_samples(ga, gb, st, 11), draw_samples(ga, gb, st, 11)
    for f in ("features_a", "labels_a", "features_b", "labels_b"):
        assert np.array_equal(getattr(s1, f), getattr(s2, f))
    s3 = draw_samples(ga, gb, st, 12)
    assert not np.array_equal(s1.features_a, s3.features_a)


def test_zero_count_gives_empty_group(uniform):
    ga, gb = uniform
    s = draw_samples(ga, gb, PopulationState(0, 40), 0)
    assert s.sizes == (0, 40)
    with pytest.raises(EmptyGroupError):
        empirical_one_shot("Simple", s)
    with pytest.raises(EmptyGroupError):
        empirical_one_shot("Simple", draw_samples(ga, gb, PopulationState(40, 0), 0))


def test_sample_counts_are_rounded(uniform):
    ga, gb = uniform
    assert draw_samples(ga, gb, PopulationState(10.4, 10.6), 0).sizes == (10, 11)


def test_negative_counts_rejected(uniform):
    ga, gb = uniform
    bad = PopulationState.__new__(PopulationState)
    object.__setattr__(bad, "n_a", -1.0)
    object.__setattr__(bad, "n_b", 3.0)
    with pytest.raises(DomainError):
        draw_samples(ga, gb, bad, 0)


@pytest.mark.parametrize("which", ["uniform", "truncnormal"])
def test_features_inside_subgroup_supports(which, request):
    ga, gb = request.getfixturevalue(which)
    s = draw_samples(ga, gb, PopulationState(3000, 3000), 5)
    for x, y, g in ((s.features_a, s.labels_a, ga), (s.features_b, s.labels_b, gb)):
        for lab, f in ((0, g.f0), (1, g.f1)):
            xs = x[y == lab]
            assert xs.size > 0
            assert xs.min() >= f.support_lo and xs.max() <= f.support_hi


@pytest.mark.parametrize("crit", LEARNABLE)
def test_single_sample_per_group(crit, uniform):
    ga, gb = uniform
    s = draw_samples(ga, gb, PopulationState(1, 1), 2)
    p = empirical_one_shot(crit, s)
    assert math.isfinite(p.theta_a) and math.isfinite(p.theta_b)


def test_identical_samples_simple_shares_threshold():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 10, 50)
    y = (x + rng.normal(0, 2, 50) > 5).astype(np.int8)
    s = SampleSet(x, y, x.copy(), y.copy(), (0.0, 10.0), (0.0, 10.0))
    p = empirical_one_shot("Simple", s, 0.5, 0.5)
    assert p.theta_a == p.theta_b


@pytest.mark.parametrize("crit", ["EqOpt", "StatPar", "EqLos"])
def test_identical_samples_constrained_residual_zero(crit):
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 10, 80)
    y = (x > rng.uniform(3, 7, 80)).astype(np.int8)
    s = SampleSet(x, y, x.copy(), y.copy(), (0.0, 10.0), (0.0, 10.0))
    assert empirical_one_shot(crit, s, 0.5, 0.5).residual == 0.0


def test_unlearnable_criterion_rejected(uniform):
    ga, gb = uniform
    s = draw_samples(ga, gb, PopulationState(10, 10), 0)
    with pytest.raises(DomainError):
        empirical_one_shot("MinMax", s)


def test_statpar_large_sample_near_table_pair(uniform):
    ga, gb = uniform
    n = 10**6
    s = draw_samples(ga, gb, PopulationState(0.3 * n, 0.7 * n), 7)
    p = empirical_one_shot("StatPar", s)
    assert abs(p.theta_a - (-1.02)) < 0.2
    assert abs(p.theta_b - 17.0) < 0.2


def test_empirical_rates_hand_count():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([0, 1, 0, 1])
    r = empirical_rates(x, y, 2.5)
    # accept 3 and 4; label-0 user 3 accepted, label-1 user 2 rejected
    assert r["loss"] == 0.5
    assert r["fpr"] == 0.5
    assert r["accept"] == 0.5
    with pytest.raises(EmptyGroupError):
        empirical_rates(np.array([]), np.array([]), 0.0)


@pytest.mark.parametrize("crit", LEARNABLE)
def test_consistency_with_population_solver(crit, uniform):
    ga, gb = uniform
    ref = one_shot(crit, ga, gb, 0.3, 0.7)
    means = []
    for n in (10**3, 10**4, 10**5, 10**6):
        d = []
        for s in range(10):
            p = empirical_one_shot(crit, draw_samples(ga, gb, PopulationState(0.3 * n, 0.7 * n), (s, n)))
            d.append(max(abs(p.theta_a - ref.theta_a), abs(p.theta_b - ref.theta_b)))
        means.append(float(np.mean(d)))
    assert all(b < a for a, b in zip(means, means[1:])), means
    assert means[-1] < 0.05, means


@pytest.mark.parametrize("crit", LEARNABLE)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_empirical_losses_near_population(crit, seed, uniform):
    ga, gb = uniform
    s = draw_samples(ga, gb, PopulationState(4e4, 6e4), seed)
    p = empirical_one_shot(crit, s)
    for x, y, g, th in ((s.features_a, s.labels_a, ga, p.theta_a), (s.features_b, s.labels_b, gb, p.theta_b)):
        emp = empirical_rates(x, y, th)["loss"]
        pop = float(expected_loss(g, th))
        assert abs(emp - pop) <= 3 * math.sqrt(max(pop * (1 - pop), 1e-12) / len(x)) + 1.0 / len(x)


def test_quality_zero_horizon():
    ga, gb = uniform_groups()
    bayes, learned = quality_experiment(ga, gb, "Simple", _coupled(), 0)
    assert len(bayes) == 1 and len(learned) == 1
    assert bayes.rows[0][5] == learned.rows[0][5]


def test_quality_deterministic():
    ga, gb = uniform_groups()
    r1 = quality_experiment(ga, gb, "EqOpt", _coupled(), 15, seed=4)
    r2 = quality_experiment(ga, gb, "EqOpt", _coupled(), 15, seed=4)
    assert r1[0].rows == r2[0].rows and r1[1].rows == r2[1].rows


def test_quality_dynamics_use_population_losses():
    ga, gb = uniform_groups()
    bayes, learned = quality_experiment(ga, gb, "StatPar", _coupled(), 10, seed=1)
    assert len(bayes) == len(learned) == 11
    # losses fed to the dynamics are population losses at the chosen pair
    for r in learned.rows:
        assert r[3] == pytest.approx(float(expected_loss(ga, r[1])), abs=1e-12)
        assert r[4] == pytest.approx(float(expected_loss(gb, r[2])), abs=1e-12)


def test_quality_extinction_marker():
    ga, gb = uniform_groups()
    bayes, learned = quality_experiment(ga, gb, "Simple", _coupled(), 10, init=PopulationState(0.3, 20))
    assert learned.stop_reason == "extinct"
    assert learned.extinct_group == "a"
    assert len(bayes) == 11


def test_quality_needs_arrival_coupled():
    ga, gb = uniform_groups()
    acc = DynamicsModel("accuracy", RetentionFn("one_minus_x"), 10, 10)
    with pytest.raises(ModelError):
        quality_experiment(ga, gb, "Simple", acc, 5)


def test_quality_unlearnable_criterion():
    ga, gb = uniform_groups()
    with pytest.raises(DomainError):
        quality_experiment(ga, gb, Criterion.MINMAX, _coupled(), 5)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_learned_run_widens_disparity(seed):
    cfg = load_config(resolve_config("quality.cfg"))
    burn = cfg.burn_in
    for c in (Criterion.SIMPLE, Criterion.EQOPT, Criterion.STATPAR):
        bayes, learned = quality_experiment(cfg.group_a, cfg.group_b, c, cfg.model, cfg.horizon_T, seed, cfg.init)
        gap = learned.column("alpha_a")[burn:] - bayes.column("alpha_a")[burn:]
        assert gap.max() <= 0.0, (c, gap.max())
