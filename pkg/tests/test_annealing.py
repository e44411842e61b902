"""Tests for the simulated-annealing category search."""

import numpy as np
import pytest
from scipy import stats

from cutinsim.annealing import (CATEGORIES, SAConfig, init_lambda, optimize,
                                sa_accept, weighted_sample_bid)
from cutinsim.errors import DomainError
from cutinsim.estimators import grid_oracle, nominal_proposal
from cutinsim.policy import CATEGORY_SIGNS, RationalityVector, behavior_category_of
from cutinsim.rng import stream

from test_scenario import _crash_prone_scene

RIG_SA = dict(outer_iters=12, inner_iters=8, n_rollouts_per_eval=4000,
              t_out_init=0.02, t_inn_init=0.02, lambda_max=5.0, seed=0)


def test_sa_config_validation():
    with pytest.raises(DomainError):
        SAConfig(outer_iters=-1, inner_iters=1)
    with pytest.raises(DomainError):
        SAConfig(outer_iters=1, inner_iters=1, n_rollouts_per_eval=0)
    with pytest.raises(DomainError):
        SAConfig(outer_iters=1, inner_iters=1, t_out_init=0.0)
    with pytest.raises(DomainError):
        SAConfig(outer_iters=1, inner_iters=1, cooling_factor=1.0)
    with pytest.raises(DomainError):
        SAConfig(outer_iters=1, inner_iters=1, acceptance_rule="greedy")
    with pytest.raises(DomainError):
        SAConfig(outer_iters=1, inner_iters=1, lambda_max=0.0)


def test_init_lambda_covers_all_categories():
    lams = init_lambda(7, lambda_max=5.0)
    assert tuple(lams) == CATEGORIES
    for b, lam in lams.items():
        assert behavior_category_of(lam) == b
    assert init_lambda(7, lambda_max=5.0) == lams  # deterministic


def test_init_lambda_category_signs():
    lams = init_lambda(0, lambda_max=5.0)
    signs = tuple(np.sign(lams["B3"].as_tuple()))
    assert signs == tuple(map(float, CATEGORY_SIGNS["B3"]))


def test_weighted_sample_bid_dominant_category():
    rates = {b: 0.0 for b in CATEGORIES}
    rates["B4"] = 1.0
    rng = stream(3, "test-bid")
    n = 10_000
    hits = sum(weighted_sample_bid(rates, rng) == "B4" for _ in range(n))
    # (1 + kappa) / (1 + 8 kappa) with kappa = 1e-3
    expected = 1.001 / 1.008
    assert abs(hits / n - expected) < 0.01


@pytest.mark.parametrize("rate", [0.25, 0.0])
def test_weighted_sample_bid_uniform(rate):
    rates = {b: rate for b in CATEGORIES}
    rng = stream(11, "test-bid-uniform")
    n = 10_000
    counts = {b: 0 for b in CATEGORIES}
    for _ in range(n):
        counts[weighted_sample_bid(rates, rng)] += 1
    chi2 = stats.chisquare(list(counts.values()))
    assert chi2.pvalue > 1e-3


def test_weighted_sample_bid_validation():
    with pytest.raises(DomainError):
        weighted_sample_bid([0.1] * 7, 0)
    with pytest.raises(DomainError):
        weighted_sample_bid([-0.1] + [0.1] * 7, 0)


def test_sa_accept_improvement_always():
    rng = stream(0, "test-accept")
    assert all(sa_accept(0.5, 0.4, 1e-9, rng) for _ in range(100))


def test_sa_accept_metropolis_frequency():
    # candidate worse by 0.1 at T = 0.1: acceptance probability e^{-1}
    rng = stream(5, "test-accept-freq")
    n = 10_000
    hits = sum(sa_accept(0.3, 0.4, 0.1, rng) for _ in range(n))
    assert abs(hits / n - np.exp(-1.0)) < 0.02


def test_sa_accept_freezes_at_low_temperature():
    rng = stream(9, "test-accept-cold")
    assert not any(sa_accept(0.3, 0.4, 1e-6, rng) for _ in range(1000))


def test_sa_accept_literal_variant():
    rng = stream(2, "test-accept-lit")
    # improvements still pass, equal rates are always rejected
    assert sa_accept(0.5, 0.4, 0.1, rng, rule="literal")
    assert not any(sa_accept(0.4, 0.4, 0.1, rng, rule="literal")
                   for _ in range(100))
    with pytest.raises(DomainError):
        sa_accept(0.5, 0.4, 0.1, rng, rule="greedy")
    with pytest.raises(DomainError):
        sa_accept(0.5, 0.4, 0.0, rng)


@pytest.fixture(scope="module")
def rig_result():
    scene = _crash_prone_scene()
    return scene, optimize(SAConfig(**RIG_SA), scene)


def test_optimize_finds_risk_seeking_category(rig_result):
    _, res = rig_result
    assert res.best_bid == "B1"
    assert behavior_category_of(res.best_lambda) == "B1"


def test_optimize_trace_is_category_consistent(rig_result):
    _, res = rig_result
    assert len(res.state.trace) >= 8
    for row in res.state.trace:
        assert behavior_category_of(RationalityVector(*row.lam)) == row.bid
        assert 0.0 <= row.rate <= 1.0
    for b, lam in res.state.lambda_max_per_bid.items():
        assert behavior_category_of(lam) == b


def test_optimize_final_beats_initial(rig_result):
    _, res = rig_result
    initial_best = max(row.rate for row in res.state.trace[:8])
    final_best = res.state.p_max_per_bid[res.best_bid]
    assert final_best >= initial_best
    assert res.state.exhausted


def test_optimize_records_are_per_category_maxima(rig_result):
    _, res = rig_result
    for b in CATEGORIES:
        accepted = [row.rate for row in res.state.trace
                    if row.bid == b and row.accepted]
        assert res.state.p_max_per_bid[b] == max(accepted, default=0.0)


def test_optimize_zero_inner_budget_returns_initial_best():
    scene = _crash_prone_scene()
    cfg = SAConfig(outer_iters=5, inner_iters=0, n_rollouts_per_eval=2000, seed=1)
    res = optimize(cfg, scene)
    assert len(res.state.trace) == 8
    rates = {row.bid: row.rate for row in res.state.trace}
    assert res.state.p_max_per_bid == rates
    assert res.best_bid == max(rates, key=rates.get)


def test_optimize_trace_reproducible():
    scene = _crash_prone_scene()
    cfg = SAConfig(outer_iters=4, inner_iters=3, n_rollouts_per_eval=1000, seed=12)
    a = optimize(cfg, scene)
    b = optimize(cfg, scene)
    assert a.state.trace == b.state.trace
    assert a.best_lambda == b.best_lambda


def test_optimized_lambda_beats_random_search_median(rig_result):
    scene, res = rig_result
    oracle = grid_oracle(scene, nominal_proposal(scene, res.best_lambda))

    def exact_rate(lam):
        masses = scene.policy_masses(lam)
        return float((masses[0] * oracle.event[0]).sum())

    rng = stream(21, "test-random-lams")
    draws = rng.uniform(-5.0, 5.0, size=(50, 3))
    rates = [exact_rate(RationalityVector(*row)) for row in draws]
    assert exact_rate(res.best_lambda) >= np.median(rates)
