"""Acceptance gate: one test per shipped guarantee.

Each test prints a single line ``criterion N [PASS|FAIL] detail`` and
asserts the stated tolerance.  Expected values are computed in-test
from exact references (closed forms, the grid oracle, ground-truth
generators), never hardcoded from observed runs.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, stats

from cutinsim.annealing import optimize
from cutinsim.behavior_model import (
    QUANTILE_KNOTS,
    empirical_cdf,
    fit_params,
    generate_situations,
    qq_points,
)
from cutinsim.cli import main
from cutinsim.cross_entropy import ce_optimize
from cutinsim.estimators import (
    cmc_estimate,
    grid_oracle,
    is_estimate,
    nominal_proposal,
    optimal_proposal,
    required_sample_size,
)
from cutinsim.policy import (
    CATEGORY_SIGNS,
    component_cdf,
    component_cdf_inverse,
    component_density,
)
from cutinsim.presets import (
    TOY_NOMINAL_PARAMS,
    demo_synthetic_spec,
    rig_sa_config,
    rig_scene,
    toy_ce_params,
    toy_sa_config,
    toy_scene,
)
from cutinsim.rng import stream
from cutinsim.synthetic import synthesize


def report(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num} [{'PASS' if ok else 'FAIL'}] {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# Shared toy-scene artifacts (exact oracle plus both optimized proposals)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def toy():
    scene = toy_scene()
    nominal = nominal_proposal(scene, TOY_NOMINAL_PARAMS)
    oracle = grid_oracle(scene, nominal)
    return scene, nominal, oracle


@pytest.fixture(scope="module")
def ce_proposal(toy):
    scene, nominal, _ = toy
    return ce_optimize(nominal, scene, toy_ce_params(), seed=0).proposal


@pytest.fixture(scope="module")
def br_proposal(toy):
    scene, _, _ = toy
    sa = optimize(toy_sa_config(seed=0), scene)
    return nominal_proposal(scene, sa.best_lambda)


def test_criterion_1_component_density_normalized_and_monotone():
    t0 = time.perf_counter()
    worst = 0.0
    grid = np.linspace(-1.0, 1.0, 1000)
    for lam in (-100.0, -10.0, -2.0, 0.0, 2.0, 10.0, 100.0):
        total, _ = integrate.quad(lambda u: component_density(u, lam),
                                  -1.0, 1.0, epsabs=1e-12, epsrel=1e-12)
        worst = max(worst, abs(total - 1.0))
        dens = component_density(grid, lam)
        if lam > 0:
            assert np.all(np.diff(dens) > 0)
        elif lam < 0:
            assert np.all(np.diff(dens) < 0)
        else:
            assert np.all(dens == 0.5)
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-9 and elapsed < 1.0,
           f"quadrature off by {worst:.2e} (tol 1e-9), monotone on "
           f"1000-point grid, {elapsed:.2f}s (limit 1s)")


def test_criterion_2_inverse_cdf_sampling_matches_cdf():
    t0 = time.perf_counter()
    worst = 0.0
    for i, lam in enumerate((-10.0, 0.0, 2.0)):
        p = stream(0, "acceptance-ks", i).random(10_000)
        samples = component_cdf_inverse(p, lam)
        ks = stats.kstest(samples, lambda u: component_cdf(u, lam)).statistic
        worst = max(worst, ks)
    elapsed = time.perf_counter() - t0
    report(2, worst < 0.02 and elapsed < 5.0,
           f"KS statistic {worst:.4f} over 10000 inverse-CDF samples "
           f"(tol 0.02), {elapsed:.2f}s (limit 5s)")


def test_criterion_3_estimators_agree_with_exact_grid_probability(
        toy, ce_proposal, br_proposal):
    t0 = time.perf_counter()
    scene, nominal, oracle = toy
    in_range = 5e-4 <= oracle.p_eps <= 5e-3

    cmc = cmc_estimate(nominal, 1_000_000, scene, seed=0)
    cmc_dev = abs(cmc.p_hat - oracle.p_eps)
    cmc_ok = cmc_dev <= 3.0 * cmc.ci95

    est_ce = is_estimate(nominal, ce_proposal, 100_000, scene, seed=1,
                         method="IS_CE")
    rel_ce = abs(est_ce.p_hat - oracle.p_eps) / oracle.p_eps

    est_br = is_estimate(nominal, br_proposal, 100_000, scene, seed=1,
                         method="IS_BR")
    rel_br = abs(est_br.p_hat - oracle.p_eps) / oracle.p_eps

    elapsed = time.perf_counter() - t0
    report(3, in_range and cmc_ok and rel_ce <= 0.05 and rel_br <= 0.05
           and elapsed < 300.0,
           f"p_eps={oracle.p_eps:.6e} in [5e-4, 5e-3]; CMC off by "
           f"{cmc_dev / cmc.ci95:.2f} ci95 (limit 3) at n=1e6; IS-CE rel err "
           f"{rel_ce:.3%}, IS-BR rel err {rel_br:.3%} (limit 5%) at n=1e5; "
           f"{elapsed:.1f}s (limit 300s)")


def test_criterion_4_optimal_proposal_has_zero_variance(toy):
    t0 = time.perf_counter()
    scene, nominal, oracle = toy
    opt = optimal_proposal(oracle, nominal)
    est = is_estimate(nominal, opt, 4096, scene, seed=2, method="IS_BR")
    elapsed = time.perf_counter() - t0
    exact = est.p_hat == oracle.p_eps and est.weight_variance == 0.0
    report(4, exact and elapsed < 10.0,
           f"n=4096 estimate {est.p_hat!r} equals exact p_eps bit for bit "
           f"with weight variance {est.weight_variance!r}, {elapsed:.2f}s "
           f"(limit 10s)")


def test_criterion_5_importance_sampling_variance_lifts(
        toy, ce_proposal, br_proposal):
    t0 = time.perf_counter()
    scene, nominal, oracle = toy
    var_cmc = oracle.p_eps * (1.0 - oracle.p_eps)

    est_ce = is_estimate(nominal, ce_proposal, 100_000, scene, seed=1,
                         method="IS_CE")
    est_br = is_estimate(nominal, br_proposal, 100_000, scene, seed=1,
                         method="IS_BR")
    lift_ce = var_cmc / est_ce.weight_variance
    lift_br = var_cmc / est_br.weight_variance

    wins = 0
    for s in range(100):
        a = is_estimate(nominal, br_proposal, 1000, scene, seed=10_000 + s,
                        method="IS_BR")
        b = is_estimate(nominal, ce_proposal, 1000, scene, seed=10_000 + s,
                        method="IS_CE")
        wins += a.weight_variance < b.weight_variance

    elapsed = time.perf_counter() - t0
    report(5, lift_ce >= 10.0 and lift_br >= 10.0 and wins >= 80
           and elapsed < 900.0,
           f"variance lift over CMC: CE {lift_ce:.1f}x, BR {lift_br:.1f}x "
           f"(both >= 10x); BR beat CE in {wins}/100 paired 1000-sample "
           f"trials (need >= 80); {elapsed:.1f}s (limit 900s)")


def test_criterion_6_required_sample_size_closed_form():
    n = required_sample_size(0.01, 0.001)
    exact = int(math.ceil(1.96 / (0.01 ** 2 * 0.001)))
    report(6, n == exact == 19_600_000,
           f"required_sample_size(0.01, 0.001) = {n} "
           f"(exact 1.96 / (rel_err^2 p) = 19600000)")


def test_criterion_7_annealing_finds_riskiest_category():
    t0 = time.perf_counter()
    scene = rig_scene()
    sa = optimize(rig_sa_config(seed=0), scene)

    # Exhaustive check: re-evaluate each category's best vector with a
    # larger rollout budget and confirm the winner.
    rates = {}
    for bid in CATEGORY_SIGNS:
        lam = sa.state.lambda_max_per_bid[bid]
        prop = nominal_proposal(scene, lam)
        rates[bid] = cmc_estimate(prop, 10_000, scene, seed=3).p_hat
    sweep_best = max(rates, key=rates.get)
    runner_up = max(v for b, v in rates.items() if b != sweep_best)

    elapsed = time.perf_counter() - t0
    report(7, sa.best_bid == "B1" and sweep_best == "B1"
           and rates["B1"] > runner_up and elapsed < 600.0,
           f"annealing best bid {sa.best_bid}; exhaustive 8-category sweep at "
           f"n=1e4 agrees (B1 rate {rates['B1']:.4f} vs next "
           f"{runner_up:.4f}); {elapsed:.1f}s (limit 600s)")


def test_criterion_8_fit_recovers_known_mixed_behavior():
    t0 = time.perf_counter()
    spec = demo_synthetic_spec(10_000)
    data = synthesize(spec, seed=7)
    fit = fit_params(data, spec.uspec, spec.gspec)

    knots = np.asarray(QUANTILE_KNOTS)
    spread_tol = 0.05
    worst_r = 1.0
    worst_gap = 0.0
    for index, band in enumerate(fit.bands()):
        band_obs = data.select_band(band)
        params = fit.params(band)
        for metric in ("ttc", "gap"):
            r = qq_points(band_obs, params, metric, 200,
                          uspec=spec.uspec, gspec=spec.gspec).pearson_r
            worst_r = min(worst_r, r)

        regen = generate_situations(
            params, 10_000, spec.bands[band].speed_dist, seed=99,
            uspec=spec.uspec, gspec=spec.gspec, stream_index=index)
        for metric in ("ttc", "gap"):
            def knot_quantiles(obs):
                vals = getattr(obs, metric)
                vals = vals[np.isfinite(vals)]
                if metric == "ttc":
                    vals = vals[vals <= 30.0]
                return empirical_cdf(vals).quantile(knots)

            q_orig = knot_quantiles(band_obs)
            q_regen = knot_quantiles(regen)
            spread = q_orig[-1] - q_orig[0]
            worst_gap = max(worst_gap,
                            float(np.max(np.abs(q_regen - q_orig)) / spread))

    elapsed = time.perf_counter() - t0
    report(8, worst_r >= 0.95 and worst_gap <= spread_tol and elapsed < 600.0,
           f"3 bands fitted from 1e4 samples each: worst QQ pearson r "
           f"{worst_r:.4f} (need >= 0.95); regenerated quantiles within "
           f"{worst_gap:.2%} of the empirical knot spread at every knot "
           f"(limit 5%); {elapsed:.1f}s (limit 600s)")


def test_criterion_9_cli_reruns_are_byte_identical(tmp_path):
    t0 = time.perf_counter()
    base = tmp_path

    def run(*args):
        assert main(list(args)) == 0

    def chain(tag: str) -> Path:
        root = base / tag
        run("synth", "--out", str(root / "synth"),
            "--set", "synth.bands.LOW.n=400",
            "--set", "synth.bands.MED.n=0", "--set", "synth.bands.HIGH.n=0")
        run("estimate", "--method", "cmc", "--n", "1500", "--samples",
            "--out", str(root / "cmc"))
        run("estimate", "--method", "is-br", "--n", "1000", "--lam=-2,-2,8",
            "--out", str(root / "isbr"))
        run("optimize", "--kind", "sa", "--out", str(root / "sa"),
            "--set", "sa.outer_iters=1", "--set", "sa.inner_iters=1",
            "--set", "sa.n_rollouts_per_eval=200")
        run("optimize", "--kind", "ce", "--out", str(root / "ce"),
            "--set", "ce.n_per_iter=500", "--set", "ce.max_iters=5")
        data = str(base / "a" / "synth" / "synthetic.csv")
        run("fit", "--data", data, "--out", str(root / "fit"),
            "--set", "fit.max_nfev=25")
        fit_art = str(base / "a" / "fit" / "fit.json")
        run("qq", "--data", data, "--fit", fit_art, "--n-points", "50",
            "--out", str(root / "qq"))
        run("generate", "--fit", fit_art, "--band", "LOW", "--n", "200",
            "--out", str(root / "gen"))
        run("trajectory-dump", "--speed", "22.0", "--v-lc", "12.0",
            "--gap", "0.4", "--out", str(root / "traj"))
        return root

    dir_a = chain("a")
    dir_b = chain("b")
    files_a = sorted(p.relative_to(dir_a) for p in dir_a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(dir_b) for p in dir_b.rglob("*") if p.is_file())
    assert files_a == files_b and files_a
    mismatched = [str(rel) for rel in files_a
                  if (dir_a / rel).read_bytes() != (dir_b / rel).read_bytes()]

    elapsed = time.perf_counter() - t0
    report(9, not mismatched,
           f"all 7 commands rerun byte-identical across {len(files_a)} "
           f"artifacts ({elapsed:.1f}s)"
           + (f"; MISMATCHED: {', '.join(mismatched)}" if mismatched else ""))
