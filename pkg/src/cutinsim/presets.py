"""Calibrated ready-made scenes and settings for the CLI and experiments.

Two scenes are shipped.  The estimation showcase scene has a deterministic
follower and thresholds placed so the near-crash probability sits in the
low per-mille range and can be summed exactly over the grid, which lets
every estimator be checked against an exact value.  The risk-probe scene
is rigged so that events require simultaneously small gaps, small
time-to-collision and high cut-in speed, making exactly one behavior
category the most dangerous.
"""

from __future__ import annotations

from .annealing import SAConfig
from .cross_entropy import CEParams
from .grid import GridSpec
from .policy import MixedPolicyParams, UtilitySpec
from .scenario import (
    DiscreteSpeedDist,
    KraussParams,
    RareEventSpec,
    Scene,
    ScenarioConfig,
)
from .synthetic import BandSpec, SyntheticDatasetSpec

__all__ = [
    "TOY_NOMINAL_PARAMS",
    "toy_scene",
    "toy_ce_params",
    "toy_sa_config",
    "rig_scene",
    "rig_sa_config",
    "demo_synthetic_spec",
]

# Mostly progress-violating population: nearly all mass cuts in far below
# the desired speed, so fast close-gap insertions are rare but reachable.
TOY_NOMINAL_PARAMS = MixedPolicyParams(
    lambda_plus=(6.0, 6.0, 3.0),
    lambda_minus=(-2.0, -2.0, -8.0),
    alpha=(0.95, 0.95, 0.05),
)


def toy_scene(n_cells: int = 64) -> Scene:
    """Deterministic-follower scene with an exactly summable event rate.

    Geometry constraints behind the numbers: every subject speed exceeds
    the grid's top cut-in speed, so each sampled action closes on the
    subject and no hairline pseudo-events appear at the speed boundary;
    and the first gap column's center (gap_max / n_gap / 2) stays above
    the contact threshold, so no column is an instant-contact artifact.
    The resulting rare-event probability is about 4.4e-3.
    """
    cfg = ScenarioConfig(
        dt=0.5, horizon=4.0, lane_change_duration=1.0, v_limit=20.0,
        vehicle_length=4.5,
        follower=KraussParams(accel_max=2.0, decel_max=2.0, tau_react=0.3,
                              sigma=0.0),
        subject_speeds=DiscreteSpeedDist((21.0, 22.0, 23.0, 24.0),
                                         (0.3, 0.3, 0.25, 0.15)),
    )
    uspec = UtilitySpec(gap_star=4.0, ttc_star=3.0, v_star=16.0)
    gspec = GridSpec(v_max=20.0, gap_max=1.5, n_v=n_cells, n_gap=n_cells)
    return Scene(cfg, uspec, gspec, RareEventSpec(0.01, 18.0))


def toy_ce_params() -> CEParams:
    """Diffuse mid-grid start for the level-based proposal optimizer.

    The elite fraction stays below the event share a broad proposal
    already sees, so the severity level reaches the contact threshold in
    one step instead of creeping through intermediate levels.
    """
    return CEParams(v_mean=10.0, v_std=6.0, gap_mean=0.7, gap_std=0.5,
                    elite_fraction=0.01, n_per_iter=4000)


def toy_sa_config(seed: int = 0) -> SAConfig:
    """Annealing budget for the showcase scene.

    The rate plateau of this scene needs a strongly progress-seeking
    vector, hence the wide per-component search box.
    """
    return SAConfig(outer_iters=12, inner_iters=8, n_rollouts_per_eval=4000,
                    t_out_init=0.02, t_inn_init=0.02, lambda_max=40.0,
                    seed=seed)


def rig_scene() -> Scene:
    """Scene whose events require small gap, small ttc and high speed.

    The subject enters above the road limit, so only cut-ins that are
    simultaneously close, closing fast and nearly as quick as the subject
    produce a contact while the subject is still moving quickly.
    """
    cfg = ScenarioConfig(
        dt=0.5, horizon=3.5, lane_change_duration=1.0, v_limit=20.0,
        vehicle_length=4.5,
        follower=KraussParams(accel_max=2.0, decel_max=2.0, tau_react=0.3,
                              sigma=0.0),
        subject_speeds=DiscreteSpeedDist.point(21.8),
    )
    uspec = UtilitySpec(gap_star=4.0, ttc_star=3.0, v_star=15.3)
    gspec = GridSpec(v_max=22.5, gap_max=10.0, n_v=64, n_gap=64)
    return Scene(cfg, uspec, gspec, RareEventSpec(0.01, 17.0))


def rig_sa_config(seed: int = 0) -> SAConfig:
    """Annealing budget that reliably identifies the risky category."""
    return SAConfig(outer_iters=12, inner_iters=8, n_rollouts_per_eval=4000,
                    t_out_init=0.02, t_inn_init=0.02, lambda_max=5.0,
                    seed=seed)


def demo_synthetic_spec(n_per_band: int = 10_000) -> SyntheticDatasetSpec:
    """Three-band ground truth for exercising the fitting pipeline."""
    truth = {
        "LOW": MixedPolicyParams((3.0, 4.0, 2.0), (-2.0, -3.0, -4.0),
                                 (0.7, 0.6, 0.4)),
        "MED": MixedPolicyParams((5.0, 3.0, 4.0), (-3.0, -2.0, -2.0),
                                 (0.5, 0.7, 0.6)),
        "HIGH": MixedPolicyParams((4.0, 5.0, 3.0), (-4.0, -2.0, -3.0),
                                  (0.3, 0.4, 0.8)),
    }
    dists = {
        "LOW": DiscreteSpeedDist((8.0, 10.0, 12.0, 14.0),
                                 (0.2, 0.3, 0.3, 0.2)),
        "MED": DiscreteSpeedDist((16.0, 18.0, 20.0, 22.0, 24.0),
                                 (0.15, 0.2, 0.3, 0.2, 0.15)),
        "HIGH": DiscreteSpeedDist((26.0, 28.0, 30.0, 32.0),
                                  (0.25, 0.35, 0.25, 0.15)),
    }
    bands = {b: BandSpec(truth[b], dists[b], n_per_band) for b in truth}
    return SyntheticDatasetSpec(bands)
