"""Cross-entropy search for an importance-sampling proposal.

The proposal family is an independent product of normals over cut-in speed
and gap, truncated below at zero and above at the grid bounds, then
discretized onto the scene's action grid.  Multilevel iterations pull an
elite severity level (the smallest trajectory gaps seen so far) toward the
rare-event threshold and refit the family to the elites by likelihood-ratio
weighted moments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DomainError, StallError
from .estimators import GridProposal
from .rng import stream
from .scenario import Scene, rollout_batch

__all__ = ["CEParams", "CEIteration", "CEResult", "proposal_from_theta", "ce_optimize"]

logger = logging.getLogger(__name__)

STALL_LIMIT = 3
# Normal tails underflow to exactly zero a few hundred cells from the mean;
# a tiny uniform admixture keeps every grid cell sampleable so absolute
# continuity holds in floating point, not only on paper.
DEFENSIVE_MIX = 1e-12


@dataclass(frozen=True)
class CEParams:
    """Initial proposal parameters and optimizer settings."""

    v_mean: float
    v_std: float
    gap_mean: float
    gap_std: float
    elite_fraction: float = 0.1
    max_iters: int = 30
    smoothing: float = 0.7
    n_per_iter: int = 2000
    defensive_mix: float = 0.1

    def __post_init__(self):
        if self.v_std <= 0.0 or self.gap_std <= 0.0:
            raise DomainError("stddevs must be > 0")
        if not (0.0 < self.elite_fraction <= 0.5):
            raise DomainError(
                f"elite_fraction must lie in (0, 0.5], got {self.elite_fraction!r}")
        if not (0.0 < self.smoothing <= 1.0):
            raise DomainError(f"smoothing must lie in (0, 1], got {self.smoothing!r}")
        if self.max_iters < 0:
            raise DomainError(f"max_iters must be >= 0, got {self.max_iters!r}")
        if self.n_per_iter < 2:
            raise DomainError(f"n_per_iter must be >= 2, got {self.n_per_iter!r}")
        if not (0.0 <= self.defensive_mix <= 0.5):
            raise DomainError(
                f"defensive_mix must lie in [0, 0.5], got {self.defensive_mix!r}")

    def theta(self) -> np.ndarray:
        return np.array([self.v_mean, self.v_std, self.gap_mean, self.gap_std])

    def to_dict(self) -> dict:
        return {
            "v_mean": self.v_mean, "v_std": self.v_std,
            "gap_mean": self.gap_mean, "gap_std": self.gap_std,
            "elite_fraction": self.elite_fraction, "max_iters": self.max_iters,
            "smoothing": self.smoothing, "n_per_iter": self.n_per_iter,
            "defensive_mix": self.defensive_mix,
        }


@dataclass(frozen=True)
class CEIteration:
    """One row of the optimizer trace."""

    index: int
    level: float
    n_elite: int
    n_events: int
    theta: tuple[float, float, float, float]


@dataclass(frozen=True)
class CEResult:
    proposal: GridProposal
    trace: tuple[CEIteration, ...]
    converged: bool
    iterations: int


def _tn(mean: float, std: float, hi: float):
    a = (0.0 - mean) / std
    b = (hi - mean) / std
    return stats.truncnorm(a, b, loc=mean, scale=std)


def proposal_from_theta(theta, nominal: GridProposal, scene: Scene,
                        defensive_mix: float = 0.1) -> GridProposal:
    """Discretize the truncated-normal product onto the scene grid.

    The proposal reweights the action only; the subject-speed marginal is
    taken from the nominal so speed factors cancel in importance weights.
    A fitted normal can sit many standard deviations from the far edge of
    the event set, leaving cells it will never sample in practice; folding
    ``defensive_mix`` of the nominal back in bounds the importance weights
    by its reciprocal and keeps the estimator honest on those cells.
    """
    v_mean, v_std, gap_mean, gap_std = (float(x) for x in theta)
    gspec = scene.grid
    f_v = _tn(v_mean, v_std, gspec.v_max).pdf(gspec.v_axis())
    f_gap = _tn(gap_mean, gap_std, gspec.gap_max).pdf(gspec.gap_axis())
    table = np.outer(f_v, f_gap)
    table /= table.sum()
    table = (1.0 - DEFENSIVE_MIX) * table + DEFENSIVE_MIX / table.size
    masses = (1.0 - defensive_mix) * table[None, :, :] + defensive_mix * nominal.masses
    descriptor = {
        "kind": "ce", "v_mean": v_mean, "v_std": v_std,
        "gap_mean": gap_mean, "gap_std": gap_std,
        "defensive_mix": defensive_mix,
    }
    return GridProposal(nominal.speeds, nominal.state_probs, masses, descriptor)


def _weighted_moments(x: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    total = w.sum()
    mean = float((w * x).sum() / total)
    var = float((w * (x - mean) ** 2).sum() / total)
    return mean, np.sqrt(var)


def ce_optimize(nominal: GridProposal, scene: Scene, ce: CEParams,
                seed: int) -> CEResult:
    """Multilevel cross-entropy optimization of the proposal parameters.

    Per iteration: sample (speed, action cell) pairs from the current
    proposal, roll them out, rank by minimum trajectory gap, pull the elite
    level toward the rare-event gap threshold (levels never move away from
    it), and refit theta to the elites with smoothing.  Raises StallError
    after three consecutive iterations without level progress.
    """
    gspec = scene.grid
    threshold = scene.rare.gap_threshold
    theta = ce.theta()
    n = ce.n_per_iter
    n_elite_target = max(2, int(np.ceil(ce.elite_fraction * n)))
    speeds = np.asarray(nominal.speeds, dtype=float)

    trace: list[CEIteration] = []
    prev_level = np.inf
    stall = 0
    converged = False
    proposal = proposal_from_theta(theta, nominal, scene, ce.defensive_mix)

    for t in range(ce.max_iters):
        sub_seed = int(stream(seed, "ce-iter", t).integers(np.iinfo(np.int64).max))
        k_idx, iv, ig = proposal.sample_joint(n, sub_seed)
        v_lc = (iv + 0.5) * gspec.dv
        gap = (ig + 0.5) * gspec.dgap
        batch = rollout_batch(speeds[k_idx], v_lc, gap, scene, seed=sub_seed)
        # the masked minimum is the exact continuous relaxation of the
        # event: event <=> min_gap_moving <= gap_threshold
        severity = batch.min_gap_moving
        n_events = int(batch.event.sum())

        if n_events >= n_elite_target:
            elite = batch.event
            level = threshold
        else:
            order = np.sort(severity)
            level = float(order[n_elite_target - 1])
            level = max(level, threshold)
            level = min(level, prev_level)  # levels may only approach the target
            elite = severity <= level
        n_elite = int(elite.sum())

        if n_elite >= 2:
            w = nominal.masses[k_idx[elite], iv[elite], ig[elite]]
            w = w / proposal.masses[k_idx[elite], iv[elite], ig[elite]]
            m_v, s_v = _weighted_moments(v_lc[elite], w)
            m_g, s_g = _weighted_moments(gap[elite], w)
            fitted = np.array([m_v, s_v, m_g, s_g])
            theta = ce.smoothing * fitted + (1.0 - ce.smoothing) * theta
            theta[1] = max(theta[1], gspec.dv)    # keep the discretized
            theta[3] = max(theta[3], gspec.dgap)  # family off a single cell
            proposal = proposal_from_theta(theta, nominal, scene, ce.defensive_mix)

        trace.append(CEIteration(t, level, n_elite, n_events, tuple(theta)))
        logger.debug("ce iter %d: level=%g elites=%d events=%d", t, level,
                     n_elite, n_events)

        if level <= threshold:
            converged = True
            break
        if level < prev_level:
            stall = 0
        else:
            stall += 1
            if stall >= STALL_LIMIT:
                raise StallError(
                    f"no elite progress for {STALL_LIMIT} consecutive iterations",
                    diagnostics={
                        "iteration": t,
                        "level": level,
                        "levels": [it.level for it in trace],
                        "theta": tuple(theta),
                        "n_events": n_events,
                    },
                )
        prev_level = level

    return CEResult(proposal=proposal, trace=tuple(trace),
                    converged=converged, iterations=len(trace))
