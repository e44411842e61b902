"""Rare-event probability estimators over the discrete action measure.

Crude Monte Carlo and importance sampling share one sampling core: subject
speeds and action cells are drawn from a grid proposal, rolled out, and
weighted by the ratio of nominal to proposal probability mass.  Because
both measures live on the identical grid, the weights are plain mass
ratios and all estimators target the same exhaustively computable value,
the weighted sum of the event indicator over every (speed, cell) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AbsoluteContinuityError, DomainError
from .grid import sample_cells  # noqa: F401  (re-exported convenience)
from .policy import CutInAction, SubjectState
from .rng import stream
from .scenario import Scene, rollout_batch

__all__ = [
    "EstimateResult",
    "GridProposal",
    "OracleResult",
    "nominal_proposal",
    "grid_oracle",
    "optimal_proposal",
    "verify_absolute_continuity",
    "required_sample_size",
    "cmc_estimate",
    "is_estimate",
]

METHODS = ("CMC", "IS_CE", "IS_BR")


@dataclass(frozen=True)
class EstimateResult:
    """Outcome of one estimation run."""

    p_hat: float
    n: int
    weight_variance: float
    ci95: float
    seed: int
    method: str
    n_events: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (0.0 <= self.p_hat):
            raise DomainError(f"p_hat must be >= 0, got {self.p_hat!r}")
        if self.ci95 < 0.0:
            raise DomainError(f"ci95 must be >= 0, got {self.ci95!r}")

    def to_dict(self) -> dict:
        return {
            "p_hat": self.p_hat, "n": self.n,
            "weight_variance": self.weight_variance, "ci95": self.ci95,
            "seed": self.seed, "method": self.method, "n_events": self.n_events,
        }


@dataclass(frozen=True, eq=False)
class GridProposal:
    """Joint distribution over (subject speed, action cell) on a scene grid.

    ``masses[k]`` is the action distribution conditioned on speed k and sums
    to one; ``state_probs`` is the speed marginal.  ``weight_table`` may be
    supplied by constructors that know the importance weights analytically
    (the oracle-built optimal proposal); otherwise weights are computed as
    mass ratios against the nominal.
    """

    speeds: tuple[float, ...]
    state_probs: np.ndarray
    masses: np.ndarray
    descriptor: dict = field(default_factory=dict)
    weight_table: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.state_probs, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if masses.ndim != 3 or masses.shape[0] != len(self.speeds):
            raise DomainError("masses must have shape (n_speeds, n_v, n_gap)")
        if probs.shape != (len(self.speeds),):
            raise DomainError("state_probs must have one entry per speed")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise DomainError("state_probs must be a probability vector")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0):
            raise DomainError("masses must be finite and >= 0")
        sums = masses.sum(axis=(1, 2))
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise DomainError("each per-speed mass table must sum to 1")
        object.__setattr__(self, "state_probs", probs)
        object.__setattr__(self, "masses", masses)

    @property
    def n_states(self) -> int:
        return len(self.speeds)

    def joint(self) -> np.ndarray:
        """Joint probability of (speed, cell)."""
        return self.state_probs[:, None, None] * self.masses

    def _state_index(self, speed: float) -> int:
        for k, v in enumerate(self.speeds):
            if v == speed:
                return k
        raise DomainError(f"speed {speed!r} is not part of this proposal")

    def density(self, state: SubjectState, action: CutInAction, scene: Scene) -> float:
        """Probability mass of the action's cell conditioned on the state."""
        k = self._state_index(state.speed)
        grid = scene.builder.grid_for(self.masses, k)
        return grid.mass_at(action.v_lc, action.gap)

    def sampler(self, state: SubjectState, seed: int, scene: Scene) -> CutInAction:
        """Draw one action for the given state."""
        from .grid import sample_action

        k = self._state_index(state.speed)
        grid = scene.builder.grid_for(self.masses, k)
        return sample_action(grid, stream(seed, "proposal-action"))

    def sample_joint(self, n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized draw of n (state index, v cell, gap cell) triples."""
        cum_state = np.cumsum(self.state_probs)
        cum_state[-1] = 1.0
        k_idx = np.searchsorted(cum_state, stream(seed, "scene-speed").random(n),
                                side="right")
        u = stream(seed, "scene-cell").random(n)
        iv = np.empty(n, dtype=np.intp)
        ig = np.empty(n, dtype=np.intp)
        shape = self.masses.shape[1:]
        for k in np.unique(k_idx):
            sel = k_idx == k
            cum = np.cumsum(self.masses[k].ravel())
            cum[-1] = 1.0
            flat = np.searchsorted(cum, u[sel], side="right")
            iv[sel], ig[sel] = np.unravel_index(flat, shape)
        return k_idx, iv, ig


def nominal_proposal(scene: Scene, policy) -> GridProposal:
    """Grid proposal equal to a policy under the scene's speed distribution."""
    masses = scene.policy_masses(policy)
    dist = scene.scenario.subject_speeds
    descriptor = {"kind": "nominal", "policy": type(policy).__name__}
    return GridProposal(dist.values, dist.prob_array(), masses, descriptor)


@dataclass(frozen=True, eq=False)
class OracleResult:
    """Exhaustive evaluation of the event indicator over the whole grid."""

    p_eps: float
    event: np.ndarray      # shape (n_speeds, n_v, n_gap), boolean
    per_state: np.ndarray  # conditional event probability per speed

    def to_dict(self) -> dict:
        return {"p_eps": self.p_eps, "per_state": list(map(float, self.per_state))}


def grid_oracle(scene: Scene, nominal: GridProposal) -> OracleResult:
    """Exact p_eps for a deterministic follower by sweeping every cell.

    Requires sigma = 0: with follower noise the indicator of a cell is not
    a constant and no finite sweep can be exact.
    """
    if scene.scenario.follower.sigma != 0.0:
        raise DomainError("grid oracle requires a deterministic follower (sigma = 0)")
    gspec = scene.grid
    v_axis = gspec.v_axis()
    gap_axis = gspec.gap_axis()
    vv, gg = np.meshgrid(v_axis, gap_axis, indexing="ij")
    event = np.empty((nominal.n_states, gspec.n_v, gspec.n_gap), dtype=bool)
    for k, speed in enumerate(nominal.speeds):
        batch = rollout_batch(np.full(vv.size, speed), vv.ravel(), gg.ravel(), scene)
        event[k] = batch.event.reshape(vv.shape)
    joint = nominal.joint() * event
    per_state = (nominal.masses * event).sum(axis=(1, 2))
    return OracleResult(p_eps=float(joint.sum()), event=event, per_state=per_state)


def optimal_proposal(oracle: OracleResult, nominal: GridProposal) -> GridProposal:
    """Zero-variance proposal: nominal restricted to the event region.

    Both the state marginal and the per-state action masses are tilted so
    the joint equals I*p/p_eps; every sampleable point then carries the
    constant importance weight p_eps, recorded analytically in the weight
    table rather than recomputed by division.
    """
    tilted = nominal.joint() * oracle.event
    total = float(tilted.sum())
    if total <= 0.0:
        raise DomainError("event region carries no nominal mass; optimal proposal undefined")
    state_mass = tilted.sum(axis=(1, 2))
    state_probs = state_mass / total
    masses = np.zeros_like(tilted)
    for k in range(nominal.n_states):
        if state_mass[k] > 0.0:
            masses[k] = tilted[k] / state_mass[k]
        else:
            masses[k] = nominal.masses[k]  # unreachable state, kept normalized
    weight_table = np.where(oracle.event, total, np.inf)
    descriptor = {"kind": "optimal", "p_eps": total}
    return GridProposal(nominal.speeds, state_probs, masses, descriptor, weight_table)


def verify_absolute_continuity(nominal: GridProposal, proposal: GridProposal,
                               event: np.ndarray) -> None:
    """Raise when the proposal misses nominal-positive event cells."""
    bad = (nominal.joint() > 0) & event & (proposal.joint() == 0)
    if np.any(bad):
        raise AbsoluteContinuityError(
            f"proposal assigns zero mass to {int(bad.sum())} event cells "
            "with positive nominal probability"
        )


def required_sample_size(rel_err: float, p: float) -> int:
    """Crude Monte Carlo sample count for a target relative error."""
    if not (0.0 < rel_err <= 1.0):
        raise DomainError(f"rel_err must lie in (0, 1], got {rel_err!r}")
    if not (0.0 < p < 1.0):
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    return int(math.ceil(1.96 / (rel_err * rel_err * p)))


def _run_weighted(nominal: GridProposal, proposal: GridProposal, n: int,
                  scene: Scene, seed: int, sample_sink: list | None = None):
    """Sampling core shared by CMC and IS: returns (event, weights)."""
    if n < 1:
        raise DomainError(f"sample count must be >= 1, got {n!r}")
    if tuple(proposal.speeds) != tuple(nominal.speeds):
        raise DomainError("proposal and nominal must share the same speed support")
    k_idx, iv, ig = proposal.sample_joint(n, seed)
    speeds = np.asarray(proposal.speeds, dtype=float)[k_idx]
    v_lc = (iv + 0.5) * scene.grid.dv
    gap = (ig + 0.5) * scene.grid.dgap
    batch = rollout_batch(speeds, v_lc, gap, scene, seed=seed)

    if proposal is nominal:
        weights = np.ones(n)
    elif proposal.weight_table is not None:
        weights = proposal.weight_table[k_idx, iv, ig]
    else:
        q = proposal.joint()[k_idx, iv, ig]
        if np.any(q <= 0.0):
            raise AbsoluteContinuityError("proposal density is zero at a sampled point")
        weights = nominal.joint()[k_idx, iv, ig] / q
    if np.any(~np.isfinite(weights) & batch.event):
        raise AbsoluteContinuityError("proposal density is zero at a sampled event point")

    if sample_sink is not None:
        rec = np.zeros(n, dtype=[("speed", float), ("v_lc", float), ("gap", float),
                                 ("event", bool), ("weight", float)])
        rec["speed"], rec["v_lc"], rec["gap"] = speeds, v_lc, gap
        rec["event"], rec["weight"] = batch.event, np.where(batch.event, weights, 0.0)
        sample_sink.append(rec)
    return batch.event, weights


def _mean_and_variance(vals: np.ndarray) -> tuple[float, float]:
    """Correctly rounded mean and two-pass sample variance.

    fsum keeps the mean exact when all contributions are equal and the
    count is a power of two, which makes the zero-variance property of the
    optimal proposal hold to the bit, not just to rounding error.
    """
    n = len(vals)
    mean = math.fsum(vals) / n
    if n < 2:
        return mean, 0.0
    dev = vals - mean
    return mean, float(np.dot(dev, dev)) / (n - 1)


def cmc_estimate(nominal: GridProposal, n: int, scene: Scene, seed: int,
                 sample_sink: list | None = None) -> EstimateResult:
    """Crude Monte Carlo: sample the nominal itself, count events."""
    event, _ = _run_weighted(nominal, nominal, n, scene, seed, sample_sink)
    vals = np.where(event, 1.0, 0.0)
    p_hat, weight_variance = _mean_and_variance(vals)
    ci95 = 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / n)
    return EstimateResult(p_hat=p_hat, n=n, weight_variance=weight_variance,
                          ci95=ci95, seed=seed, method="CMC",
                          n_events=int(event.sum()))


def is_estimate(nominal: GridProposal, proposal: GridProposal, n: int, scene: Scene,
                seed: int, method: str = "IS_BR",
                sample_sink: list | None = None) -> EstimateResult:
    """Importance sampling with grid-mass likelihood ratios."""
    event, weights = _run_weighted(nominal, proposal, n, scene, seed, sample_sink)
    vals = np.where(event, weights, 0.0)
    p_hat, weight_variance = _mean_and_variance(vals)
    ci95 = 1.96 * math.sqrt(weight_variance / n)
    return EstimateResult(p_hat=p_hat, n=n, weight_variance=weight_variance,
                          ci95=ci95, seed=seed, method=method,
                          n_events=int(event.sum()))
