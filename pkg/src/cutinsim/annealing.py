"""Two-level simulated annealing over behavior categories and magnitudes.

The outer loop walks across the eight sign categories, favoring those with
high recorded rare-event rates; the inner loop redraws magnitudes inside
the current category.  Every candidate is scored by the empirical event
rate of its policy over a fixed rollout budget.  Records keep the best
accepted rate and vector per category; the chain itself may move downhill
under the Metropolis rule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .policy import (CATEGORY_SIGNS, LAMBDA_MAX, RationalityVector,
                     behavior_category_of, sample_lambda_in_category)
from .rng import stream
from .scenario import Scene, simulate_scene

__all__ = [
    "CATEGORIES",
    "SAConfig",
    "SATraceRow",
    "SAState",
    "SAResult",
    "init_lambda",
    "weighted_sample_bid",
    "sa_accept",
    "optimize",
]

logger = logging.getLogger(__name__)

CATEGORIES = tuple(CATEGORY_SIGNS)
KAPPA = 1e-3  # exploration floor: zero-rate categories stay reachable
ACCEPTANCE_RULES = ("metropolis", "literal")


@dataclass(frozen=True)
class SAConfig:
    """Budget, temperatures and sampling bounds for the annealing run."""

    outer_iters: int
    inner_iters: int
    n_rollouts_per_eval: int = 1000
    t_out_init: float = 0.01
    t_inn_init: float = 0.01
    cooling_factor: float = 0.95
    lambda_max: float = LAMBDA_MAX
    acceptance_rule: str = "metropolis"
    seed: int = 0

    def __post_init__(self):
        if self.outer_iters < 0 or self.inner_iters < 0:
            raise DomainError("iteration counts must be >= 0")
        if self.n_rollouts_per_eval < 1:
            raise DomainError("n_rollouts_per_eval must be >= 1")
        if self.t_out_init <= 0.0 or self.t_inn_init <= 0.0:
            raise DomainError("initial temperatures must be > 0")
        if not (0.0 < self.cooling_factor < 1.0):
            raise DomainError(
                f"cooling_factor must lie in (0, 1), got {self.cooling_factor!r}")
        if not (0.0 < self.lambda_max <= LAMBDA_MAX):
            raise DomainError(
                f"lambda_max must lie in (0, {LAMBDA_MAX}], got {self.lambda_max!r}")
        if self.acceptance_rule not in ACCEPTANCE_RULES:
            raise DomainError(
                f"acceptance_rule must be one of {ACCEPTANCE_RULES}, "
                f"got {self.acceptance_rule!r}")

    def to_dict(self) -> dict:
        return {
            "outer_iters": self.outer_iters, "inner_iters": self.inner_iters,
            "n_rollouts_per_eval": self.n_rollouts_per_eval,
            "t_out_init": self.t_out_init, "t_inn_init": self.t_inn_init,
            "cooling_factor": self.cooling_factor, "lambda_max": self.lambda_max,
            "acceptance_rule": self.acceptance_rule, "seed": self.seed,
        }


@dataclass(frozen=True)
class SATraceRow:
    """One policy evaluation in the annealing log."""

    iteration: int
    bid: str
    lam: tuple[float, float, float]
    rate: float
    accepted: bool
    temperature: float


@dataclass
class SAState:
    """Running records of the search: best rate and vector per category."""

    p_max_per_bid: dict[str, float]
    lambda_max_per_bid: dict[str, RationalityVector]
    best_bid: str
    trace: list[SATraceRow] = field(default_factory=list)
    exhausted: bool = False

    def refresh_best(self) -> None:
        self.best_bid = max(CATEGORIES, key=lambda b: self.p_max_per_bid[b])


@dataclass(frozen=True)
class SAResult:
    best_lambda: RationalityVector
    best_bid: str
    state: SAState


def _as_rng(rng_or_seed, tag: str) -> np.random.Generator:
    if isinstance(rng_or_seed, (int, np.integer)):
        return stream(int(rng_or_seed), tag)
    return rng_or_seed


def init_lambda(rng_or_seed, lambda_max: float = LAMBDA_MAX
                ) -> dict[str, RationalityVector]:
    """One starting rationality vector per behavior category."""
    rng = _as_rng(rng_or_seed, "sa-init")
    return {b: sample_lambda_in_category(b, rng, lambda_max) for b in CATEGORIES}


def weighted_sample_bid(rates, rng_or_seed) -> str:
    """Pick a category with probability proportional to rate + floor."""
    if isinstance(rates, dict):
        vals = np.array([rates[b] for b in CATEGORIES], dtype=float)
    else:
        vals = np.asarray(rates, dtype=float)
    if vals.shape != (len(CATEGORIES),):
        raise DomainError(f"need one rate per category, got shape {vals.shape}")
    if np.any(vals < 0):
        raise DomainError("rates must be >= 0")
    rng = _as_rng(rng_or_seed, "sa-bid")
    w = vals + KAPPA
    cum = np.cumsum(w / w.sum())
    cum[-1] = 1.0
    return CATEGORIES[int(np.searchsorted(cum, rng.random(), side="right"))]


def sa_accept(candidate_rate: float, incumbent_rate: float, temperature: float,
              rng_or_seed, rule: str = "metropolis") -> bool:
    """Metropolis acceptance; the literal rule is kept for comparison only."""
    if temperature <= 0.0:
        raise DomainError(f"temperature must be > 0, got {temperature!r}")
    if rule not in ACCEPTANCE_RULES:
        raise DomainError(f"unknown acceptance rule {rule!r}")
    if candidate_rate > incumbent_rate:
        return True
    rng = _as_rng(rng_or_seed, "sa-accept")
    u = rng.random()
    ratio = math.exp((candidate_rate - incumbent_rate) / temperature)
    if rule == "literal":
        return ratio < u
    return u < ratio


def optimize(cfg: SAConfig, scene: Scene) -> SAResult:
    """Run the annealing search and return the best: rate-maximizing vector.

    All eight categories are scored once up front; each outer iteration
    proposes a category by rate-weighted sampling, gates the switch with
    the acceptance rule at the outer temperature, then redraws magnitudes
    inside the category for the inner iterations.  Both temperatures cool
    geometrically (outer per outer iteration, inner per inner evaluation).
    """
    chain = stream(cfg.seed, "sa-chain")
    seed_cap = np.iinfo(np.int64).max

    def evaluate(lam: RationalityVector, counter: int) -> float:
        eval_seed = int(stream(cfg.seed, "sa-eval", counter).integers(seed_cap))
        return simulate_scene(lam, cfg.n_rollouts_per_eval, scene, eval_seed)

    lambdas = init_lambda(chain, cfg.lambda_max)
    rates: dict[str, float] = {}
    trace: list[SATraceRow] = []
    counter = 0
    for b in CATEGORIES:
        rates[b] = evaluate(lambdas[b], counter)
        trace.append(SATraceRow(counter, b, lambdas[b].as_tuple(), rates[b],
                                True, cfg.t_out_init))
        counter += 1

    state = SAState(p_max_per_bid=rates, lambda_max_per_bid=lambdas, best_bid="B1",
                    trace=trace)
    state.refresh_best()

    t_out = cfg.t_out_init
    t_inn = cfg.t_inn_init
    cur_bid = state.best_bid
    for _ in range(cfg.outer_iters):
        cand_bid = weighted_sample_bid(state.p_max_per_bid, chain)
        if sa_accept(state.p_max_per_bid[cand_bid], state.p_max_per_bid[cur_bid],
                     t_out, chain, cfg.acceptance_rule):
            cur_bid = cand_bid
            lam_cur = state.lambda_max_per_bid[cur_bid]
            rate_cur = state.p_max_per_bid[cur_bid]
            for _ in range(cfg.inner_iters):
                lam_new = sample_lambda_in_category(cur_bid, chain, cfg.lambda_max)
                rate_new = evaluate(lam_new, counter)
                accepted = sa_accept(rate_new, rate_cur, t_inn, chain,
                                     cfg.acceptance_rule)
                if accepted:
                    lam_cur, rate_cur = lam_new, rate_new
                    if rate_cur > state.p_max_per_bid[cur_bid]:
                        state.p_max_per_bid[cur_bid] = rate_cur
                        state.lambda_max_per_bid[cur_bid] = lam_cur
                trace.append(SATraceRow(counter, cur_bid, lam_new.as_tuple(),
                                        rate_new, accepted, t_inn))
                counter += 1
                t_inn *= cfg.cooling_factor
        t_out *= cfg.cooling_factor

    state.refresh_best()
    state.exhausted = True  # the budget is the only stopping rule
    logger.info("sa finished: best=%s rate=%g after %d evaluations",
                state.best_bid, state.p_max_per_bid[state.best_bid], counter)
    return SAResult(best_lambda=state.lambda_max_per_bid[state.best_bid],
                    best_bid=state.best_bid, state=state)
