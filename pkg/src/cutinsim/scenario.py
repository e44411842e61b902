"""Cut-in scenario rollout with a Krauss car-following subject vehicle.

A rollout covers two phases.  During the lane change (duration
``lane_change_duration``) the subject holds its speed while the target
vehicle, still in the adjacent lane, ramps its speed linearly from the
subject's speed to the chosen cut-in speed; its start position is solved
backward so that the bumper-to-bumper gap at the moment of crossing equals
the chosen cut-in gap exactly.  From the crossing on, the target holds its
cut-in speed and the subject reacts with the stochastic Krauss model.

A rollout is a rare event (near crash) when the gap drops to the threshold
while the subject is still moving faster than the stopped-speed cutoff.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, InfeasibleScenarioError
from .grid import GridSpec, PolicyGridBuilder
from .policy import (
    CutInAction,
    MixedPolicyParams,
    RationalityVector,
    SubjectState,
    UtilitySpec,
)
from .rng import stream

__all__ = [
    "KraussParams",
    "DiscreteSpeedDist",
    "ScenarioConfig",
    "RareEventSpec",
    "Scene",
    "VehicleState",
    "Trajectory",
    "BatchRollout",
    "krauss_safe_speed",
    "step_follower",
    "rollout",
    "rollout_batch",
    "is_rare_event",
    "simulate_scene",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KraussParams:
    """Parameters of the Krauss follower model."""

    accel_max: float = 2.0   # maximum acceleration [m/s^2]
    decel_max: float = 2.0   # comfortable deceleration entering the safe speed [m/s^2]
    tau_react: float = 1.0   # driver reaction time [s]
    sigma: float = 0.2       # imperfection (random slowdown) factor in [0, 1]

    def __post_init__(self):
        for name in ("accel_max", "decel_max", "tau_react"):
            val = getattr(self, name)
            if not math.isfinite(val) or val <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {val!r}")
        if not (0.0 <= self.sigma <= 1.0):
            raise DomainError(f"sigma must lie in [0, 1], got {self.sigma!r}")

    def to_dict(self) -> dict:
        return {"accel_max": self.accel_max, "decel_max": self.decel_max,
                "tau_react": self.tau_react, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "KraussParams":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class DiscreteSpeedDist:
    """Discrete distribution over subject speeds (grid points + weights)."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        pr = tuple(float(p) for p in self.probs)
        if len(vals) == 0 or len(vals) != len(pr):
            raise DomainError("speed distribution needs matching non-empty values/probs")
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise DomainError("speed values must be finite and >= 0")
        if len(set(vals)) != len(vals):
            raise DomainError("speed values must be distinct")
        if any(p < 0 or not math.isfinite(p) for p in pr):
            raise DomainError("speed probabilities must be finite and >= 0")
        total = sum(pr)
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"speed probabilities must sum to 1 within 1e-9, got {total!r}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", pr)

    @classmethod
    def uniform(cls, values) -> "DiscreteSpeedDist":
        values = tuple(values)
        return cls(values, tuple(1.0 / len(values) for _ in values))

    @classmethod
    def point(cls, value: float) -> "DiscreteSpeedDist":
        return cls((value,), (1.0,))

    def prob_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        cum = np.cumsum(self.prob_array())
        cum[-1] = 1.0
        return np.searchsorted(cum, rng.random(n), side="right")

    def to_dict(self) -> dict:
        return {"values": list(self.values), "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteSpeedDist":
        return cls(tuple(d["values"]), tuple(d["probs"]))


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical configuration of the cut-in scenario."""

    dt: float = 0.1                    # integration step [s]
    horizon: float = 5.0               # total rollout duration [s]
    lane_change_duration: float = 2.0  # time from decision to lane crossing [s]
    v_limit: float = 20.0              # road speed limit [m/s]
    vehicle_length: float = 4.5        # bumper-to-bumper offset [m]
    follower: KraussParams = field(default_factory=KraussParams)
    subject_speeds: DiscreteSpeedDist = field(
        default_factory=lambda: DiscreteSpeedDist.point(20.0)
    )

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be finite and > 0, got {self.dt!r}")
        if not (math.isfinite(self.v_limit) and self.v_limit > 0):
            raise DomainError(f"v_limit must be finite and > 0, got {self.v_limit!r}")
        if not (math.isfinite(self.vehicle_length) and self.vehicle_length > 0):
            raise DomainError(f"vehicle_length must be > 0, got {self.vehicle_length!r}")
        if not (self.lane_change_duration > 0):
            raise DomainError("lane_change_duration must be > 0")
        if not (self.horizon > self.lane_change_duration):
            raise DomainError("horizon must exceed lane_change_duration")
        if self.ramp_steps < 1:
            raise DomainError("lane_change_duration must cover at least one step")
        top = 1.5 * self.v_limit
        if any(v > top + 1e-9 for v in self.subject_speeds.values):
            raise DomainError(f"subject speeds must not exceed 1.5 * v_limit = {top}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def ramp_steps(self) -> int:
        return int(round(self.lane_change_duration / self.dt))

    def to_dict(self) -> dict:
        return {
            "dt": self.dt, "horizon": self.horizon,
            "lane_change_duration": self.lane_change_duration,
            "v_limit": self.v_limit, "vehicle_length": self.vehicle_length,
            "follower": self.follower.to_dict(),
            "subject_speeds": self.subject_speeds.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "follower" in d:
            d["follower"] = KraussParams.from_dict(d["follower"])
        if "subject_speeds" in d:
            d["subject_speeds"] = DiscreteSpeedDist.from_dict(d["subject_speeds"])
        return cls(**d)


@dataclass(frozen=True)
class RareEventSpec:
    """Definition of the near-crash event."""

    gap_threshold: float = 0.01  # gap at or below this counts as contact [m]
    stopped_speed: float = 0.1   # subject at or below this speed counts as stopped [m/s]

    def __post_init__(self):
        if not (math.isfinite(self.gap_threshold) and self.gap_threshold > 0):
            raise DomainError("gap_threshold must be finite and > 0")
        if not (math.isfinite(self.stopped_speed) and self.stopped_speed >= 0):
            raise DomainError("stopped_speed must be finite and >= 0")

    def to_dict(self) -> dict:
        return {"gap_threshold": self.gap_threshold, "stopped_speed": self.stopped_speed}

    @classmethod
    def from_dict(cls, d: dict) -> "RareEventSpec":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class Scene:
    """Everything needed to roll out and weigh cut-in behaviors."""

    scenario: ScenarioConfig
    utility: UtilitySpec
    grid: GridSpec
    rare: RareEventSpec = field(default_factory=RareEventSpec)

    @cached_property
    def builder(self) -> PolicyGridBuilder:
        return PolicyGridBuilder(self.grid, self.utility, self.scenario.subject_speeds.values)

    def policy_masses(self, policy) -> np.ndarray:
        """Per-speed action masses for a pure or mixed policy."""
        if isinstance(policy, RationalityVector):
            return self.builder.mixture_masses(policy)
        if isinstance(policy, MixedPolicyParams):
            return self.builder.mixed_masses(policy)
        raise DomainError(f"unsupported policy type {type(policy).__name__}")


@dataclass(frozen=True)
class VehicleState:
    """Longitudinal state of one vehicle."""

    pos: float
    vel: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time series of one rollout; gap_series is bumper to bumper."""

    times: np.ndarray
    subject_pos: np.ndarray
    subject_vel: np.ndarray
    target_pos: np.ndarray
    target_vel: np.ndarray
    gap_series: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True, eq=False)
class BatchRollout:
    """Aggregate statistics of a batch of rollouts."""

    min_gap: np.ndarray         # minimum gap over each trajectory (+inf if infeasible)
    min_gap_moving: np.ndarray  # minimum gap over steps where the subject is moving
    event: np.ndarray           # rare-event indicator per rollout
    infeasible: np.ndarray      # geometry could not be constructed

    @property
    def n(self) -> int:
        return len(self.event)


def krauss_safe_speed(leader: VehicleState, follower: VehicleState, gap: float,
                      params: KraussParams) -> float:
    """Maximum speed at which the follower can still react safely."""
    if not math.isfinite(gap):
        raise DomainError(f"gap must be finite, got {gap!r}")
    return float(_safe_speed(leader.vel, follower.vel, gap, params))


def _safe_speed(v_leader, v_follower, gap, params: KraussParams):
    tau = params.tau_react
    denom = (v_leader + v_follower) / (2.0 * params.decel_max) + tau
    return np.maximum(0.0, v_leader + (gap - v_leader * tau) / denom)


def step_follower(subject: VehicleState, target: VehicleState, cfg: ScenarioConfig,
                  xi: float = 0.0) -> VehicleState:
    """Advance the subject one step of the Krauss model behind the target."""
    gap = target.pos - subject.pos - cfg.vehicle_length
    vel, pos = _follower_update(
        np.asarray(subject.vel), np.asarray(subject.pos), np.asarray(target.vel),
        np.asarray(gap), cfg, np.asarray(float(xi)),
    )
    return VehicleState(pos=float(pos), vel=float(vel))


def _follower_update(v_f, x_f, v_l, gap, cfg: ScenarioConfig, xi):
    p = cfg.follower
    v_safe = _safe_speed(v_l, v_f, gap, p)
    v_des = np.minimum(cfg.v_limit, np.minimum(v_f + p.accel_max * cfg.dt, v_safe))
    v_new = np.maximum(0.0, v_des - p.sigma * p.accel_max * cfg.dt * xi)
    x_new = x_f + cfg.dt * 0.5 * (v_f + v_new)
    return v_new, x_new


def _initial_target_gap(v_s, v_lc, gap, cfg: ScenarioConfig):
    """Gap at maneuver start implied by the required gap at lane crossing."""
    return gap + 0.5 * cfg.lane_change_duration * (v_s - v_lc)


def _noise_matrix(seed: int, n: int, n_cols: int, first_index: int) -> np.ndarray:
    """Per-rollout noise rows from independent jumped streams."""
    out = np.empty((n, n_cols), dtype=float)
    for i in range(n):
        out[i] = stream(seed, "follower-noise", first_index + i).random(n_cols)
    return out


def rollout(state: SubjectState, action: CutInAction, scene: Scene, seed: int = 0,
            stream_index: int = 0) -> Trajectory:
    """Simulate one cut-in maneuver and return the full trajectory."""
    cfg = scene.scenario
    g0 = _initial_target_gap(state.speed, action.v_lc, action.gap, cfg)
    if g0 < 0:
        raise InfeasibleScenarioError(
            f"cut-in at v_lc={action.v_lc}, gap={action.gap} from v_s={state.speed} "
            f"requires negative initial gap {g0:.3f} m"
        )
    n_steps, ramp = cfg.n_steps, cfg.ramp_steps
    n_noise = n_steps - ramp
    if cfg.follower.sigma > 0.0:
        noise = _noise_matrix(seed, 1, n_noise, stream_index)[0]
    else:
        noise = np.zeros(n_noise)

    times = np.arange(n_steps + 1) * cfg.dt
    s_pos = np.empty(n_steps + 1)
    s_vel = np.empty(n_steps + 1)
    t_pos = np.empty(n_steps + 1)
    t_vel = np.empty(n_steps + 1)
    s_pos[0], s_vel[0] = 0.0, state.speed
    t_pos[0], t_vel[0] = g0 + cfg.vehicle_length, state.speed

    for k in range(n_steps):
        if k < ramp:
            # lane-change phase: subject cruises, target ramps linearly
            s_vel[k + 1] = state.speed
            s_pos[k + 1] = s_pos[k] + cfg.dt * state.speed
            t_vel[k + 1] = state.speed + (action.v_lc - state.speed) * (k + 1) / ramp
        else:
            gap = t_pos[k] - s_pos[k] - cfg.vehicle_length
            s_vel[k + 1], s_pos[k + 1] = _follower_update(
                s_vel[k], s_pos[k], t_vel[k], gap, cfg, noise[k - ramp]
            )
            t_vel[k + 1] = action.v_lc
        t_pos[k + 1] = t_pos[k] + cfg.dt * 0.5 * (t_vel[k] + t_vel[k + 1])

    gap_series = t_pos - s_pos - cfg.vehicle_length
    return Trajectory(times, s_pos, s_vel, t_pos, t_vel, gap_series)


def rollout_batch(v_s: np.ndarray, v_lc: np.ndarray, gap: np.ndarray, scene: Scene,
                  seed: int = 0, first_stream_index: int = 0) -> BatchRollout:
    """Vectorized rollouts; returns per-rollout aggregates, not trajectories.

    Infeasible geometries (negative implied initial gap) are kept as
    non-events so batch estimators can count them without aborting.
    """
    cfg = scene.scenario
    rare = scene.rare
    v_s = np.asarray(v_s, dtype=float)
    v_lc = np.asarray(v_lc, dtype=float)
    gap = np.asarray(gap, dtype=float)
    n = len(v_s)
    if not (len(v_lc) == len(gap) == n):
        raise DomainError("v_s, v_lc and gap must have equal length")

    g0 = _initial_target_gap(v_s, v_lc, gap, cfg)
    infeasible = g0 < 0
    n_bad = int(infeasible.sum())
    if n_bad:
        logger.debug("rollout batch: %d of %d geometries infeasible", n_bad, n)

    n_steps, ramp = cfg.n_steps, cfg.ramp_steps
    n_noise = n_steps - ramp
    if cfg.follower.sigma > 0.0:
        noise = _noise_matrix(seed, n, n_noise, first_stream_index)
    else:
        noise = None

    # Lane-change phase in closed form: the subject cruises and the target
    # ramps linearly, so the gap moves monotonically from g0 to the action
    # gap and its minimum is attained at one of the endpoints.
    min_gap = np.minimum(g0, gap)
    moving0 = v_s > rare.stopped_speed
    min_gap_moving = np.where(moving0, min_gap, np.inf)

    s_vel = v_s.copy()
    s_pos = v_s * cfg.lane_change_duration
    t_pos = g0 + cfg.vehicle_length + 0.5 * cfg.lane_change_duration * (v_s + v_lc)
    cur_gap = t_pos - s_pos - cfg.vehicle_length

    for k in range(n_noise):
        xi = noise[:, k] if noise is not None else 0.0
        s_vel, s_pos = _follower_update(s_vel, s_pos, v_lc, cur_gap, cfg, xi)
        t_pos = t_pos + cfg.dt * v_lc
        cur_gap = t_pos - s_pos - cfg.vehicle_length
        min_gap = np.minimum(min_gap, cur_gap)
        moving = s_vel > rare.stopped_speed
        min_gap_moving = np.where(moving, np.minimum(min_gap_moving, cur_gap), min_gap_moving)

    min_gap = np.where(infeasible, np.inf, min_gap)
    min_gap_moving = np.where(infeasible, np.inf, min_gap_moving)
    event = min_gap_moving <= rare.gap_threshold
    return BatchRollout(min_gap=min_gap, min_gap_moving=min_gap_moving,
                        event=event, infeasible=infeasible)


def is_rare_event(traj: Trajectory, rare: RareEventSpec) -> bool:
    """True when the gap closes to the threshold while the subject moves."""
    hit = (traj.gap_series <= rare.gap_threshold) & (traj.subject_vel > rare.stopped_speed)
    return bool(np.any(hit))


def sample_scene_inputs(policy, n: int, scene: Scene, seed: int):
    """Sample n (speed, action-cell) pairs from a policy on the scene grid.

    Returns (speed indices, v_lc cell indices, gap cell indices) plus the
    per-speed mass tables used, so callers can reuse them for weighting.
    """
    masses = scene.policy_masses(policy)
    k_idx = scene.scenario.subject_speeds.sample_indices(n, stream(seed, "scene-speed"))
    u = stream(seed, "scene-cell").random(n)
    iv = np.empty(n, dtype=np.intp)
    ig = np.empty(n, dtype=np.intp)
    shape = masses.shape[1:]
    for k in np.unique(k_idx):
        sel = k_idx == k
        cum = np.cumsum(masses[k].ravel())
        cum[-1] = 1.0
        flat = np.searchsorted(cum, u[sel], side="right")
        iv[sel], ig[sel] = np.unravel_index(flat, shape)
    return k_idx, iv, ig, masses


def simulate_scene(policy, n: int, scene: Scene, seed: int) -> float:
    """Empirical rare-event rate of a policy over n sampled rollouts."""
    if n <= 0:
        raise DomainError(f"rollout count must be > 0, got {n!r}")
    k_idx, iv, ig, _ = sample_scene_inputs(policy, n, scene, seed)
    speeds = np.asarray(scene.scenario.subject_speeds.values, dtype=float)[k_idx]
    v_lc = (iv + 0.5) * scene.grid.dv
    gap = (ig + 0.5) * scene.grid.dgap
    batch = rollout_batch(speeds, v_lc, gap, scene, seed=seed)
    return float(batch.event.mean())
