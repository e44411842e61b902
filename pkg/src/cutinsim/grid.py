"""Discretized action space shared by sampling, weighting and fitting.

Policies are continuous densities over (cut-in speed, cut-in gap); all
sampling and importance weighting happens on one fixed rectangular grid of
cells.  Cell probability is the density at the cell center times the cell
area, normalized over the grid, so likelihood ratios between two policies
are ratios of probability masses under the identical discrete measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGridError, DomainError
from .policy import (
    CutInAction,
    MixedPolicyParams,
    RationalityVector,
    SubjectState,
    UtilitySpec,
    _ttc_values,
    mixed_component_values,
    mixture_component_values,
    utility_gap,
    utility_progress,
    utility_ttc,
)

__all__ = [
    "GridSpec",
    "ActionGrid",
    "build_action_grid",
    "mixture_grid",
    "mixed_grid",
    "sample_action",
    "sample_cells",
    "grid_expectation",
    "PolicyGridBuilder",
]


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the action grid: ranges start at zero."""

    v_max: float
    gap_max: float
    n_v: int = 128
    n_gap: int = 128

    def __post_init__(self):
        if not (math.isfinite(self.v_max) and self.v_max > 0):
            raise DomainError(f"v_max must be finite and > 0, got {self.v_max!r}")
        if not (math.isfinite(self.gap_max) and self.gap_max > 0):
            raise DomainError(f"gap_max must be finite and > 0, got {self.gap_max!r}")
        if self.n_v < 16 or self.n_gap < 16:
            raise DomainError("grid resolution must be at least 16 cells per axis")

    @property
    def dv(self) -> float:
        return self.v_max / self.n_v

    @property
    def dgap(self) -> float:
        return self.gap_max / self.n_gap

    @property
    def cell_area(self) -> float:
        return self.dv * self.dgap

    def v_axis(self) -> np.ndarray:
        """Cell-center speeds."""
        return (np.arange(self.n_v) + 0.5) * self.dv

    def gap_axis(self) -> np.ndarray:
        """Cell-center gaps."""
        return (np.arange(self.n_gap) + 0.5) * self.dgap

    def to_dict(self) -> dict:
        return {"v_max": self.v_max, "gap_max": self.gap_max,
                "n_v": self.n_v, "n_gap": self.n_gap}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(float(d["v_max"]), float(d["gap_max"]),
                   int(d.get("n_v", 128)), int(d.get("n_gap", 128)))


@dataclass(frozen=True, eq=False)
class ActionGrid:
    """Normalized probability masses over action cells for one policy/state."""

    spec: GridSpec
    mass: np.ndarray  # shape (n_v, n_gap), sums to 1
    _cum: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (self.spec.n_v, self.spec.n_gap):
            raise DomainError(
                f"mass shape {mass.shape} does not match grid "
                f"({self.spec.n_v}, {self.spec.n_gap})"
            )
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise DomainError("grid mass must be finite and >= 0")
        total = float(mass.sum())
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"grid mass must sum to 1 within 1e-9, got {total!r}")
        object.__setattr__(self, "mass", mass)
        cum = np.cumsum(mass.ravel())
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)

    @property
    def v_axis(self) -> np.ndarray:
        return self.spec.v_axis()

    @property
    def gap_axis(self) -> np.ndarray:
        return self.spec.gap_axis()

    def cell_of(self, v_lc: float, gap: float) -> tuple[int, int]:
        """Indices of the cell containing a continuous action."""
        s = self.spec
        if not (0.0 <= v_lc <= s.v_max) or not (0.0 <= gap <= s.gap_max):
            raise DomainError(
                f"action ({v_lc!r}, {gap!r}) lies outside the grid "
                f"[0, {s.v_max}] x [0, {s.gap_max}]"
            )
        iv = min(int(v_lc / s.dv), s.n_v - 1)
        ig = min(int(gap / s.dgap), s.n_gap - 1)
        return iv, ig

    def mass_at(self, v_lc: float, gap: float) -> float:
        iv, ig = self.cell_of(v_lc, gap)
        return float(self.mass[iv, ig])


def build_action_grid(density_values, spec: GridSpec) -> ActionGrid:
    """Discretize a density onto the grid.

    ``density_values`` is either a callable evaluated on meshgrids of cell
    centers (shape (n_v, n_gap) result) or a precomputed array of density
    values at cell centers.  Raises DegenerateGridError when no cell
    carries mass.
    """
    if callable(density_values):
        vv, gg = np.meshgrid(spec.v_axis(), spec.gap_axis(), indexing="ij")
        values = np.asarray(density_values(vv, gg), dtype=float)
    else:
        values = np.asarray(density_values, dtype=float)
    if values.shape != (spec.n_v, spec.n_gap):
        raise DomainError(
            f"density values shape {values.shape} does not match grid "
            f"({spec.n_v}, {spec.n_gap})"
        )
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise DomainError("density values must be finite and >= 0")
    mass = values * spec.cell_area
    total = float(mass.sum())
    if total <= 0.0:
        raise DegenerateGridError("action density carries no probability mass on the grid")
    return ActionGrid(spec, mass / total)


def mixture_grid(state: SubjectState, lam: RationalityVector, uspec: UtilitySpec,
                 gspec: GridSpec) -> ActionGrid:
    """Action grid of a pure rationality-vector policy for one subject state."""
    builder = PolicyGridBuilder(gspec, uspec, (state.speed,))
    return ActionGrid(gspec, builder.mixture_masses(lam)[0])


def mixed_grid(state: SubjectState, params: MixedPolicyParams, uspec: UtilitySpec,
               gspec: GridSpec) -> ActionGrid:
    """Action grid of a mixed-behavior policy for one subject state."""
    builder = PolicyGridBuilder(gspec, uspec, (state.speed,))
    return ActionGrid(gspec, builder.mixed_masses(params)[0])


def sample_cells(grid: ActionGrid, n: int, rng: np.random.Generator
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Sample n cell index pairs from the grid's probability masses."""
    u = rng.random(n)
    flat = np.searchsorted(grid._cum, u, side="right")
    iv, ig = np.unravel_index(flat, grid.mass.shape)
    return iv, ig


def sample_action(grid: ActionGrid, rng, jitter: bool = False) -> CutInAction:
    """Draw one action from the grid; optionally uniform within the cell."""
    if isinstance(rng, (int, np.integer)):
        from .rng import stream

        rng = stream(int(rng), "sample-action")
    iv, ig = sample_cells(grid, 1, rng)
    s = grid.spec
    if jitter:
        v = (iv[0] + rng.random()) * s.dv
        g = (ig[0] + rng.random()) * s.dgap
    else:
        v = (iv[0] + 0.5) * s.dv
        g = (ig[0] + 0.5) * s.dgap
    return CutInAction(float(v), float(g))


def grid_expectation(grid: ActionGrid, values: np.ndarray) -> float:
    """Expectation of per-cell values under the grid measure."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.mass.shape:
        raise DomainError("values shape does not match the grid")
    return float(np.sum(grid.mass * values))


class PolicyGridBuilder:
    """Precomputed utility tables for repeated policy-grid construction.

    The gap and progress utilities depend only on the grid axes; the ttc
    utility additionally depends on the subject speed, so one table per
    supported speed is cached.  Policy masses for any rationality vector or
    mixed parameter set are then a few vectorized density evaluations.
    """

    def __init__(self, gspec: GridSpec, uspec: UtilitySpec, speeds):
        speeds = tuple(float(v) for v in speeds)
        if len(speeds) == 0:
            raise DomainError("at least one subject speed is required")
        if len(set(speeds)) != len(speeds):
            raise DomainError("subject speeds must be distinct")
        self.gspec = gspec
        self.uspec = uspec
        self.speeds = speeds
        v_axis = gspec.v_axis()
        gap_axis = gspec.gap_axis()
        # Broadcastable utility tables: rows index v_lc, columns index gap.
        self.u_gap = utility_gap(gap_axis, uspec)[None, :]
        self.u_prog = utility_progress(v_axis, uspec)[:, None]
        self.ttc = np.stack(
            [_ttc_values(v_s, v_axis[:, None], gap_axis[None, :]) for v_s in speeds]
        )
        self.u_ttc = utility_ttc(self.ttc, uspec)

    def _normalize(self, values: np.ndarray) -> np.ndarray:
        mass = values * self.gspec.cell_area
        totals = mass.sum(axis=(1, 2), keepdims=True)
        if np.any(totals <= 0.0):
            raise DegenerateGridError("policy density carries no mass on the grid")
        return mass / totals

    def mixture_masses(self, lam: RationalityVector) -> np.ndarray:
        """Normalized masses per speed, shape (n_speeds, n_v, n_gap)."""
        values = mixture_component_values(self.u_gap[None], self.u_ttc, self.u_prog[None], lam)
        return self._normalize(values)

    def mixed_masses(self, params: MixedPolicyParams) -> np.ndarray:
        """Normalized mixed-behavior masses per speed."""
        values = mixed_component_values(self.u_gap[None], self.u_ttc, self.u_prog[None], params)
        return self._normalize(values)

    def grid_for(self, masses: np.ndarray, speed_index: int) -> ActionGrid:
        return ActionGrid(self.gspec, masses[speed_index])
