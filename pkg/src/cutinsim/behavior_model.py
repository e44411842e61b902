"""Fitting the nine-parameter mixed-behavior policy to observed cut-ins.

The model's free parameters are two rationality magnitudes and one mixing
weight per utility.  They are fit per subject-speed band by matching the
quantile functions of the model's time-to-collision and gap marginals to
the empirical ones at fixed probability knots, with bounded trust-region
least squares started from all eight behavior-category corners.

Time-to-collision marginals are conditioned on the analysis window
(0, TTC_CAP] on both the model and the empirical side.  Non-closing
actions have infinite ttc, and the closing tail is heavy by construction
(ttc = gap / closing speed diverges as the speeds approach), so without a
window the top quantiles would be unbounded in magnitude and dominate any
quantile comparison; inside the window ttc actually measures interaction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import pearsonr
from sklearn.base import BaseEstimator

from .errors import DataError, DomainError, NumericalError
from .grid import ActionGrid, GridSpec, PolicyGridBuilder, sample_cells
from .observations import SPEED_BANDS, ObservationSet
from .policy import CATEGORY_SIGNS, LAMBDA_MAX, MixedPolicyParams, UtilitySpec, _ttc_values
from .rng import stream
from .scenario import DiscreteSpeedDist

__all__ = [
    "METRICS",
    "QUANTILE_KNOTS",
    "TTC_CAP",
    "EmpiricalCDF",
    "empirical_cdf",
    "ModelMarginals",
    "model_cdf",
    "model_quantile",
    "BandFit",
    "FitResult",
    "fit_params",
    "QQResult",
    "qq_points",
    "filter_categories",
    "generate_situations",
    "MixedBehaviorModel",
]

METRICS = ("ttc", "gap")

# Probability knots 0.05 .. 0.95 used by the quantile-matching objective.
QUANTILE_KNOTS = tuple(np.round(np.arange(1, 20) * 0.05, 2))

# Upper edge of the time-to-collision analysis window in seconds.
TTC_CAP = 30.0

# Fitted rationality magnitudes live in [_LAMBDA_FLOOR, lambda_bound]; the
# open-interval model bounds exclude zero, so the solver needs a positive
# floor to stay inside the parameter domain.
_LAMBDA_FLOOR = 1e-2

_MIN_OBS = 200


# ---------------------------------------------------------------------------
# Empirical side
# ---------------------------------------------------------------------------

class EmpiricalCDF:
    """Right-continuous ECDF with midpoint plotting positions.

    ``cdf(x)`` is the fraction of values <= x.  ``quantile(q)`` inverts the
    plotting positions (i - 0.5)/n by linear interpolation between order
    statistics, clamped to the sample range at the extremes.
    """

    def __init__(self, values):
        values = np.asarray(values, dtype=float).ravel()
        values = values[np.isfinite(values)]
        if len(values) < 2:
            raise DataError(
                f"empirical CDF needs at least 2 finite values, got {len(values)}"
            )
        self.values = np.sort(values)
        self.n = len(self.values)
        self._positions = (np.arange(self.n) + 0.5) / self.n

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.values, x, side="right") / self.n
        return float(out) if np.ndim(x) == 0 else out

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < 0) or np.any(q > 1) or np.any(np.isnan(q)):
            raise DomainError("quantile levels must lie in [0, 1]")
        out = np.interp(q, self._positions, self.values)
        return float(out) if np.ndim(q) == 0 else out


def empirical_cdf(values) -> EmpiricalCDF:
    """Step CDF of a finite sample; see :class:`EmpiricalCDF`."""
    return EmpiricalCDF(values)


# ---------------------------------------------------------------------------
# Model side
# ---------------------------------------------------------------------------

class ModelMarginals:
    """Metric marginals of a mixed policy averaged over a speed marginal.

    The geometry (utility tables, metric values per cell, their sort order)
    depends only on the speed marginal and the grid, so it is computed once;
    evaluating a candidate parameter set reduces to reordering its cell
    masses and one cumulative sum, which keeps the fitter's inner loop
    cheap.  Gap quantiles interpolate uniformly within a cell, matching how
    situations are jittered at generation time; ttc quantiles are step
    inverses over the per-cell values inside the (0, ttc_cap] window.
    """

    def __init__(self, speed_dist: DiscreteSpeedDist, uspec: UtilitySpec,
                 gspec: GridSpec, ttc_cap: float = TTC_CAP):
        if not ttc_cap > 0.0:
            raise DomainError(f"ttc_cap must be > 0, got {ttc_cap!r}")
        self.speed_dist = speed_dist
        self.uspec = uspec
        self.gspec = gspec
        self.ttc_cap = float(ttc_cap)
        self.builder = PolicyGridBuilder(gspec, uspec, speed_dist.values)
        self._probs = speed_dist.prob_array()[:, None, None]
        ttc_flat = self.builder.ttc.ravel()
        # Cells beyond the window (including non-closing, infinite-ttc
        # cells) sort to the tail and are dropped from the ttc marginal.
        self._ttc_order = np.argsort(ttc_flat, kind="stable")
        sorted_ttc = ttc_flat[self._ttc_order]
        n_keep = int(np.searchsorted(sorted_ttc, self.ttc_cap, side="right"))
        self._n_keep = min(n_keep, int(np.isfinite(sorted_ttc).sum()))
        self._ttc_sorted = sorted_ttc[: self._n_keep]
        self._gap_edges = np.arange(gspec.n_gap + 1) * gspec.dgap

    def _weights(self, params: MixedPolicyParams):
        masses = self.builder.mixed_masses(params)
        w = self._probs * masses
        gap_pmf = w.sum(axis=(0, 1))
        if self._n_keep == 0:
            raise NumericalError(
                "no grid cell has ttc inside the analysis window; "
                "ttc marginal is empty"
            )
        ttc_cum = np.cumsum(w.ravel()[self._ttc_order][: self._n_keep])
        if ttc_cum[-1] <= 0.0:
            raise NumericalError(
                "policy places no mass on closing actions inside the "
                "analysis window; ttc marginal is empty"
            )
        return gap_pmf, ttc_cum

    def cdf(self, params: MixedPolicyParams, metric: str, x):
        """Marginal CDF of the metric; ttc is conditional on closing."""
        gap_pmf, ttc_cum = self._weights(params)
        x = np.asarray(x, dtype=float)
        if metric == "gap":
            cum = np.concatenate([[0.0], np.cumsum(gap_pmf)])
            xc = np.clip(x, 0.0, self.gspec.gap_max)
            out = np.interp(xc, self._gap_edges, cum)
            out = np.where(x < 0.0, 0.0, out)
            out = np.where(x >= self.gspec.gap_max, 1.0, out)
        elif metric == "ttc":
            idx = np.searchsorted(self._ttc_sorted, x, side="right")
            cum = np.concatenate([[0.0], ttc_cum / ttc_cum[-1]])
            out = cum[idx]
        else:
            raise DomainError(f"unknown metric {metric!r}; expected one of {METRICS}")
        return float(out) if np.ndim(x) == 0 else out

    def quantile(self, params: MixedPolicyParams, metric: str, q):
        gap_pmf, ttc_cum = self._weights(params)
        q = np.asarray(q, dtype=float)
        if np.any(q < 0) or np.any(q > 1) or np.any(np.isnan(q)):
            raise DomainError("quantile levels must lie in [0, 1]")
        if metric == "gap":
            cum = np.concatenate([[0.0], np.cumsum(gap_pmf)])
            cum[-1] = 1.0
            out = np.interp(q, cum, self._gap_edges)
        elif metric == "ttc":
            # Midpoint positions mirror the empirical plotting convention,
            # so between sparse atoms the quantile interpolates instead of
            # jumping a whole grid-cell step.
            w = np.diff(ttc_cum, prepend=0.0)
            mid = ttc_cum - 0.5 * w
            out = np.interp(q * ttc_cum[-1], mid, self._ttc_sorted)
        else:
            raise DomainError(f"unknown metric {metric!r}; expected one of {METRICS}")
        return float(out) if np.ndim(q) == 0 else out

    def quantiles_at_knots(self, params: MixedPolicyParams,
                           knots=QUANTILE_KNOTS) -> dict:
        knots = np.asarray(knots, dtype=float)
        return {m: self.quantile(params, m, knots) for m in METRICS}


@lru_cache(maxsize=32)
def _marginals_cached(speed_dist: DiscreteSpeedDist, uspec: UtilitySpec,
                      gspec: GridSpec, ttc_cap: float) -> ModelMarginals:
    return ModelMarginals(speed_dist, uspec, gspec, ttc_cap)


def model_cdf(metric: str, x, params: MixedPolicyParams,
              speed_dist: DiscreteSpeedDist, uspec: UtilitySpec,
              gspec: GridSpec, ttc_cap: float = TTC_CAP):
    """Marginal metric CDF of the mixed policy under a speed marginal."""
    return _marginals_cached(speed_dist, uspec, gspec, ttc_cap) \
        .cdf(params, metric, x)


def model_quantile(metric: str, q, params: MixedPolicyParams,
                   speed_dist: DiscreteSpeedDist, uspec: UtilitySpec,
                   gspec: GridSpec, ttc_cap: float = TTC_CAP):
    """Inverse of :func:`model_cdf` at probability level(s) q."""
    return _marginals_cached(speed_dist, uspec, gspec, ttc_cap) \
        .quantile(params, metric, q)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandFit:
    """Solver outcome for one speed band."""

    band: str
    params: MixedPolicyParams
    residual_norm: float
    iterations: int
    converged: bool
    n_obs: int
    start_category: str

    def to_dict(self) -> dict:
        return {
            "band": self.band,
            "params": self.params.to_dict(),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_obs": self.n_obs,
            "start_category": self.start_category,
        }


@dataclass(frozen=True)
class FitResult:
    """Per-band fits keyed by speed band name."""

    band_fits: dict

    def __post_init__(self):
        if not self.band_fits:
            raise DataError("fit produced no band results")
        for band in self.band_fits:
            if band not in SPEED_BANDS:
                raise DomainError(f"unknown speed band {band!r}")

    def bands(self) -> tuple:
        return tuple(b for b in SPEED_BANDS if b in self.band_fits)

    def params(self, band: str) -> MixedPolicyParams:
        if band not in self.band_fits:
            raise DomainError(f"no fit available for band {band!r}")
        return self.band_fits[band].params

    @property
    def converged(self) -> bool:
        return all(f.converged for f in self.band_fits.values())

    def to_dict(self) -> dict:
        return {band: self.band_fits[band].to_dict() for band in self.bands()}

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        fits = {}
        for band, f in d.items():
            fits[band] = BandFit(
                band, MixedPolicyParams.from_dict(f["params"]),
                float(f["residual_norm"]), int(f["iterations"]),
                bool(f["converged"]), int(f["n_obs"]),
                str(f["start_category"]),
            )
        return cls(fits)


def _corner_start(signs, bound: float) -> np.ndarray:
    """Initial 9-vector biased toward one behavior category's sign octant."""
    lam0 = min(4.0, 0.5 * bound)
    alpha = [0.85 if s > 0 else 0.15 for s in signs]
    return np.array([lam0] * 3 + [-lam0] * 3 + alpha, dtype=float)


def _metric_values(obs: ObservationSet, metric: str, ttc_cap: float) -> np.ndarray:
    """Observed metric values inside the analysis window."""
    if metric == "ttc":
        return obs.ttc[obs.ttc <= ttc_cap]
    return obs.gap


def _empirical_knot_quantiles(obs: ObservationSet, knots,
                              ttc_cap: float) -> dict:
    out = {}
    for metric in METRICS:
        values = _metric_values(obs, metric, ttc_cap)
        out[metric] = EmpiricalCDF(values).quantile(np.asarray(knots))
    return out


def _metric_scales(knot_quantiles: dict) -> dict:
    scales = {}
    for metric, q in knot_quantiles.items():
        spread = float(q[-1] - q[0])
        scales[metric] = spread if spread > 1e-9 else max(1.0, abs(float(q[-1])))
    return scales


def fit_params(obs: ObservationSet, uspec: UtilitySpec, gspec: GridSpec, *,
               bounds: float = LAMBDA_MAX, seed: int = 0,
               knots=QUANTILE_KNOTS, min_obs: int = _MIN_OBS,
               max_nfev: int = 300, ttc_cap: float = TTC_CAP) -> FitResult:
    """Fit mixed-policy parameters independently per speed band.

    Every band present in ``obs`` must hold at least ``min_obs`` records;
    absent bands are skipped.  The objective is the quantile mismatch of
    the ttc and gap marginals at ``knots``, each metric normalized by its
    empirical knot spread.  Eight bounded trust-region solves start from
    the behavior-category corners; the best final residual wins.  A solve
    that exhausts ``max_nfev`` still contributes its best-so-far point but
    is flagged as unconverged.  ``seed`` only feeds tie-breaking-free
    deterministic paths and is recorded for provenance.
    """
    if not (0.0 < bounds <= LAMBDA_MAX):
        raise DomainError(f"bounds must lie in (0, {LAMBDA_MAX}], got {bounds!r}")
    if len(obs) == 0:
        raise DataError("cannot fit on an empty observation set")
    counts = obs.band_counts()
    present = [b for b in SPEED_BANDS if counts[b] > 0]
    for band in present:
        if counts[band] < min_obs:
            raise DataError(
                f"band {band} has {counts[band]} observations; "
                f"fitting requires at least {min_obs}"
            )

    lo = np.array([_LAMBDA_FLOOR] * 3 + [-bounds] * 3 + [0.0] * 3)
    hi = np.array([bounds] * 3 + [-_LAMBDA_FLOOR] * 3 + [1.0] * 3)
    x_scale = np.array([5.0] * 6 + [0.5] * 3)
    knots_arr = np.asarray(knots, dtype=float)

    band_fits = {}
    for band in present:
        band_obs = obs.select_band(band)
        marginals = ModelMarginals(band_obs.speed_marginal(), uspec, gspec,
                                   ttc_cap)
        emp = _empirical_knot_quantiles(band_obs, knots_arr, ttc_cap)
        scales = _metric_scales(emp)

        def residuals(x):
            model = marginals.quantiles_at_knots(
                MixedPolicyParams.from_vector(x), knots_arr)
            return np.concatenate(
                [(model[m] - emp[m]) / scales[m] for m in METRICS])

        best = None
        for category, signs in CATEGORY_SIGNS.items():
            res = least_squares(residuals, _corner_start(signs, bounds),
                                bounds=(lo, hi), method="trf",
                                x_scale=x_scale, max_nfev=max_nfev)
            if best is None or res.cost < best[0].cost:
                best = (res, category)
        res, category = best
        band_fits[band] = BandFit(
            band=band,
            params=MixedPolicyParams.from_vector(res.x),
            residual_norm=float(np.linalg.norm(res.fun)),
            iterations=int(res.nfev),
            converged=bool(res.status > 0),
            n_obs=counts[band],
            start_category=category,
        )
    return FitResult(band_fits)


# ---------------------------------------------------------------------------
# QQ evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QQResult:
    """Paired model and empirical quantiles for one metric."""

    metric: str
    levels: np.ndarray
    theoretical: np.ndarray
    empirical: np.ndarray
    pearson_r: float

    def __post_init__(self):
        for name in ("levels", "theoretical", "empirical"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if not (len(self.levels) == len(self.theoretical) == len(self.empirical)):
            raise DomainError("QQ columns must have equal length")
        for name in ("theoretical", "empirical"):
            arr = getattr(self, name)
            if np.any(np.diff(arr) < 0):
                raise DomainError(f"{name} quantiles must be non-decreasing")
        if not (-1.0 <= self.pearson_r <= 1.0):
            raise DomainError(f"pearson_r must lie in [-1, 1], got {self.pearson_r!r}")

    def rows(self):
        """(prob_level, theoretical, empirical) triples for CSV export."""
        for i in range(len(self.levels)):
            yield (float(self.levels[i]), float(self.theoretical[i]),
                   float(self.empirical[i]))


def qq_points(obs: ObservationSet, params: MixedPolicyParams, metric: str,
              n_points: int, *, uspec: UtilitySpec, gspec: GridSpec,
              speed_dist: DiscreteSpeedDist | None = None,
              ttc_cap: float = TTC_CAP) -> QQResult:
    """Pair empirical against model quantiles at midpoint probability levels.

    The model marginal is taken under ``speed_dist`` when given, else under
    the observations' own binned speed marginal.  For the ttc metric both
    sides are conditioned on the analysis window, so no knot maps to
    infinity and the heavy closing tail cannot dominate the correlation.
    """
    if metric not in METRICS:
        raise DomainError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if n_points < 2:
        raise DomainError(f"n_points must be >= 2, got {n_points}")
    values = _metric_values(obs, metric, ttc_cap)
    values = values[np.isfinite(values)]
    if len(values) < n_points:
        raise DataError(
            f"{metric} has {len(values)} in-window observations; "
            f"need at least n_points = {n_points}"
        )
    dist = speed_dist if speed_dist is not None else obs.speed_marginal()
    marginals = _marginals_cached(dist, uspec, gspec, ttc_cap)
    levels = (np.arange(n_points) + 0.5) / n_points
    theoretical = marginals.quantile(params, metric, levels)
    empirical = EmpiricalCDF(values).quantile(levels)
    if np.ptp(theoretical) < 1e-12 or np.ptp(empirical) < 1e-12:
        raise NumericalError(
            f"{metric} quantiles are degenerate; QQ correlation is undefined"
        )
    r = float(pearsonr(theoretical, empirical).statistic)
    return QQResult(metric, levels, theoretical, empirical, r)


# ---------------------------------------------------------------------------
# Situation generation
# ---------------------------------------------------------------------------

def filter_categories(params: MixedPolicyParams, categories) -> MixedPolicyParams:
    """Restrict a mixed policy to the sign branches of chosen categories.

    For each utility, branches whose rationality sign appears in none of
    the requested categories are zeroed by pinning the mixing weight; a
    branch allowed by some category keeps its weight.  The per-utility
    renormalization is implicit in the mixing weights summing to one.
    """
    cats = set(categories)
    if not cats:
        raise DomainError("category filter must not be empty")
    unknown = cats - set(CATEGORY_SIGNS)
    if unknown:
        raise DomainError(f"unknown behavior categories: {sorted(unknown)}")
    alpha = list(params.alpha)
    for i in range(3):
        signs = {CATEGORY_SIGNS[c][i] for c in cats}
        if signs == {1}:
            alpha[i] = 1.0
        elif signs == {-1}:
            alpha[i] = 0.0
    return MixedPolicyParams(params.lambda_plus, params.lambda_minus,
                             tuple(alpha))


def generate_situations(params: MixedPolicyParams, n: int,
                        speed_dist: DiscreteSpeedDist, seed: int, *,
                        uspec: UtilitySpec, gspec: GridSpec,
                        category_filter=None, jitter: bool = True,
                        stream_index: int = 0) -> ObservationSet:
    """Sample synthetic cut-in situations from the mixed policy.

    Subject speeds come from ``speed_dist``; actions are drawn from the
    per-speed policy grids, uniformly jittered within their cell unless
    ``jitter`` is disabled; ttc is recomputed from the jittered values so
    the records satisfy the observation invariants exactly.  Callers that
    draw several independent batches under one seed separate them with
    ``stream_index``.
    """
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    eff = filter_categories(params, category_filter) \
        if category_filter is not None else params
    if n == 0:
        return ObservationSet.empty()
    rng = stream(int(seed), "generate-situations", stream_index)
    idx = speed_dist.sample_indices(n, rng)
    builder = PolicyGridBuilder(gspec, uspec, speed_dist.values)
    masses = builder.mixed_masses(eff)
    iv = np.empty(n, dtype=int)
    ig = np.empty(n, dtype=int)
    for k in range(len(speed_dist.values)):
        sel = np.nonzero(idx == k)[0]
        if len(sel) == 0:
            continue
        grid = ActionGrid(gspec, masses[k])
        a, b = sample_cells(grid, len(sel), rng)
        iv[sel] = a
        ig[sel] = b
    if jitter:
        v_lc = (iv + rng.random(n)) * gspec.dv
        gap = (ig + rng.random(n)) * gspec.dgap
    else:
        v_lc = (iv + 0.5) * gspec.dv
        gap = (ig + 0.5) * gspec.dgap
    v_s = np.asarray(speed_dist.values, dtype=float)[idx]
    ttc = _ttc_values(v_s, v_lc, gap)
    return ObservationSet(v_s, v_lc, gap, ttc)


# ---------------------------------------------------------------------------
# Estimator-style wrapper
# ---------------------------------------------------------------------------

class MixedBehaviorModel(BaseEstimator):
    """Scikit-learn style wrapper around the per-band fitting pipeline.

    ``fit`` accepts an :class:`ObservationSet` or an (n, 4) array in CSV
    column order; the action grid defaults to a data-derived bounding box
    when no explicit extent is given.  After fitting, ``sample`` draws new
    situations from a band's fitted policy and ``score`` reports the mean
    QQ correlation over bands and metrics.
    """

    def __init__(self, gap_star: float = 10.0, ttc_star: float = 4.0,
                 v_star: float = 20.0, v_max: float | None = None,
                 gap_max: float | None = None, n_v: int = 64,
                 n_gap: int = 64, lambda_bound: float = LAMBDA_MAX,
                 min_obs: int = _MIN_OBS, max_nfev: int = 300,
                 ttc_cap: float = TTC_CAP, seed: int = 0):
        self.gap_star = gap_star
        self.ttc_star = ttc_star
        self.v_star = v_star
        self.v_max = v_max
        self.gap_max = gap_max
        self.n_v = n_v
        self.n_gap = n_gap
        self.lambda_bound = lambda_bound
        self.min_obs = min_obs
        self.max_nfev = max_nfev
        self.ttc_cap = ttc_cap
        self.seed = seed

    @staticmethod
    def _as_observations(X) -> ObservationSet:
        if isinstance(X, ObservationSet):
            return X
        arr = np.asarray(X, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise DataError(
                f"expected an ObservationSet or an (n, 4) array of "
                f"(v_s, v_lc, gap, ttc), got shape {arr.shape}"
            )
        return ObservationSet(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    def _grid(self, obs: ObservationSet) -> GridSpec:
        v_max = self.v_max
        gap_max = self.gap_max
        if v_max is None:
            v_max = 1.05 * float(obs.v_lc.max()) if len(obs) else 1.0
        if gap_max is None:
            gap_max = 1.05 * float(obs.gap.max()) if len(obs) else 1.0
        return GridSpec(v_max=max(v_max, 1e-6), gap_max=max(gap_max, 1e-6),
                        n_v=self.n_v, n_gap=self.n_gap)

    def fit(self, X, y=None):
        obs = self._as_observations(X)
        self.uspec_ = UtilitySpec(self.gap_star, self.ttc_star, self.v_star)
        self.gspec_ = self._grid(obs)
        self.result_ = fit_params(obs, self.uspec_, self.gspec_,
                                  bounds=self.lambda_bound, seed=self.seed,
                                  min_obs=self.min_obs,
                                  max_nfev=self.max_nfev,
                                  ttc_cap=self.ttc_cap)
        self.band_params_ = {b: self.result_.params(b)
                             for b in self.result_.bands()}
        self.band_speed_dists_ = {
            b: obs.select_band(b).speed_marginal()
            for b in self.result_.bands()
        }
        return self

    def _require_fitted(self):
        if not hasattr(self, "result_"):
            raise DataError("model is not fitted; call fit first")

    def sample(self, n: int, band: str, seed: int | None = None,
               category_filter=None) -> ObservationSet:
        self._require_fitted()
        if band not in self.band_params_:
            raise DomainError(f"no fitted parameters for band {band!r}")
        return generate_situations(
            self.band_params_[band], n, self.band_speed_dists_[band],
            self.seed if seed is None else seed,
            uspec=self.uspec_, gspec=self.gspec_,
            category_filter=category_filter,
        )

    def score(self, X, y=None) -> float:
        """Mean QQ Pearson correlation over fitted bands and both metrics."""
        self._require_fitted()
        obs = self._as_observations(X)
        rs = []
        for band in self.result_.bands():
            band_obs = obs.select_band(band)
            for metric in METRICS:
                usable = int(np.isfinite(
                    _metric_values(band_obs, metric, self.ttc_cap)).sum())
                n_points = min(100, usable)
                if n_points < 2:
                    continue
                rs.append(qq_points(
                    band_obs, self.band_params_[band], metric, n_points,
                    uspec=self.uspec_, gspec=self.gspec_,
                    ttc_cap=self.ttc_cap).pearson_r)
        if not rs:
            raise DataError("no band in X has enough data to score")
        return float(np.mean(rs))
