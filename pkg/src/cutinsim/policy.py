"""Bounded-rationality stochastic driving policies for cut-in maneuvers.

A lane-changing driver is modeled as choosing a cut-in action (speed at
crossing, gap to the subject vehicle at crossing) by trading off three
utilities: keeping a comfortable gap, keeping a comfortable time to
collision, and making progress toward the desired speed.  Each utility is
weighted by a rationality level ``lam``: large positive values approach a
pure utility maximizer, zero is indifferent (uniform over actions), and
negative values prefer to violate the utility.  The induced action density
for one utility is exponential in the utility value, truncated to the
attainable range, and the full policy mixes the per-utility densities with
equal weight.

The sign pattern of the three rationality levels partitions drivers into
eight behavior categories (aggressive close fast cut-ins, cautious wide
slow ones, and so on), used by the annealing search over risky behaviors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousCategoryError, DomainError

__all__ = [
    "LAMBDA_MAX",
    "UTILITY_ORDER",
    "CATEGORY_SIGNS",
    "CATEGORIES",
    "UtilitySpec",
    "SubjectState",
    "CutInAction",
    "RationalityVector",
    "MixedPolicyParams",
    "sigmoid",
    "utility_gap",
    "utility_ttc",
    "utility_progress",
    "ttc_of",
    "component_density",
    "component_cdf",
    "component_cdf_inverse",
    "mixture_density",
    "mixed_density",
    "mixture_component_values",
    "mixed_component_values",
    "behavior_category_of",
    "sample_lambda_in_category",
]

# Ceiling on |lam|; beyond roughly this level the policy is already
# indistinguishable from a hard utility maximizer on a discretized grid.
LAMBDA_MAX = 100.0

# Canonical order of the three utilities everywhere in the package.
UTILITY_ORDER = ("gap", "ttc", "progress")

# Behavior categories: sign of (lam_gap, lam_ttc, lam_progress).
CATEGORY_SIGNS = {
    "B1": (-1, -1, +1),
    "B2": (-1, +1, +1),
    "B3": (+1, +1, -1),
    "B4": (+1, -1, -1),
    "B5": (-1, -1, -1),
    "B6": (-1, +1, -1),
    "B7": (+1, +1, +1),
    "B8": (+1, -1, +1),
}
CATEGORIES = tuple(CATEGORY_SIGNS)


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class UtilitySpec:
    """Reference points of the three utilities.

    gap_star: most comfortable gap change point [m]
    ttc_star: most comfortable time-to-collision change point [s]
    v_star:   desired cut-in speed [m/s], by default the road speed limit
    """

    gap_star: float = 10.0
    ttc_star: float = 4.0
    v_star: float = 20.0

    def __post_init__(self):
        for name in ("gap_star", "ttc_star", "v_star"):
            val = getattr(self, name)
            if not math.isfinite(val) or val <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {val!r}")


@dataclass(frozen=True)
class SubjectState:
    """State of the subject vehicle at the start of the maneuver."""

    speed: float

    def __post_init__(self):
        if not math.isfinite(self.speed) or self.speed < 0:
            raise DomainError(f"subject speed must be finite and >= 0, got {self.speed!r}")


@dataclass(frozen=True)
class CutInAction:
    """Decision variables of the lane-changing vehicle at lane crossing.

    v_lc: speed of the target vehicle when it enters the lane [m/s]
    gap:  bumper-to-bumper gap to the subject vehicle at that moment [m]
    """

    v_lc: float
    gap: float

    def __post_init__(self):
        if not math.isfinite(self.v_lc) or self.v_lc < 0:
            raise DomainError(f"v_lc must be finite and >= 0, got {self.v_lc!r}")
        if not math.isfinite(self.gap) or self.gap < 0:
            raise DomainError(f"gap must be finite and >= 0, got {self.gap!r}")


def _check_lambda(lam) -> float:
    lam = float(lam)
    if not math.isfinite(lam) or abs(lam) > LAMBDA_MAX:
        raise DomainError(f"rationality level must satisfy |lam| <= {LAMBDA_MAX}, got {lam!r}")
    return lam


@dataclass(frozen=True)
class RationalityVector:
    """Rationality levels (lam_gap, lam_ttc, lam_progress) of a pure policy."""

    lam_gap: float
    lam_ttc: float
    lam_progress: float

    def __post_init__(self):
        for name in ("lam_gap", "lam_ttc", "lam_progress"):
            object.__setattr__(self, name, _check_lambda(getattr(self, name)))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lam_gap, self.lam_ttc, self.lam_progress)

    def to_dict(self) -> dict:
        return {"lam_gap": self.lam_gap, "lam_ttc": self.lam_ttc, "lam_progress": self.lam_progress}

    @classmethod
    def from_dict(cls, d: dict) -> "RationalityVector":
        return cls(float(d["lam_gap"]), float(d["lam_ttc"]), float(d["lam_progress"]))


@dataclass(frozen=True)
class MixedPolicyParams:
    """Nine-parameter mixed-behavior policy.

    For each utility the population mixes a compliant branch (lam_plus > 0)
    and a violating branch (lam_minus < 0) with weight alpha on the
    compliant one.  Tuples follow UTILITY_ORDER.
    """

    lambda_plus: tuple[float, float, float]
    lambda_minus: tuple[float, float, float]
    alpha: tuple[float, float, float]

    def __post_init__(self):
        lp = tuple(float(v) for v in self.lambda_plus)
        lm = tuple(float(v) for v in self.lambda_minus)
        al = tuple(float(v) for v in self.alpha)
        if not (len(lp) == len(lm) == len(al) == 3):
            raise DomainError("mixed policy parameters must have three components each")
        for v in lp:
            if not (0.0 < v <= LAMBDA_MAX):
                raise DomainError(f"lambda_plus entries must lie in (0, {LAMBDA_MAX}], got {v!r}")
        for v in lm:
            if not (-LAMBDA_MAX <= v < 0.0):
                raise DomainError(f"lambda_minus entries must lie in [-{LAMBDA_MAX}, 0), got {v!r}")
        for v in al:
            if not (0.0 <= v <= 1.0) or not math.isfinite(v):
                raise DomainError(f"alpha entries must lie in [0, 1], got {v!r}")
        object.__setattr__(self, "lambda_plus", lp)
        object.__setattr__(self, "lambda_minus", lm)
        object.__setattr__(self, "alpha", al)

    def as_vector(self) -> np.ndarray:
        """Flatten to the 9-vector (lam_plus, lam_minus, alpha) used by the fitter."""
        return np.array(self.lambda_plus + self.lambda_minus + self.alpha, dtype=float)

    @classmethod
    def from_vector(cls, x) -> "MixedPolicyParams":
        x = np.asarray(x, dtype=float)
        if x.shape != (9,):
            raise DomainError(f"parameter vector must have shape (9,), got {x.shape}")
        return cls(tuple(x[0:3]), tuple(x[3:6]), tuple(x[6:9]))

    def to_dict(self) -> dict:
        return {
            "lambda_plus": list(self.lambda_plus),
            "lambda_minus": list(self.lambda_minus),
            "alpha": list(self.alpha),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixedPolicyParams":
        return cls(tuple(d["lambda_plus"]), tuple(d["lambda_minus"]), tuple(d["alpha"]))


# ---------------------------------------------------------------------------
# Utilities
# ---------------------------------------------------------------------------

def utility_gap(gap, spec: UtilitySpec):
    """Gap comfort utility, strictly increasing from 0.5 toward 1."""
    gap = np.asarray(gap, dtype=float)
    if np.any(gap < 0) or not np.all(np.isfinite(gap)):
        raise DomainError("gap must be finite and >= 0")
    u = sigmoid(gap - spec.gap_star) + 0.5 * sigmoid(spec.gap_star - gap)
    return float(u) if np.ndim(u) == 0 else u


def utility_ttc(ttc, spec: UtilitySpec):
    """Time-to-collision comfort utility; ttc may be +inf (no closing)."""
    ttc = np.asarray(ttc, dtype=float)
    if np.any(ttc < 0) or np.any(np.isnan(ttc)):
        raise DomainError("ttc must be >= 0 (possibly +inf)")
    u = sigmoid(ttc - spec.ttc_star) + 0.5 * sigmoid(spec.ttc_star - ttc)
    return float(u) if np.ndim(u) == 0 else u


def utility_progress(v_lc, spec: UtilitySpec):
    """Progress utility of the cut-in speed, tanh-shaped around v_star."""
    v_lc = np.asarray(v_lc, dtype=float)
    if np.any(v_lc < 0) or not np.all(np.isfinite(v_lc)):
        raise DomainError("v_lc must be finite and >= 0")
    u = np.tanh(v_lc - spec.v_star)
    return float(u) if np.ndim(u) == 0 else u


def ttc_of(state: SubjectState, action: CutInAction) -> float:
    """Time to collision at lane crossing; +inf when the gap is not closing."""
    return float(_ttc_values(state.speed, action.v_lc, action.gap))


def _ttc_values(v_s, v_lc, gap):
    """Vectorized time to collision; +inf where v_lc >= v_s."""
    v_s = np.asarray(v_s, dtype=float)
    v_lc = np.asarray(v_lc, dtype=float)
    gap = np.asarray(gap, dtype=float)
    closing = v_s - v_lc
    with np.errstate(divide="ignore", invalid="ignore"):
        ttc = np.where(closing > 0, gap / np.where(closing > 0, closing, 1.0), np.inf)
    return ttc


# ---------------------------------------------------------------------------
# Per-utility action density
# ---------------------------------------------------------------------------

def component_density(u, lam):
    """Density of one bounded-rationality component over u in [-1, 1].

    Uniform (1/2) at lam = 0; otherwise proportional to exp(lam * u) and
    normalized over [-1, 1].  Evaluated in overflow-safe form.
    """
    lam = _check_lambda(lam)
    u = np.asarray(u, dtype=float)
    if np.any(u < -1.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
        raise DomainError("u must lie in [-1, 1]")
    if lam == 0.0:
        out = np.full_like(u, 0.5)
    elif lam > 0.0:
        out = lam * np.exp(lam * (u - 1.0)) / (-np.expm1(-2.0 * lam))
    else:
        out = -lam * np.exp(lam * (u + 1.0)) / (-np.expm1(2.0 * lam))
    return float(out) if np.ndim(out) == 0 else out


def _check_interval(u_lo: float, u_hi: float) -> tuple[float, float]:
    u_lo, u_hi = float(u_lo), float(u_hi)
    if not (-1.0 <= u_lo < u_hi <= 1.0):
        raise DomainError(f"need -1 <= u_lo < u_hi <= 1, got [{u_lo!r}, {u_hi!r}]")
    return u_lo, u_hi


def component_cdf(u, lam, u_lo: float = -1.0, u_hi: float = 1.0):
    """CDF of one component truncated and renormalized to [u_lo, u_hi]."""
    lam = _check_lambda(lam)
    u_lo, u_hi = _check_interval(u_lo, u_hi)
    u = np.clip(np.asarray(u, dtype=float), u_lo, u_hi)
    if lam == 0.0:
        out = (u - u_lo) / (u_hi - u_lo)
    else:
        out = np.expm1(lam * (u - u_lo)) / np.expm1(lam * (u_hi - u_lo))
    return float(out) if np.ndim(out) == 0 else out


def component_cdf_inverse(p, lam, u_lo: float = -1.0, u_hi: float = 1.0):
    """Closed-form quantile function of the truncated component density."""
    lam = _check_lambda(lam)
    u_lo, u_hi = _check_interval(u_lo, u_hi)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p)):
        raise DomainError("p must lie in [0, 1]")
    if lam == 0.0:
        out = u_lo + p * (u_hi - u_lo)
    else:
        # p = 1 with a strongly negative exponent reaches log1p(-1) = -inf;
        # the clip below restores the exact boundary value.
        with np.errstate(divide="ignore"):
            out = u_lo + np.log1p(p * np.expm1(lam * (u_hi - u_lo))) / lam
    out = np.clip(out, u_lo, u_hi)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Policy densities over actions
# ---------------------------------------------------------------------------

def _utilities_of(state: SubjectState, action: CutInAction, spec: UtilitySpec):
    u_gap = utility_gap(action.gap, spec)
    u_ttc = utility_ttc(ttc_of(state, action), spec)
    u_prog = utility_progress(action.v_lc, spec)
    return u_gap, u_ttc, u_prog


def mixture_component_values(u_gap, u_ttc, u_prog, lam: RationalityVector):
    """Equal-weight mixture of the three per-utility densities, elementwise.

    Inputs are precomputed utility values (arrays broadcast against each
    other), so grid code can evaluate whole action grids in one call.
    """
    total = (
        component_density(u_gap, lam.lam_gap)
        + component_density(u_ttc, lam.lam_ttc)
        + component_density(u_prog, lam.lam_progress)
    )
    return total / 3.0


def mixed_component_values(u_gap, u_ttc, u_prog, params: MixedPolicyParams):
    """Mixed-behavior density values with two rationality branches per utility.

    Shares the evaluation path of :func:`mixture_component_values`: with
    alpha = (1, 1, 1) the result is bit-identical to the pure mixture at
    lambda_plus.
    """
    parts = []
    for u, lp, lm, al in zip(
        (u_gap, u_ttc, u_prog), params.lambda_plus, params.lambda_minus, params.alpha
    ):
        parts.append(al * component_density(u, lp) + (1.0 - al) * component_density(u, lm))
    total = parts[0] + parts[1] + parts[2]
    return total / 3.0


def mixture_density(state: SubjectState, action: CutInAction, lam: RationalityVector,
                    spec: UtilitySpec) -> float:
    """Pointwise action density of a pure rationality-vector policy."""
    u_gap, u_ttc, u_prog = _utilities_of(state, action, spec)
    return float(mixture_component_values(u_gap, u_ttc, u_prog, lam))


def mixed_density(state: SubjectState, action: CutInAction, params: MixedPolicyParams,
                  spec: UtilitySpec) -> float:
    """Pointwise action density of the nine-parameter mixed-behavior policy."""
    u_gap, u_ttc, u_prog = _utilities_of(state, action, spec)
    return float(mixed_component_values(u_gap, u_ttc, u_prog, params))


# ---------------------------------------------------------------------------
# Behavior categories
# ---------------------------------------------------------------------------

def behavior_category_of(lam: RationalityVector) -> str:
    """Map a rationality vector to its behavior category B1..B8.

    Raises AmbiguousCategoryError when any component is exactly zero.
    """
    if any(v == 0.0 for v in lam.as_tuple()):
        raise AmbiguousCategoryError(
            f"zero rationality component has no sign category: {lam.as_tuple()}"
        )
    signs = tuple(1 if v > 0 else -1 for v in lam.as_tuple())
    for name, pattern in CATEGORY_SIGNS.items():
        if pattern == signs:
            return name
    raise AssertionError("sign pattern not covered")  # pragma: no cover


def sample_lambda_in_category(category: str, rng, lambda_max: float = LAMBDA_MAX
                              ) -> RationalityVector:
    """Draw a rationality vector uniformly inside one category's sign octant.

    ``rng`` is either an integer seed or a numpy Generator.  Magnitudes are
    uniform on (0, lambda_max].
    """
    if category not in CATEGORY_SIGNS:
        raise DomainError(f"unknown behavior category {category!r}")
    if not (0.0 < lambda_max <= LAMBDA_MAX):
        raise DomainError(f"lambda_max must lie in (0, {LAMBDA_MAX}], got {lambda_max!r}")
    if isinstance(rng, (int, np.integer)):
        from .rng import stream

        rng = stream(int(rng), "lambda-in-category")
    # 1 - U is in (0, 1], so magnitudes land in (0, lambda_max].
    mags = lambda_max * (1.0 - rng.random(3))
    signs = CATEGORY_SIGNS[category]
    return RationalityVector(*(s * m for s, m in zip(signs, mags)))
