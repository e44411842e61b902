"""Run configuration: one JSON document driving every CLI command.

A configuration file only needs the keys that differ from the defaults
(the calibrated showcase scene); values merge key-by-key into the
default document before validation.  Every CLI output embeds the fully
resolved configuration so a run can be reproduced from its artifact
alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any

from .annealing import SAConfig
from .cross_entropy import CEParams
from .errors import ConfigError, DataError
from .grid import GridSpec
from .policy import LAMBDA_MAX, MixedPolicyParams, UtilitySpec
from .presets import (
    TOY_NOMINAL_PARAMS,
    demo_synthetic_spec,
    toy_ce_params,
    toy_sa_config,
    toy_scene,
)
from .scenario import RareEventSpec, Scene, ScenarioConfig
from .serialize import load_json
from .synthetic import SyntheticDatasetSpec

__all__ = [
    "EstimatorSettings",
    "FitSettings",
    "RunConfig",
    "default_config",
    "load_config",
    "apply_overrides",
]

ESTIMATOR_METHODS = ("cmc", "is-ce", "is-br")

_SECTIONS = ("scenario", "utility", "grid", "rare", "nominal", "estimator",
             "sa", "ce", "fit", "synth", "seed", "output_dir")


@dataclass(frozen=True)
class EstimatorSettings:
    """Sample budget and estimator choice for the estimate command."""

    n: int = 100_000
    method: str = "cmc"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"estimator.n must be >= 1, got {self.n!r}")
        if self.method not in ESTIMATOR_METHODS:
            raise ConfigError(
                f"estimator.method must be one of {ESTIMATOR_METHODS}, "
                f"got {self.method!r}")

    def to_dict(self) -> dict:
        return {"n": self.n, "method": self.method}


@dataclass(frozen=True)
class FitSettings:
    """Evaluation grid and solver budget for the behavior-model fitter.

    v_max / gap_max of None derive the grid from the data (5% above the
    largest observed value), which keeps one config usable across bands
    with very different geometry.
    """

    gap_star: float = 10.0
    ttc_star: float = 4.0
    v_star: float = 20.0
    v_max: float | None = None
    gap_max: float | None = None
    n_v: int = 64
    n_gap: int = 64
    lambda_bound: float = LAMBDA_MAX
    min_obs: int = 200
    max_nfev: int = 300
    ttc_cap: float = 30.0

    def __post_init__(self):
        for name in ("v_max", "gap_max"):
            val = getattr(self, name)
            if val is not None and not (math.isfinite(val) and val > 0):
                raise ConfigError(f"fit.{name} must be > 0 or null, got {val!r}")
        if self.n_v < 2 or self.n_gap < 2:
            raise ConfigError("fit grid needs at least 2 cells per axis")
        if not (0.0 < self.lambda_bound <= LAMBDA_MAX):
            raise ConfigError(
                f"fit.lambda_bound must lie in (0, {LAMBDA_MAX}], "
                f"got {self.lambda_bound!r}")
        if not (math.isfinite(self.ttc_cap) and self.ttc_cap > 0):
            raise ConfigError(f"fit.ttc_cap must be > 0, got {self.ttc_cap!r}")
        if self.min_obs < 2:
            raise ConfigError(f"fit.min_obs must be >= 2, got {self.min_obs!r}")
        if self.max_nfev < 1:
            raise ConfigError(f"fit.max_nfev must be >= 1, got {self.max_nfev!r}")

    def to_dict(self) -> dict:
        return {
            "gap_star": self.gap_star, "ttc_star": self.ttc_star,
            "v_star": self.v_star, "v_max": self.v_max,
            "gap_max": self.gap_max, "n_v": self.n_v, "n_gap": self.n_gap,
            "lambda_bound": self.lambda_bound, "min_obs": self.min_obs,
            "max_nfev": self.max_nfev, "ttc_cap": self.ttc_cap,
        }


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI command needs, resolved and validated."""

    scenario: ScenarioConfig
    utility: UtilitySpec
    grid: GridSpec
    rare: RareEventSpec
    nominal: MixedPolicyParams
    estimator: EstimatorSettings
    sa: SAConfig
    ce: CEParams
    fit: FitSettings
    synth: SyntheticDatasetSpec
    seed: int = 0
    output_dir: str = "runs"

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed!r}")

    def scene(self) -> Scene:
        return Scene(self.scenario, self.utility, self.grid, self.rare)

    def sa_config(self) -> SAConfig:
        """Annealing settings with the run seed injected."""
        return replace(self.sa, seed=self.seed)

    def to_dict(self) -> dict:
        sa = self.sa.to_dict()
        # The run-level seed is the single source of randomness; the sa
        # section carries no seed of its own in the document form.
        sa.pop("seed")
        return {
            "scenario": self.scenario.to_dict(),
            "utility": {"gap_star": self.utility.gap_star,
                        "ttc_star": self.utility.ttc_star,
                        "v_star": self.utility.v_star},
            "grid": self.grid.to_dict(),
            "rare": self.rare.to_dict(),
            "nominal": self.nominal.to_dict(),
            "estimator": self.estimator.to_dict(),
            "sa": sa,
            "ce": self.ce.to_dict(),
            "fit": self.fit.to_dict(),
            "synth": self.synth.to_dict(),
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = sorted(set(d) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        sa = dict(d.get("sa", {}))
        if "seed" in sa:
            raise ConfigError("sa.seed is not configurable; use the top-level seed")
        sa["seed"] = 0
        try:
            return cls(
                scenario=_section(ScenarioConfig.from_dict, d, "scenario"),
                utility=_section(lambda v: UtilitySpec(**v), d, "utility"),
                grid=_section(GridSpec.from_dict, d, "grid"),
                rare=_section(RareEventSpec.from_dict, d, "rare"),
                nominal=_section(MixedPolicyParams.from_dict, d, "nominal"),
                estimator=_section(lambda v: EstimatorSettings(**v), d, "estimator"),
                sa=_build("sa", lambda: SAConfig(**sa)),
                ce=_section(lambda v: CEParams(**v), d, "ce"),
                fit=_section(lambda v: FitSettings(**v), d, "fit"),
                synth=_section(SyntheticDatasetSpec.from_dict, d, "synth"),
                seed=d.get("seed", 0),
                output_dir=d.get("output_dir", "runs"),
            )
        except ConfigError:
            raise
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc


def _build(name: str, make):
    try:
        return make()
    except ConfigError:
        raise
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid {name} section: {exc}") from exc


def _section(parse, d: dict, name: str):
    return _build(name, lambda: parse(d[name]))


def default_config() -> RunConfig:
    """Calibrated showcase scene with moderate budgets."""
    scene = toy_scene()
    return RunConfig(
        scenario=scene.scenario,
        utility=scene.utility,
        grid=scene.grid,
        rare=scene.rare,
        nominal=TOY_NOMINAL_PARAMS,
        estimator=EstimatorSettings(),
        sa=toy_sa_config(),
        ce=toy_ce_params(),
        fit=FitSettings(),
        synth=demo_synthetic_spec(),
    )


def _merge(base: Any, override: Any) -> Any:
    if isinstance(base, dict) and isinstance(override, dict):
        out = dict(base)
        for key, val in override.items():
            out[key] = _merge(base.get(key), val) if key in base else val
        return out
    return override


def _parse_set(expr: str) -> tuple[list[str], Any]:
    if "=" not in expr:
        raise ConfigError(f"--set needs KEY.PATH=VALUE, got {expr!r}")
    path, _, raw = expr.partition("=")
    path = path.strip()
    if not path:
        raise ConfigError(f"--set needs a non-empty key path, got {expr!r}")
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return path.split("."), value


def apply_overrides(doc: dict, sets: list[str] | tuple[str, ...]) -> dict:
    """Apply dotted-path KEY=VALUE overrides to a config document.

    Values parse as JSON when possible (numbers, booleans, lists, null)
    and fall back to plain strings.  Paths must address existing keys;
    a typo fails loudly instead of silently adding a dead key.
    """
    doc = _merge(doc, {})
    for expr in sets:
        keys, value = _parse_set(expr)
        node = doc
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(f"--set path {'.'.join(keys)!r} does not exist")
            if not isinstance(node[key], dict):
                raise ConfigError(
                    f"--set path {'.'.join(keys)!r} descends into a non-object")
            node[key] = dict(node[key])
            node = node[key]
        leaf = keys[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"--set path {'.'.join(keys)!r} does not exist")
        node[leaf] = value
    return doc


def load_config(path: str | None = None, sets: tuple[str, ...] = (),
                seed: int | None = None,
                output_dir: str | None = None) -> RunConfig:
    """Resolve defaults, optional file, --set overrides and CLI flags."""
    doc = default_config().to_dict()
    if path is not None:
        try:
            file_doc = load_json(path)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except DataError as exc:
            raise ConfigError(str(exc)) from exc
        if not isinstance(file_doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        doc = _merge(doc, file_doc)
    doc = apply_overrides(doc, sets)
    if seed is not None:
        doc["seed"] = seed
    if output_dir is not None:
        doc["output_dir"] = output_dir
    return RunConfig.from_dict(doc)
