"""Synthetic naturalistic datasets with known ground-truth parameters.

Real naturalistic cut-in corpora are not shipped with the package, so the
fitting pipeline is exercised against data synthesized from mixed policies
whose parameters are known exactly.  Each speed band carries its own
ground truth and subject-speed marginal.
"""

from __future__ import annotations

from dataclasses import dataclass

from .behavior_model import generate_situations
from .errors import DomainError
from .grid import GridSpec
from .observations import SPEED_BANDS, ObservationSet, band_of
from .policy import MixedPolicyParams, UtilitySpec
from .scenario import DiscreteSpeedDist

__all__ = ["BandSpec", "SyntheticDatasetSpec", "synthesize"]


@dataclass(frozen=True)
class BandSpec:
    """Ground truth for one speed band of a synthetic dataset."""

    params: MixedPolicyParams
    speed_dist: DiscreteSpeedDist
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise DomainError(f"band sample count must be >= 0, got {self.n}")

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(),
                "speed_dist": self.speed_dist.to_dict(), "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "BandSpec":
        return cls(MixedPolicyParams.from_dict(d["params"]),
                   DiscreteSpeedDist.from_dict(d["speed_dist"]), int(d["n"]))


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    """Per-band ground truth plus the shared utility and grid geometry.

    Every band's speed values must actually lie in that band, otherwise
    the generated records would be re-binned into a different band on
    read-back and the ground truth would no longer describe them.
    """

    bands: dict
    uspec: UtilitySpec = UtilitySpec()
    gspec: GridSpec = GridSpec(v_max=40.0, gap_max=60.0, n_v=64, n_gap=64)

    def __post_init__(self):
        if not self.bands:
            raise DomainError("synthetic dataset needs at least one band")
        for band, spec in self.bands.items():
            if band not in SPEED_BANDS:
                raise DomainError(f"unknown speed band {band!r}")
            if not isinstance(spec, BandSpec):
                raise DomainError(f"band {band} entry must be a BandSpec")
            for v in spec.speed_dist.values:
                if band_of(v) != band:
                    raise DomainError(
                        f"speed {v} assigned to band {band} falls in "
                        f"band {band_of(v)}"
                    )

    def to_dict(self) -> dict:
        return {
            "bands": {b: s.to_dict() for b, s in sorted(self.bands.items())},
            "uspec": {"gap_star": self.uspec.gap_star,
                      "ttc_star": self.uspec.ttc_star,
                      "v_star": self.uspec.v_star},
            "gspec": self.gspec.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticDatasetSpec":
        u = d.get("uspec", {})
        uspec = UtilitySpec(float(u.get("gap_star", 10.0)),
                            float(u.get("ttc_star", 4.0)),
                            float(u.get("v_star", 20.0)))
        gspec = GridSpec.from_dict(d["gspec"]) if "gspec" in d \
            else GridSpec(40.0, 60.0, 64, 64)
        bands = {b: BandSpec.from_dict(s) for b, s in d["bands"].items()}
        return cls(bands, uspec, gspec)


def synthesize(spec: SyntheticDatasetSpec, seed: int) -> ObservationSet:
    """Draw the full synthetic dataset, bands concatenated in LOW/MED/HIGH order.

    Each band consumes an independent seeded stream, so adding or resizing
    one band never perturbs the records of another.
    """
    out = ObservationSet.empty()
    for index, band in enumerate(SPEED_BANDS):
        if band not in spec.bands:
            continue
        bs = spec.bands[band]
        part = generate_situations(
            bs.params, bs.n, bs.speed_dist, seed,
            uspec=spec.uspec, gspec=spec.gspec, stream_index=index,
        )
        out = out.concat(part)
    return out
