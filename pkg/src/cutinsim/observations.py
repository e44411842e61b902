"""Observed cut-in records and their CSV interchange format.

An observation is one lane-change seen from the vehicle being cut in front
of: the subject's speed, the cutting vehicle's speed and gap at lane
crossing, and the time to collision implied by them.  Records are grouped
into three subject-speed bands that are modeled independently.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError
from .policy import _ttc_values
from .scenario import DiscreteSpeedDist

__all__ = [
    "SPEED_BANDS",
    "CSV_HEADER",
    "band_of",
    "ObservationSet",
    "read_observations",
    "write_observations",
]

logger = logging.getLogger(__name__)

SPEED_BANDS = ("LOW", "MED", "HIGH")

# Band edges in m/s over the subject speed: LOW <= 15 < MED <= 25 < HIGH.
_LOW_EDGE = 15.0
_MED_EDGE = 25.0

CSV_HEADER = ("v_s", "v_lc", "gap", "ttc")

# A reported ttc must match gap / closing speed to this relative tolerance
# unless the set is declared sensor-given.
_TTC_RTOL = 1e-6

# Subject speeds are binned at this resolution when a band's empirical
# speed marginal is built, so arbitrary continuous data yields a bounded
# number of grid states.
SPEED_BIN = 0.25


def band_of(v_s: float) -> str:
    """Speed band of a subject speed: LOW <= 15 < MED <= 25 < HIGH [m/s]."""
    v_s = float(v_s)
    if not math.isfinite(v_s) or v_s < 0:
        raise DomainError(f"subject speed must be finite and >= 0, got {v_s!r}")
    if v_s <= _LOW_EDGE:
        return "LOW"
    if v_s <= _MED_EDGE:
        return "MED"
    return "HIGH"


def _check_record(v_s: float, v_lc: float, gap: float, ttc: float,
                  sensor_given: bool) -> str | None:
    """Reason the record violates the invariants, or None when valid."""
    for name, val in (("v_s", v_s), ("v_lc", v_lc), ("gap", gap)):
        if math.isnan(val) or math.isinf(val) or val < 0:
            return f"{name} must be finite and >= 0, got {val!r}"
    if math.isnan(ttc) or ttc < 0:
        return f"ttc must be >= 0 (possibly inf), got {ttc!r}"
    if not sensor_given:
        expected = float(_ttc_values(v_s, v_lc, gap))
        if math.isinf(expected) or math.isinf(ttc):
            if expected != ttc:
                return (f"ttc {ttc!r} inconsistent with gap/closing-speed "
                        f"value {expected!r}")
        elif abs(ttc - expected) > _TTC_RTOL * max(1.0, abs(expected)):
            return (f"ttc {ttc!r} inconsistent with gap/closing-speed "
                    f"value {expected!r}")
    return None


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Columnar set of cut-in observations.

    ``sensor_given`` marks the ttc column as measured rather than derived,
    which disables the consistency check against gap / closing speed.
    """

    v_s: np.ndarray
    v_lc: np.ndarray
    gap: np.ndarray
    ttc: np.ndarray
    sensor_given: bool = False
    _bands: tuple = field(repr=False, default=None)

    def __post_init__(self):
        cols = []
        for name in ("v_s", "v_lc", "gap", "ttc"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            cols.append(arr)
            object.__setattr__(self, name, arr)
        v_s, v_lc, gap, ttc = cols
        n = len(v_s)
        if any(len(c) != n for c in cols):
            raise DataError("observation columns must have equal length")
        if n:
            ok = (np.isfinite(v_s) & (v_s >= 0) & np.isfinite(v_lc)
                  & (v_lc >= 0) & np.isfinite(gap) & (gap >= 0)
                  & ~np.isnan(ttc) & (ttc >= 0))
            if not self.sensor_given:
                expected = _ttc_values(v_s, v_lc, gap)
                # inf - inf is nan, so the non-closing case needs its own arm.
                with np.errstate(invalid="ignore"):
                    consistent = np.where(
                        np.isinf(expected) | np.isinf(ttc),
                        np.isinf(expected) & np.isinf(ttc),
                        np.abs(ttc - expected)
                        <= _TTC_RTOL * np.maximum(1.0, np.abs(expected)),
                    )
                ok &= consistent
            if not ok.all():
                i = int(np.argmin(ok))
                reason = _check_record(v_s[i], v_lc[i], gap[i], ttc[i],
                                       self.sensor_given)
                raise DataError(f"observation {i}: {reason}")
        object.__setattr__(
            self, "_bands",
            tuple(band_of(v) for v in v_s) if n else (),
        )

    def __len__(self) -> int:
        return len(self.v_s)

    @classmethod
    def empty(cls) -> "ObservationSet":
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    @property
    def bands(self) -> tuple:
        """Per-record speed band labels."""
        return self._bands

    def band_counts(self) -> dict:
        counts = {band: 0 for band in SPEED_BANDS}
        for band in self._bands:
            counts[band] += 1
        return counts

    def select_band(self, band: str) -> "ObservationSet":
        """Subset of records whose subject speed falls in ``band``."""
        if band not in SPEED_BANDS:
            raise DomainError(f"unknown speed band {band!r}")
        mask = np.array([b == band for b in self._bands], dtype=bool)
        return ObservationSet(self.v_s[mask], self.v_lc[mask],
                              self.gap[mask], self.ttc[mask],
                              self.sensor_given)

    def speed_marginal(self, bin_width: float = SPEED_BIN) -> DiscreteSpeedDist:
        """Empirical subject-speed distribution, binned to ``bin_width``.

        Bin centers carry the empirical frequencies, so downstream grids
        see a bounded number of distinct speeds even for continuous data.
        """
        if len(self) == 0:
            raise DataError("cannot build a speed marginal from zero observations")
        if not (bin_width > 0 and math.isfinite(bin_width)):
            raise DomainError(f"bin_width must be finite and > 0, got {bin_width!r}")
        idx = np.floor(self.v_s / bin_width).astype(int)
        uniq, counts = np.unique(idx, return_counts=True)
        values = (uniq + 0.5) * bin_width
        probs = counts / counts.sum()
        # Guard the simplex-sum invariant against float accumulation.
        probs[-1] += 1.0 - probs.sum()
        return DiscreteSpeedDist(tuple(values), tuple(probs))

    def concat(self, other: "ObservationSet") -> "ObservationSet":
        if self.sensor_given != other.sensor_given:
            raise DataError("cannot concatenate sets with different ttc provenance")
        return ObservationSet(
            np.concatenate([self.v_s, other.v_s]),
            np.concatenate([self.v_lc, other.v_lc]),
            np.concatenate([self.gap, other.gap]),
            np.concatenate([self.ttc, other.ttc]),
            self.sensor_given,
        )


def _parse_rows(reader, sensor_given: bool):
    """Yield (lineno, parsed-or-None, reason) for each data row."""
    for lineno, row in enumerate(reader, start=2):
        if len(row) == 0:
            continue
        if len(row) != 4:
            yield lineno, None, f"expected 4 fields, got {len(row)}"
            continue
        try:
            vals = tuple(float(x) for x in row)
        except ValueError as exc:
            yield lineno, None, str(exc)
            continue
        reason = _check_record(*vals, sensor_given)
        if reason is not None:
            yield lineno, None, reason
        else:
            yield lineno, vals, None


def read_observations(source, *, sensor_given: bool = False,
                      strict: bool = True) -> ObservationSet:
    """Read an observations CSV with header ``v_s,v_lc,gap,ttc``.

    Rows that fail the record invariants are rejected with line-numbered
    diagnostics: in strict mode (the default) any rejection raises
    DataError listing every offending line; otherwise rejected rows are
    logged and skipped.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        try:
            handle = open(source, newline="", encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read observations: {exc}") from exc
        with handle:
            return read_observations(handle, sensor_given=sensor_given,
                                     strict=strict)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("observations CSV is empty") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise DataError(
            f"observations CSV header must be exactly "
            f"{','.join(CSV_HEADER)!r}, got {','.join(header)!r}"
        )
    good, rejects = [], []
    for lineno, vals, reason in _parse_rows(reader, sensor_given):
        if vals is None:
            rejects.append((lineno, reason))
        else:
            good.append(vals)
    if rejects:
        report = "; ".join(f"line {ln}: {why}" for ln, why in rejects)
        if strict:
            raise DataError(f"{len(rejects)} rejected observation row(s): {report}")
        for ln, why in rejects:
            logger.warning("rejected observation row at line %d: %s", ln, why)
    if not good:
        raise DataError("observations CSV contains no valid data rows")
    arr = np.array(good, dtype=float)
    return ObservationSet(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                          sensor_given)


def write_observations(obs: ObservationSet, target) -> None:
    """Write the observations CSV (header ``v_s,v_lc,gap,ttc``).

    Floats are written with repr precision so a read-back round trip is
    exact; non-closing records carry ``inf`` in the ttc column.
    """
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "w", newline="", encoding="utf-8") as handle:
            write_observations(obs, handle)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for i in range(len(obs)):
        writer.writerow([repr(float(obs.v_s[i])), repr(float(obs.v_lc[i])),
                         repr(float(obs.gap[i])), repr(float(obs.ttc[i]))])


def observations_to_string(obs: ObservationSet) -> str:
    """CSV text of the set, used for byte-stable artifact writing."""
    buf = io.StringIO()
    write_observations(obs, buf)
    return buf.getvalue()
