"""Deterministic JSON and CSV writers for run artifacts.

All writers produce byte-identical output for equal inputs: JSON is
emitted with sorted keys and fixed 17-significant-digit floats (exact
round-trip), CSV uses repr() floats and a bare "\n" terminator on every
platform.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from typing import IO, Any, Iterable

import numpy as np

from .annealing import SATraceRow
from .behavior_model import QQResult
from .cross_entropy import CEIteration
from .errors import DataError
from .scenario import Trajectory

__all__ = [
    "to_plain",
    "dumps_json",
    "save_json",
    "load_json",
    "write_trajectory_csv",
    "write_sa_trace_csv",
    "write_ce_trace_csv",
    "write_samples_csv",
    "write_qq_csv",
]

SAMPLES_HEADER = ("speed", "v_lc", "gap", "event", "weight")
TRAJECTORY_HEADER = ("t", "subject_pos", "subject_vel", "target_pos",
                     "target_vel", "gap")
SA_TRACE_HEADER = ("iteration", "bid", "lam_gap", "lam_ttc", "lam_progress",
                   "rate", "accepted", "temperature")
CE_TRACE_HEADER = ("index", "level", "n_elite", "n_events",
                   "v_mean", "v_std", "gap_mean", "gap_std")
QQ_HEADER = ("prob_level", "theoretical", "empirical")


def to_plain(obj: Any) -> Any:
    """Recursively convert to JSON-encodable builtins.

    Handles numpy scalars and arrays, tuples, and objects exposing
    to_dict().  Dict keys must already be strings.
    """
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if not isinstance(k, str):
                raise DataError(f"JSON object keys must be strings, got {k!r}")
            out[k] = to_plain(v)
        return out
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return to_plain(obj.to_dict())
    raise DataError(f"cannot serialize object of type {type(obj).__name__}")


def _float_token(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    # 17 significant digits round-trip every double exactly; keep a
    # fractional marker so the token parses back as a float, not an int.
    if not any(c in s for c in ".eE"):
        s += ".0"
    return s


def _emit(obj: Any, depth: int) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return repr(obj)
    if isinstance(obj, float):
        return _float_token(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    pad = "  " * depth
    inner = "  " * (depth + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{inner}{json.dumps(k, ensure_ascii=False)}: "
                 f"{_emit(obj[k], depth + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        parts = [f"{inner}{_emit(v, depth + 1)}" for v in obj]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    raise DataError(f"cannot serialize object of type {type(obj).__name__}")


def dumps_json(obj: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, 17-significant-
    digit floats, final newline."""
    return _emit(to_plain(obj), 0) + "\n"


def save_json(obj: Any, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_json(obj))


def load_json(path: str | os.PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise DataError(f"cannot read JSON: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _writer(f: IO[str]):
    return csv.writer(f, lineterminator="\n")


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(f: IO[str] | str | os.PathLike, header: tuple[str, ...],
                rows: Iterable[tuple]) -> None:
    if isinstance(f, (str, os.PathLike)):
        with open(f, "w", encoding="utf-8", newline="") as fh:
            _write_rows(fh, header, rows)
        return
    w = _writer(f)
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def write_trajectory_csv(traj: Trajectory, f: IO[str] | str | os.PathLike) -> None:
    """One row per time step of a single rollout."""
    rows = zip(traj.times, traj.subject_pos, traj.subject_vel,
               traj.target_pos, traj.target_vel, traj.gap_series)
    _write_rows(f, TRAJECTORY_HEADER, rows)


def write_sa_trace_csv(trace: Iterable[SATraceRow],
                       f: IO[str] | str | os.PathLike) -> None:
    """One row per annealing evaluation."""
    rows = ((r.iteration, r.bid, r.lam[0], r.lam[1], r.lam[2],
             r.rate, r.accepted, r.temperature) for r in trace)
    _write_rows(f, SA_TRACE_HEADER, rows)


def write_ce_trace_csv(trace: Iterable[CEIteration],
                       f: IO[str] | str | os.PathLike) -> None:
    """One row per cross-entropy iteration."""
    rows = ((r.index, r.level, r.n_elite, r.n_events,
             r.theta[0], r.theta[1], r.theta[2], r.theta[3]) for r in trace)
    _write_rows(f, CE_TRACE_HEADER, rows)


def write_samples_csv(batches: Iterable[np.ndarray],
                      f: IO[str] | str | os.PathLike) -> None:
    """Per-sample log from an estimator's sample sink.

    Each batch is a structured array with speed/v_lc/gap/event/weight
    fields; weights are post-indicator (zero on non-events).
    """
    def rows():
        for batch in batches:
            for rec in batch:
                yield (rec["speed"], rec["v_lc"], rec["gap"],
                       bool(rec["event"]), rec["weight"])
    _write_rows(f, SAMPLES_HEADER, rows())


def write_qq_csv(qq: QQResult, f: IO[str] | str | os.PathLike) -> None:
    """Quantile pairs of one metric at the evaluated probability levels."""
    _write_rows(f, QQ_HEADER, qq.rows())


def csv_to_string(write, *args) -> str:
    """Run a writer function into a string, for tests and stdout output."""
    buf = io.StringIO()
    write(*args, buf)
    return buf.getvalue()
