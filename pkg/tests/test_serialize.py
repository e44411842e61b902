"""Tests for deterministic JSON and CSV artifact writers."""

import io
import json

import numpy as np
import pytest

from cutinsim.annealing import SATraceRow
from cutinsim.cross_entropy import CEIteration
from cutinsim.errors import DataError
from cutinsim.scenario import CutInAction, SubjectState, rollout
from cutinsim.presets import toy_scene
from cutinsim.serialize import (
    csv_to_string,
    dumps_json,
    load_json,
    save_json,
    to_plain,
    write_ce_trace_csv,
    write_sa_trace_csv,
    write_samples_csv,
    write_trajectory_csv,
)


def test_to_plain_converts_numpy_and_to_dict_objects():
    class Box:
        def to_dict(self):
            return {"x": np.float64(1.5), "y": (np.int32(2), np.bool_(True))}

    assert to_plain(Box()) == {"x": 1.5, "y": [2, True]}
    assert to_plain(np.arange(3)) == [0, 1, 2]
    with pytest.raises(DataError, match="keys must be strings"):
        to_plain({1: "x"})
    with pytest.raises(DataError, match="cannot serialize"):
        to_plain(object())


def test_dumps_json_is_canonical():
    text = dumps_json({"b": 1, "a": [0.1, 2]})
    assert text == '{\n  "a": [\n    0.1,\n    2\n  ],\n  "b": 1\n}\n'
    assert json.loads(text) == {"a": [0.1, 2], "b": 1}


def test_json_float_round_trip(tmp_path):
    vals = {"x": 0.1 + 0.2, "y": 1e-300, "z": 123456.789012345678}
    path = tmp_path / "f.json"
    save_json(vals, path)
    assert load_json(path) == vals


def test_load_json_errors(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        load_json(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(DataError, match="invalid JSON"):
        load_json(bad)


def test_trajectory_csv_shape():
    scene = toy_scene()
    traj = rollout(SubjectState(22.0), CutInAction(12.0, 0.8), scene)
    text = csv_to_string(write_trajectory_csv, traj)
    lines = text.strip().split("\n")
    assert lines[0] == "t,subject_pos,subject_vel,target_pos,target_vel,gap"
    assert len(lines) == 1 + len(traj.times)
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[2]) == 22.0
    # the action's gap applies at lane crossing, i.e. after the ramp steps
    ramp = scene.scenario.ramp_steps
    assert float(lines[1 + ramp].split(",")[5]) == pytest.approx(0.8)


def test_sa_trace_csv_booleans_and_order():
    rows = [
        SATraceRow(0, "B1", (-1.0, -2.0, 3.0), 0.25, True, 0.02),
        SATraceRow(1, "B4", (2.0, -1.0, -3.0), 0.125, False, 0.019),
    ]
    text = csv_to_string(write_sa_trace_csv, rows)
    lines = text.strip().split("\n")
    assert lines[0] == ("iteration,bid,lam_gap,lam_ttc,lam_progress,"
                        "rate,accepted,temperature")
    assert lines[1] == "0,B1,-1.0,-2.0,3.0,0.25,1,0.02"
    assert lines[2].startswith("1,B4,2.0,-1.0,-3.0,0.125,0,")


def test_ce_trace_csv_columns():
    rows = [CEIteration(0, 0.5, 20, 3, (10.0, 6.0, 0.7, 0.5))]
    text = csv_to_string(write_ce_trace_csv, rows)
    lines = text.strip().split("\n")
    assert lines[0] == "index,level,n_elite,n_events,v_mean,v_std,gap_mean,gap_std"
    assert lines[1] == "0,0.5,20,3,10.0,6.0,0.7,0.5"


def test_samples_csv_from_structured_batches():
    dtype = [("speed", float), ("v_lc", float), ("gap", float),
             ("event", bool), ("weight", float)]
    batch = np.array([(21.0, 10.0, 0.5, True, 0.25),
                      (22.0, 11.0, 0.7, False, 0.0)], dtype=dtype)
    text = csv_to_string(write_samples_csv, [batch, batch[:1]])
    lines = text.strip().split("\n")
    assert lines[0] == "speed,v_lc,gap,event,weight"
    assert len(lines) == 4
    assert lines[1] == "21.0,10.0,0.5,1,0.25"
    assert lines[2] == "22.0,11.0,0.7,0,0.0"


def test_writers_accept_paths(tmp_path):
    rows = [SATraceRow(0, "B1", (1.0, 2.0, 3.0), 0.5, True, 0.01)]
    path = tmp_path / "trace.csv"
    write_sa_trace_csv(rows, path)
    buf = io.StringIO()
    write_sa_trace_csv(rows, buf)
    assert path.read_text() == buf.getvalue()
