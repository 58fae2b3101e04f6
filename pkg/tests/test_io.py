import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entrodiff import Grid, State
from entrodiff.grid import Trajectory
from entrodiff.io import fmt, json_dumps, read_trajectory_csv, series_csv, sha256_file, trajectory_csv

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(finite)
def test_fmt_round_trips_exactly(x):
    assert float(fmt(x)) == x


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e300, allow_nan=False, width=64), min_size=12, max_size=12),
       st.lists(st.floats(0, 10, allow_nan=False), min_size=2, max_size=2, unique=True))
def test_trajectory_csv_round_trip_2d(values, times):
    g = Grid([3, 2])
    u = np.array(values).reshape(2, 3, 2)
    traj = Trajectory([State(t, u * 0.5**k, g) for k, t in enumerate(sorted(times))])
    back = read_trajectory_csv(trajectory_csv(traj, ["A", "B"]), g, ["A", "B"])
    assert np.array_equal(back.times, traj.times)
    for a, b in zip(traj, back):
        assert np.array_equal(a.u, b.u)


def test_trajectory_csv_layout():
    g = Grid([2])
    text = trajectory_csv(Trajectory([State(0.0, [[0.1, 0.2], [1.0, 2.0]], g)]), ["X", "Y"])
    assert text.splitlines() == ["t,species,i,value", "0,X,0,0.10000000000000001", "0,X,1,0.20000000000000001",
                                 "0,Y,0,1", "0,Y,1,2"]


def test_read_incomplete_snapshot():
    g = Grid([2])
    with pytest.raises(ValueError, match="incomplete"):
        read_trajectory_csv("t,species,i,value\n0,A,0,1\n", g, ["A"])


def test_series_csv():
    text = series_csv(["t", "E", "tag"], [(0.0, 1 / 3, "a"), (np.float64(0.5), np.int64(2), "b")])
    assert text == "t,E,tag\n0,0.33333333333333331,a\n0.5,2,b\n"


def test_json_dumps_plain_types():
    doc = {"a": np.arange(3), "b": np.float64(0.1), "c": np.bool_(True), "d": (np.int32(4),), "e": math.inf, 5: "k"}
    back = json.loads(json_dumps(doc))
    assert back == {"a": [0, 1, 2], "b": 0.1, "c": True, "d": [4], "e": "inf", "5": "k"}
    assert json_dumps({"x": 1}).endswith("}\n")


def test_sha256_file(tmp_path):
    p = tmp_path / "f"
    p.write_bytes(b"abc")
    assert sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
