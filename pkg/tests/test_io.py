import json

import numpy as np
from hypothesis import given, settings, strategies as st

from bvdamage import io
from bvdamage.config import parse_config
from bvdamage.scenarios import SCENARIOS, get_scenario


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_csv_round_trip_is_exact(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("csv") / "a.csv"
    io.write_csv(path, ["k", "x"], [[i, x] for i, x in enumerate(xs)])
    cols = io.read_csv(path)
    assert cols["k"].dtype.kind == "i"
    np.testing.assert_array_equal(cols["x"], np.array(xs, dtype=float))


def test_number_format():
    assert io._fmt(0.1) == "0.10000000000000001"
    assert io._fmt(3) == "3" and io._fmt(np.int64(4)) == "4"
    assert io._fmt(float("nan")) == "nan" and io._fmt(-np.inf) == "-inf"
    assert "," not in io._fmt(1234567.5)


def test_snapshot_round_trip(tmp_path):
    x = np.linspace(0, 1, 5)
    z = np.array([1.0, 0.9, 1 / 3, 0.25, 0.0])
    io.write_snapshot(tmp_path / "z.csv", x, z)
    np.testing.assert_array_equal(io.read_snapshot(tmp_path / "z.csv"), z)


def test_json_sorted_and_non_finite(tmp_path):
    io.write_json(tmp_path / "a.json", {"b": np.arange(3), "a": np.float64(np.nan), "c": {"z": np.int32(2)}})
    text = (tmp_path / "a.json").read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": "nan", "b": [0, 1, 2], "c": {"z": 2}}


def test_scenarios_serialize():
    for name in SCENARIOS:
        sc = get_scenario(name)
        assert json.loads(json.dumps(sc.to_dict()))["name"] == sc.name
        assert sc.initial_state().shape == (sc.n_elements + 1,)


def test_config_defaults():
    cfg = parse_config({})
    assert cfg.scenario.name == "two_well"
    assert cfg.sample_grid().size == 101 and cfg.sample_grid()[-1] == 2.0
    cfg = parse_config({"scenario": "default", "sweep": {"sample_times": [0.0, 0.5]}, "workers": 3})
    assert cfg.sample_times == (0.0, 0.5) and cfg.workers == 3
    assert cfg.scenario.material.g_kind == "clamped_quadratic"
