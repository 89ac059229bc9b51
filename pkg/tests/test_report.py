import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bicog.report import SCHEMA_VERSION, dumps, read_jsonl, write_json, write_jsonl


def test_sorted_keys_and_compact_layout():
    assert dumps({"b": 1, "a": [True, None, "x"]}) == '{"a":[true,null,"x"],"b":1}'


def test_floats_keep_a_decimal_point():
    assert dumps(1.0) == "1.0"
    assert dumps(np.float32(0.5)) == "0.5"
    assert dumps(np.int64(3)) == "3"


def test_non_finite_floats_rejected():
    with pytest.raises(ValueError):
        dumps({"x": math.nan})
    with pytest.raises(ValueError):
        dumps([math.inf])


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip_is_exact(x):
    assert json.loads(dumps(x)) == x


def test_files_carry_schema_version(tmp_path):
    write_json(tmp_path / "a.json", {"v": 0.1})
    write_jsonl(tmp_path / "h.jsonl", [{"r": 1}, {"r": 2}])
    assert json.loads((tmp_path / "a.json").read_text())["schema_version"] == SCHEMA_VERSION
    rows = read_jsonl(tmp_path / "h.jsonl")
    assert [r["schema_version"] for r in rows] == [SCHEMA_VERSION] * 2
