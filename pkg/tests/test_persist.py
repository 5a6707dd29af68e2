import json
import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from gibbsmix.persist import dumps_json, format_float, sha256_file, write_csv, write_manifest


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip(x):
    assert float(format_float(x)) == x


def test_json_is_stable_and_plain():
    obj = {"b": np.float64(0.1), "a": [np.int64(3), True, None], "c": (1.5, "x")}
    text = dumps_json(obj)
    assert text == dumps_json(obj)
    assert list(json.loads(text)) == ["b", "a", "c"]
    assert json.loads(text)["b"] == 0.1
    assert '"Infinity"' in dumps_json({"v": math.inf})


def test_csv_format(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "b", "c"], [(1, 0.1, True), (2, 1e-300, False)])
    assert p.read_bytes() == b"a,b,c\n1,0.10000000000000001,true\n2,1e-300,false\n"


def test_manifest_lists_every_file(tmp_path):
    (tmp_path / "sub").mkdir()
    write_csv(tmp_path / "one.csv", ["x"], [(1,)])
    write_csv(tmp_path / "sub" / "two.csv", ["x"], [(2,)])
    m = write_manifest(tmp_path, {"seed": 1}, "sample", {"sample": "pass"}, 0.0, "0")
    data = json.loads(m.read_text())
    paths = {f["path"]: f["sha256"] for f in data["files"]}
    assert set(paths) == {"one.csv", "sub/two.csv"}
    assert paths["one.csv"] == sha256_file(tmp_path / "one.csv")
