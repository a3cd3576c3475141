import json
import math
from fractions import Fraction

import numpy as np
import pytest

from locality_lab import io
from locality_lab.lattice import build_annulus_mesh, build_circle_mesh


def test_nan_metric_fails_check():
    res = io.ExperimentResult("x", {"d": float("nan")}, [io.Check("d", "<", 1.0)])
    assert not res.passed
    assert "d < 1" in res.failures()[0]


def test_missing_metric_fails_check():
    assert not io.ExperimentResult("x", {}, [io.Check("d", ">", 0.0)]).passed


def test_error_fails_result():
    res = io.ExperimentResult("x", {}, (), error="CausticError: boom")
    assert not res.passed and res.failures() == ["CausticError: boom"]


def test_to_jsonable_types():
    out = io.to_jsonable({"c": 1 + 2j, "a": np.arange(3), "f": Fraction(1, 3), "n": float("inf"), 1: np.float32(0.5)})
    assert out == {"c": [1.0, 2.0], "a": [0, 1, 2], "f": "1/3", "n": "inf", "1": 0.5}
    with pytest.raises(TypeError):
        io.to_jsonable(object())


def test_dumps_sorted_and_stable():
    a = io.dumps({"b": 1, "a": [1.5, 2j]})
    assert a == io.dumps({"a": [1.5, 2j], "b": 1})
    assert list(json.loads(a)) == ["a", "b"]


def test_result_dict_schema(tmp_path):
    res = io.ExperimentResult("x", {"m": 0.5}, [io.Check("m", "<", 1.0)], artifacts=[str(tmp_path / "a.csv")])
    d = res.to_dict()
    assert set(d) == {"name", "pass", "metrics", "tolerances", "failures", "artifacts", "details", "error"}
    assert d["pass"] is True and d["artifacts"] == ["a.csv"]
    assert d["tolerances"] == [{"metric": "m", "op": "<", "bound": 1.0}]


@pytest.mark.parametrize("mesh", [build_circle_mesh(16, 2.0), build_annulus_mesh(17, 64, 2.0, 4.0)], ids=["circle", "annulus"])
def test_mesh_roundtrip(mesh):
    back = io.mesh_from_dict(json.loads(io.dumps(io.mesh_to_dict(mesh))))
    assert back.same_as(mesh)


def test_svg_bytes_deterministic(tmp_path):
    x = np.linspace(0, 1, 20)
    p1 = io.line_plot(tmp_path / "a.svg", x, {"s": np.sin(x)}, "t", "x", "y")
    p2 = io.line_plot(tmp_path / "b.svg", x, {"s": np.sin(x)}, "t", "x", "y")
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_csv_roundtrip(tmp_path):
    p = io.write_csv(tmp_path / "t.csv", ["a", "b"], [(1, 0.25), (2, math.pi)])
    lines = open(p).read().splitlines()
    assert lines[0] == "a,b" and float(lines[2].split(",")[1]) == math.pi
