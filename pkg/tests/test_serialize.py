"""Artifact round-trips and formatting."""

import numpy as np

from thinobstacle import GridSpec, build_grid, make_perturbed, model_solution, serialize
from thinobstacle.solver import SolutionField


def test_field_round_trip(tmp_path):
    g = build_grid(GridSpec(dim=2, h=1.0 / 32))
    vals = model_solution(g)
    vals[~g.active] = 0.0
    w = SolutionField(grid=g, values=vals, mode="boundary_zero")
    stem = str(tmp_path / "field")
    serialize.save_field(stem, w)
    back = serialize.load_field(stem)
    assert back.mode == "boundary_zero"
    assert back.grid.shape == g.shape
    assert np.array_equal(back.values, w.values)


def test_metric_round_trip(tmp_path):
    g = build_grid(GridSpec(dim=2, h=1.0 / 32, half=True))
    m = make_perturbed(g, 0.03, (3.0, 2.0), p=8.0)
    stem = str(tmp_path / "metric")
    serialize.save_metric(stem, m)
    back = serialize.load_metric(stem)
    assert np.array_equal(back.a, m.a)
    assert back.p == 8.0
    assert np.isclose(back.cstar, m.cstar)


def test_grid_export(tmp_path):
    g = build_grid(GridSpec(dim=2, h=0.25))
    stem = str(tmp_path / "grid")
    serialize.save_grid(stem, g)
    header = serialize.load_json(stem + ".json")
    assert header["kind"] == "grid"
    assert header["array"]["shape"] == [g.active.size, 3]


def test_json_17_digits(tmp_path):
    path = str(tmp_path / "x.json")
    serialize.dump_json(path, {"v": 1.0 / 3.0, "nan": np.nan, "inf": np.inf})
    with open(path) as fh:
        text = fh.read()
    assert "0.33333333333333331" in text
    assert '"nan"' in text
    back = serialize.load_json(path)
    assert back["v"] == 1.0 / 3.0
    assert np.isnan(back["nan"]) and np.isinf(back["inf"])


def test_csv_export(tmp_path):
    path = str(tmp_path / "pts.csv")
    serialize.save_points_csv(path, np.array([[0.5, 0.25], [1.0, -1.0]]), ["a", "b"])
    lines = open(path).read().strip().splitlines()
    assert lines[0] == "a,b"
    assert len(lines) == 3
