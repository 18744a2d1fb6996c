import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdil.archive import (
    Elite,
    GridArchive,
    export_heatmap,
    fitness_grid,
    load_snapshot,
    save_snapshot,
)

from oracles import replay_max_archive


def _elite(fitness, measure, dim=3):
    return Elite(params=np.full(dim, fitness), fitness=fitness, measure=np.asarray(measure))


def test_cell_index_basics():
    a = GridArchive(resolution=10)
    assert a.cell_index([0.0, 0.0]) == (0, 0)
    assert a.cell_index([0.09999, 0.1]) == (0, 1)
    assert a.cell_index([0.999, 0.5]) == (9, 5)
    assert a.cell_index([1.0, 1.0]) == (9, 9)  # top edge belongs to the last cell
    with pytest.raises(ValueError):
        a.cell_index([-0.01, 0.5])
    with pytest.raises(ValueError):
        a.cell_index([0.5, 1.01])
    with pytest.raises(ValueError):
        GridArchive(resolution=0)


def test_insert_semantics():
    a = GridArchive(resolution=4)
    imp = a.insert(_elite(2.0, [0.1, 0.1]))
    assert imp == 2.0  # empty cell: fitness minus floor (0)
    assert a.insert(_elite(1.5, [0.12, 0.13])) == 0.0  # worse, same cell
    assert a.insert(_elite(2.0, [0.12, 0.13])) == 0.0  # ties do not replace
    assert a.insert(_elite(3.25, [0.12, 0.13])) == pytest.approx(1.25)
    assert len(a) == 1
    assert a.cells[(0, 0)].fitness == 3.25
    assert a.change_count == 2

    floored = GridArchive(resolution=4, fitness_floor=-5.0)
    assert floored.insert(_elite(-2.0, [0.5, 0.5])) == 3.0


def test_insert_clamps_measure_drift():
    a = GridArchive(resolution=4)
    a.insert(_elite(1.0, [1.0 + 1e-12, -1e-12]))
    assert (3, 0) in a.cells


def test_insert_copies_params():
    a = GridArchive(resolution=4)
    p = np.ones(3)
    a.insert(Elite(params=p, fitness=1.0, measure=np.array([0.5, 0.5])))
    p[0] = 99.0
    assert a.cells[(2, 2)].params[0] == 1.0


def test_thousand_inserts_match_replay_oracle():
    rng = np.random.default_rng(2024)
    a = GridArchive(resolution=20)
    inserts = []
    for _ in range(1000):
        fitness = float(rng.uniform(0.0, 50.0))
        measure = rng.uniform(0.0, 1.0, size=2)
        inserts.append((fitness, measure))
        a.insert(_elite(fitness, measure))
    expected = replay_max_archive(20, inserts)
    got = {k: e.fitness for k, e in a.cells.items()}
    assert got == expected


def test_metrics_monotone_under_nonnegative_fitness():
    rng = np.random.default_rng(7)
    a = GridArchive(resolution=8)
    prev_qd, prev_cov = 0.0, 0.0
    for _ in range(300):
        a.insert(_elite(float(rng.uniform(0, 10)), rng.uniform(0, 1, 2)))
        m = a.metrics()
        assert m["qd_score"] >= prev_qd - 1e-12
        assert m["coverage"] >= prev_cov
        prev_qd, prev_cov = m["qd_score"], m["coverage"]


def test_metrics_values():
    a = GridArchive(resolution=2)
    assert a.metrics() == {"qd_score": 0.0, "coverage": 0.0, "best": None, "average": None}
    a.insert(_elite(1.0, [0.1, 0.1]))
    a.insert(_elite(3.0, [0.9, 0.9]))
    m = a.metrics()
    assert m == {"qd_score": 4.0, "coverage": 50.0, "best": 3.0, "average": 2.0}


def test_sample_occupied_deterministic_and_errors():
    a = GridArchive(resolution=4)
    with pytest.raises(ValueError):
        a.sample_occupied(np.random.default_rng(0))
    for f, m in [(1.0, [0.1, 0.1]), (2.0, [0.6, 0.6]), (3.0, [0.9, 0.2])]:
        a.insert(_elite(f, m))
    picks1 = [a.sample_occupied(np.random.default_rng(s)).fitness for s in range(20)]
    picks2 = [a.sample_occupied(np.random.default_rng(s)).fitness for s in range(20)]
    assert picks1 == picks2
    assert set(picks1) == {1.0, 2.0, 3.0}


def test_snapshot_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    a = GridArchive(resolution=6)
    for _ in range(30):
        a.insert(
            Elite(
                params=rng.standard_normal(11),
                fitness=float(rng.uniform(-1, 5)),
                measure=rng.uniform(0, 1, 2),
            )
        )
    csv_p, bin_p = tmp_path / "a.csv", tmp_path / "a.bin"
    save_snapshot(a, csv_p, bin_p)
    back = load_snapshot(csv_p, bin_p)
    assert back.resolution == a.resolution
    assert set(back.cells) == set(a.cells)
    for k in a.cells:
        assert np.array_equal(back.cells[k].params, a.cells[k].params)
        assert back.cells[k].fitness == a.cells[k].fitness
        assert np.array_equal(back.cells[k].measure, a.cells[k].measure)


def test_snapshot_rejects_corruption(tmp_path):
    a = GridArchive(resolution=3)
    a.insert(_elite(1.0, [0.5, 0.5]))
    csv_p, bin_p = tmp_path / "a.csv", tmp_path / "a.bin"
    save_snapshot(a, csv_p, bin_p)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE" + bin_p.read_bytes()[4:])
    with pytest.raises(ValueError, match="sidecar"):
        load_snapshot(csv_p, bad)
    bad_csv = tmp_path / "bad.csv"
    bad_csv.write_text("wrong,header\n")
    with pytest.raises(ValueError, match="header"):
        load_snapshot(bad_csv, bin_p)


def test_fitness_grid_and_heatmap_export(tmp_path):
    a = GridArchive(resolution=3)
    a.insert(_elite(1.0, [0.1, 0.1]))  # cell (0, 0)
    a.insert(_elite(5.0, [0.9, 0.5]))  # cell (2, 1)
    grid = fitness_grid(a)
    assert grid[0, 0] == 1.0 and grid[2, 1] == 5.0
    assert np.isnan(grid).sum() == 7

    csv_p, pgm_p = tmp_path / "h.csv", tmp_path / "h.pgm"
    export_heatmap(a, csv_p, pgm_p)
    lines = csv_p.read_text().strip("\n").split("\n")
    assert len(lines) == 3
    assert lines[0].split(",") == ["1.0", "", ""]
    assert lines[2].split(",") == ["", "5.0", ""]

    pgm = pgm_p.read_text().split("\n")
    assert pgm[0] == "P2"
    assert pgm[1] == "3 3"
    assert pgm[2] == "255"
    vals = np.array([[int(v) for v in row.split()] for row in pgm[3:6]])
    assert vals[0, 0] == 1  # min fitness -> lowest occupied level
    assert vals[2, 1] == 255  # max fitness
    assert (vals == 0).sum() == 7  # empty cells


def test_heatmap_constant_fitness(tmp_path):
    a = GridArchive(resolution=2)
    a.insert(_elite(2.0, [0.1, 0.1]))
    a.insert(_elite(2.0, [0.9, 0.9]))
    export_heatmap(a, tmp_path / "h.csv", tmp_path / "h.pgm")
    rows = (tmp_path / "h.pgm").read_text().split("\n")[3:5]
    vals = [int(v) for row in rows for v in row.split()]
    assert sorted(vals) == [0, 0, 255, 255]


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(0, 100, allow_nan=False),
            st.floats(0, 1, allow_nan=False),
            st.floats(0, 1, allow_nan=False),
        ),
        min_size=1,
        max_size=60,
    )
)
def test_insert_property_matches_oracle(batch):
    a = GridArchive(resolution=5)
    for f, m1, m2 in batch:
        a.insert(_elite(f, [m1, m2]))
    expected = replay_max_archive(5, [(f, np.array([m1, m2])) for f, m1, m2 in batch])
    assert {k: e.fitness for k, e in a.cells.items()} == expected
    m = a.metrics()
    assert m["qd_score"] == pytest.approx(sum(expected.values()))
    assert len(a) <= 25
