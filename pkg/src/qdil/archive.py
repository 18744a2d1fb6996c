"""Grid archive over the 2-D behaviour space [0, 1]^2.

Square G x G grid; each cell keeps at most one elite under strict elitist
replacement (a candidate only displaces a strictly worse incumbent). Cell
fitness is the true undiscounted episode return; the return under the learned
reward is carried alongside for logging only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Elite:
    params: np.ndarray
    fitness: float
    measure: np.ndarray
    learned_fitness: float = 0.0


@dataclass
class GridArchive:
    resolution: int
    fitness_floor: float = 0.0
    cells: dict[tuple[int, int], Elite] = field(default_factory=dict)
    change_count: int = 0  # bumped whenever an insert stores or replaces

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    def cell_index(self, measure: np.ndarray) -> tuple[int, int]:
        """Cell of a measure in [0, 1]^2: floor(m * G), top edge owned by the last cell."""
        m = np.asarray(measure, dtype=np.float64).reshape(2)
        if (m < 0.0).any() or (m > 1.0).any():
            raise ValueError(f"measure {m} outside [0, 1]^2")
        idx = np.minimum((m * self.resolution).astype(np.int64), self.resolution - 1)
        return int(idx[0]), int(idx[1])

    def insert(self, elite: Elite) -> float:
        """Elitist insert; returns the fitness improvement.

        Empty target cell: store, improvement = fitness - fitness_floor.
        Occupied: replace only on strictly higher fitness, improvement is the
        fitness delta; otherwise no change and improvement 0. Measures are
        clamped into [0, 1] first to absorb floating-point drift.
        """
        measure = np.clip(np.asarray(elite.measure, dtype=np.float64).reshape(2), 0.0, 1.0)
        stored = Elite(
            params=np.array(elite.params, dtype=np.float64, copy=True),
            fitness=float(elite.fitness),
            measure=measure,
            learned_fitness=float(elite.learned_fitness),
        )
        key = self.cell_index(measure)
        incumbent = self.cells.get(key)
        if incumbent is None:
            self.cells[key] = stored
            self.change_count += 1
            return stored.fitness - self.fitness_floor
        if stored.fitness > incumbent.fitness:
            self.cells[key] = stored
            self.change_count += 1
            return stored.fitness - incumbent.fitness
        return 0.0

    def __len__(self) -> int:
        return len(self.cells)

    def metrics(self) -> dict:
        """qd_score, coverage (percent), best, average. best/average are None when empty."""
        g2 = self.resolution**2
        if not self.cells:
            return {"qd_score": 0.0, "coverage": 0.0, "best": None, "average": None}
        fits = np.array([e.fitness for e in self.cells.values()])
        return {
            "qd_score": float(fits.sum()),
            "coverage": 100.0 * len(self.cells) / g2,
            "best": float(fits.max()),
            "average": float(fits.mean()),
        }

    def elites(self):
        return list(self.cells.items())

    def sample_occupied(self, rng: np.random.Generator) -> Elite:
        if not self.cells:
            raise ValueError("archive is empty")
        keys = sorted(self.cells.keys())
        return self.cells[keys[rng.integers(0, len(keys))]]


def save_snapshot(archive: GridArchive, csv_path, params_path) -> None:
    """Snapshot: CSV of cells plus a binary sidecar of parameter vectors.

    CSV header row,col,fitness,measure1,measure2; sidecar records are
    (row u32, col u32) followed by the flat float64 parameter vector.
    """
    items = sorted(archive.cells.items())
    dims = {e.params.size for _, e in items}
    if len(dims) > 1:
        raise ValueError("mixed parameter dimensions in archive")
    dim = dims.pop() if items else 0
    with open(csv_path, "w") as f:
        f.write("row,col,fitness,measure1,measure2\n")
        for (r, c), e in items:
            f.write(
                f"{r},{c},{float(e.fitness)!r},"
                f"{float(e.measure[0])!r},{float(e.measure[1])!r}\n"
            )
    with open(params_path, "wb") as f:
        f.write(b"QDPS")
        f.write(np.asarray([archive.resolution, len(items), dim], dtype="<u4").tobytes())
        for (r, c), e in items:
            f.write(np.asarray([r, c], dtype="<u4").tobytes())
            f.write(np.asarray(e.params, dtype="<f8").tobytes())


def load_snapshot(csv_path, params_path) -> GridArchive:
    with open(params_path, "rb") as f:
        raw = f.read()
    if raw[:4] != b"QDPS":
        raise ValueError(f"{params_path}: not an archive sidecar")
    resolution, count, dim = np.frombuffer(raw[4:16], dtype="<u4")
    params = {}
    off = 16
    rec = 8 + 8 * int(dim)
    for _ in range(int(count)):
        r, c = np.frombuffer(raw[off : off + 8], dtype="<u4")
        vec = np.frombuffer(raw[off + 8 : off + rec], dtype="<f8").copy()
        params[(int(r), int(c))] = vec
        off += rec

    archive = GridArchive(resolution=int(resolution))
    with open(csv_path) as f:
        header = f.readline().strip()
        if header != "row,col,fitness,measure1,measure2":
            raise ValueError(f"{csv_path}: unexpected header {header!r}")
        for line in f:
            r_s, c_s, fit, m1, m2 = line.strip().split(",")
            key = (int(r_s), int(c_s))
            if key not in params:
                raise ValueError(f"{csv_path}: cell {key} missing from sidecar")
            archive.cells[key] = Elite(
                params=params[key],
                fitness=float(fit),
                measure=np.array([float(m1), float(m2)]),
            )
    if len(archive.cells) != int(count):
        raise ValueError("snapshot CSV and sidecar disagree on cell count")
    return archive


def fitness_grid(archive: GridArchive) -> np.ndarray:
    """G x G array of cell fitness, NaN where empty."""
    g = np.full((archive.resolution, archive.resolution), np.nan)
    for (r, c), e in archive.cells.items():
        g[r, c] = e.fitness
    return g


def export_heatmap(archive: GridArchive, csv_path, pgm_path) -> None:
    """Fitness heatmap as CSV (blank = empty cell) and as an 8-bit PGM.

    PGM grey levels: 0 marks empty cells; occupied cells are min-max
    normalized over the occupied set onto 1..255.
    """
    grid = fitness_grid(archive)
    with open(csv_path, "w") as f:
        for r in range(archive.resolution):
            f.write(",".join("" if np.isnan(v) else repr(float(v)) for v in grid[r]) + "\n")

    filled = grid[~np.isnan(grid)]
    levels = np.zeros_like(grid, dtype=np.int64)
    if filled.size:
        lo, hi = filled.min(), filled.max()
        span = hi - lo
        occupied = ~np.isnan(grid)
        if span > 0:
            levels[occupied] = 1 + np.rint(254.0 * (grid[occupied] - lo) / span).astype(np.int64)
        else:
            levels[occupied] = 255
    with open(pgm_path, "w") as f:
        f.write(f"P2\n{archive.resolution} {archive.resolution}\n255\n")
        for r in range(archive.resolution):
            f.write(" ".join(str(v) for v in levels[r]) + "\n")
