"""Visit-count exploration bonus over single-step behaviour descriptors.

An H x H count grid over per-step contact flags delta in [0, 1]^2. The bonus
for a step is 1 / (1 + p) where p is the fraction of all recorded visits that
fell in delta's cell, so it lives in [0.5, 1.0] and favours rarely seen
descriptors. Rewards for a batch are assembled against the counts as they
stood before that batch, and the batch's visits are applied afterwards; a
batch's rewards are therefore independent of ordering within the batch.
"""

from __future__ import annotations

import numpy as np


class VisitCounts:
    def __init__(self, resolution: int = 10):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = resolution
        self.counts = np.zeros((resolution, resolution), dtype=np.int64)
        self.total = 0

    def _cells(self, deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = np.atleast_2d(np.asarray(deltas, dtype=np.float64))
        if (d < 0.0).any() or (d > 1.0).any():
            raise ValueError("delta outside [0, 1]^2")
        idx = np.minimum((d * self.resolution).astype(np.int64), self.resolution - 1)
        return idx[:, 0], idx[:, 1]

    def visit(self, deltas: np.ndarray) -> None:
        """Record one or many visits."""
        rows, cols = self._cells(deltas)
        np.add.at(self.counts, (rows, cols), 1)
        self.total += rows.size

    def proportion(self, deltas: np.ndarray) -> np.ndarray:
        """Fraction of all visits that landed in each delta's cell (0 when empty)."""
        rows, cols = self._cells(deltas)
        if self.total == 0:
            return np.zeros(rows.size)
        return self.counts[rows, cols] / self.total

    def bonus(self, deltas: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + self.proportion(deltas))

    def save_csv(self, path) -> None:
        with open(path, "w") as f:
            for r in range(self.resolution):
                f.write(",".join(str(int(v)) for v in self.counts[r]) + "\n")


def combined_reward(base: np.ndarray, deltas: np.ndarray, counts: VisitCounts | None, enabled: bool) -> np.ndarray:
    """Per-step training reward: base plus the exploration bonus when enabled."""
    base = np.asarray(base, dtype=np.float64)
    if not enabled:
        return base.copy()
    if counts is None:
        raise ValueError("bonus enabled but no visit counts supplied")
    return base + counts.bonus(deltas)
