"""Demonstration generation, selection, recording, and file round-trip.

Experts come from a QD run on the environment's own reward. From the expert
archive's top-fitness pool, demonstrators are picked greedily to maximize the
minimum pairwise distance in measure space, so a small demo set still spans
the behaviour space. Each demonstrator is replayed deterministically (actions
are the policy's clamped mean) and logged as (state, action, measure) steps.

File format: one header line naming every column, then comma-separated rows
demo_id, t, s0..s6, a0, a1, d0, d1. Floats are written with repr and parse
back bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env as walker
from .archive import Elite, GridArchive
from .config import Config
from .loop import RunResult, run
from .nets import PolicySpec, RunningNorm


@dataclass
class Demonstration:
    demo_id: int
    states: np.ndarray   # (T, obs_dim) observations, pre-step
    actions: np.ndarray  # (T, act_dim), clamped
    deltas: np.ndarray   # (T, measure_dim) per-step contact flags

    def __post_init__(self):
        if not (len(self.states) == len(self.actions) == len(self.deltas)):
            raise ValueError("ragged demonstration")
        if len(self.states) == 0:
            raise ValueError("empty demonstration")

    @property
    def episode_return(self) -> float:
        """Environment return, reconstructed from logged fields."""
        speed = 0.5 * (
            self.deltas[:, 0] * np.abs(self.states[:, 1])
            + self.deltas[:, 1] * np.abs(self.states[:, 3])
        )
        cost = walker.ACTION_COST * (self.actions**2).sum(axis=1)
        return float((speed - cost).sum())

    @property
    def episodic_measure(self) -> np.ndarray:
        return walker.episodic_measure(self.deltas)


@dataclass
class DemoSet:
    demos: list[Demonstration]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All steps pooled: (obs, act, delta) ready for reward-model training."""
        return (
            np.concatenate([d.states for d in self.demos]),
            np.concatenate([d.actions for d in self.demos]),
            np.concatenate([d.deltas for d in self.demos]),
        )

    def __len__(self) -> int:
        return len(self.demos)


def save_demos(path, demo_set: DemoSet) -> None:
    ncols = {(d.states.shape[1], d.actions.shape[1], d.deltas.shape[1]) for d in demo_set.demos}
    if len(ncols) != 1:
        raise ValueError("demonstrations disagree on dimensions")
    ns, na, nd = ncols.pop()
    header = (
        ["demo_id", "t"]
        + [f"s{i}" for i in range(ns)]
        + [f"a{i}" for i in range(na)]
        + [f"d{i}" for i in range(nd)]
    )
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for d in demo_set.demos:
            for t in range(len(d.states)):
                vals = [str(d.demo_id), str(t)]
                vals += [repr(float(v)) for v in d.states[t]]
                vals += [repr(float(v)) for v in d.actions[t]]
                vals += [repr(float(v)) for v in d.deltas[t]]
                f.write(",".join(vals) + "\n")


def load_demos(path, obs_dim: int = walker.OBS_DIM, act_dim: int = walker.ACT_DIM,
               measure_dim: int = walker.MEASURE_DIM) -> DemoSet:
    """Parse and validate a demonstration file; errors carry line numbers."""
    expected = (
        ["demo_id", "t"]
        + [f"s{i}" for i in range(obs_dim)]
        + [f"a{i}" for i in range(act_dim)]
        + [f"d{i}" for i in range(measure_dim)]
    )
    rows: dict[int, list[tuple[int, np.ndarray, np.ndarray, np.ndarray]]] = {}
    with open(path) as f:
        header = f.readline().strip().split(",")
        if header != expected:
            raise ValueError(f"{path}:1: header {header} does not match dimensions "
                             f"({obs_dim} state, {act_dim} action, {measure_dim} measure)")
        width = len(expected)
        for ln, line in enumerate(f, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != width:
                raise ValueError(f"{path}:{ln}: expected {width} fields, got {len(parts)}")
            try:
                demo_id = int(parts[0])
                t = int(parts[1])
                vals = np.array([float(p) for p in parts[2:]])
            except ValueError as e:
                raise ValueError(f"{path}:{ln}: {e}") from None
            s = vals[:obs_dim]
            a = vals[obs_dim : obs_dim + act_dim]
            d = vals[obs_dim + act_dim :]
            if not np.isin(d, (0.0, 1.0)).all():
                raise ValueError(f"{path}:{ln}: measure flags must be 0 or 1")
            if not np.array_equal(d, s[4:6]):
                raise ValueError(f"{path}:{ln}: measure disagrees with state contact flags")
            rows.setdefault(demo_id, []).append((t, s, a, d))

    demos = []
    for demo_id in sorted(rows):
        steps = sorted(rows[demo_id], key=lambda r: r[0])
        if [t for t, *_ in steps] != list(range(len(steps))):
            raise ValueError(f"{path}: demo {demo_id} has missing or duplicate steps")
        demos.append(
            Demonstration(
                demo_id=demo_id,
                states=np.array([s for _, s, _, _ in steps]),
                actions=np.array([a for _, _, a, _ in steps]),
                deltas=np.array([d for _, _, _, d in steps]),
            )
        )
    if not demos:
        raise ValueError(f"{path}: no demonstrations found")
    return DemoSet(demos)


def select_demonstrators(archive: GridArchive, pool_size: int, k: int) -> list[Elite]:
    """Greedy maximin pick of k elites from the top-fitness pool.

    First pick is the highest-fitness elite; each later pick maximizes its
    minimum measure-space distance to the already chosen set, higher fitness
    breaking ties.
    """
    elites = [e for _, e in archive.elites()]
    if len(elites) < k:
        raise ValueError(f"archive has {len(elites)} elites, need at least {k}")
    pool = sorted(elites, key=lambda e: -e.fitness)[:pool_size]
    chosen = [pool[0]]
    remaining = pool[1:]
    while len(chosen) < k:
        best_idx = None
        best_key = None
        for i, cand in enumerate(remaining):
            dist = min(float(np.linalg.norm(cand.measure - c.measure)) for c in chosen)
            key = (dist, cand.fitness)
            if best_key is None or key > best_key:
                best_key = key
                best_idx = i
        chosen.append(remaining.pop(best_idx))
    return chosen


def record_demonstration(policy_spec: PolicySpec, params: np.ndarray, demo_id: int, seed: int,
                         obs_norm: RunningNorm | None = None,
                         horizon: int = walker.DEFAULT_HORIZON) -> Demonstration:
    """Deterministic replay: the action is the policy's mean, clamped."""

    def act(obs):
        o = obs_norm.normalize(obs) if obs_norm is not None else obs
        return np.clip(policy_spec.mean_action(params, o), -1.0, 1.0)

    _, (obs, acts, deltas, _) = walker.rollout_transcript(act, seed, horizon)
    return Demonstration(demo_id=demo_id, states=obs, actions=acts, deltas=deltas)


def record_demonstrations(policy_spec: PolicySpec, sources: list[Elite], seed: int,
                          obs_norm: RunningNorm | None = None,
                          horizon: int = walker.DEFAULT_HORIZON) -> DemoSet:
    seeds = np.random.SeedSequence(seed).generate_state(len(sources))
    return DemoSet(
        [
            record_demonstration(policy_spec, e.params, i, int(s), obs_norm, horizon)
            for i, (e, s) in enumerate(zip(sources, seeds))
        ]
    )


def generate_expert_archive(cfg: Config, out_dir: str | None = None) -> RunResult:
    """QD run on the environment reward alone (no reward model, no bonus)."""
    return run(cfg, demo_data=None, out_dir=out_dir)


def demo_stats_table(demo_set: DemoSet) -> str:
    """min/max/mean/std summary of demo lengths and environment returns."""
    lengths = np.array([len(d.states) for d in demo_set.demos], dtype=np.float64)
    returns = np.array([d.episode_return for d in demo_set.demos])
    lines = [f"{'':>10} {'min':>10} {'max':>10} {'mean':>10} {'std':>10}"]
    for name, vals in (("length", lengths), ("return", returns)):
        lines.append(
            f"{name:>10} {vals.min():>10.3f} {vals.max():>10.3f} {vals.mean():>10.3f} {vals.std():>10.3f}"
        )
    return "\n".join(lines)
