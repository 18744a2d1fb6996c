"""End-to-end search-driver behavior at micro scale."""

import os

import numpy as np
import pytest

from qdil.archive import Elite, load_snapshot
from qdil.config import Config
from qdil.demos import record_demonstrations
from qdil.loop import METRICS_HEADER, run
from qdil.nets import PolicySpec


def micro_config(**over):
    base = dict(
        iterations=3, branching=3, n1=1, n2=1, eval_episodes=2,
        n_envs=4, rollout_length=16, horizon=30,
        policy_hidden=(16,), critic_hidden=(16,),
        model_hidden=(16, 16), latent_dim=4, model_batch=64,
    )
    base.update(over)
    return Config(**base)


def demo_arrays(horizon=30):
    spec = PolicySpec(7, 2, (16,))
    rng = np.random.default_rng(0)
    sources = [
        Elite(spec.init(rng), 1.0, np.array([0.3, 0.3])),
        Elite(spec.init(rng), 1.0, np.array([0.7, 0.7])),
    ]
    return record_demonstrations(spec, sources, seed=5, horizon=horizon).arrays()


def test_zero_iterations():
    res = run(micro_config(iterations=0), demo_data=None)
    assert res.metrics == []
    assert len(res.archive.cells) == 0
    assert res.restarts == 0
    assert res.theta.ndim == 1


def test_expert_run_fills_archive(tmp_path):
    out = tmp_path / "run"
    res = run(micro_config(), demo_data=None, out_dir=str(out))
    assert len(res.archive.cells) > 0
    assert res.model is None

    keys = METRICS_HEADER.split(",")
    qd = [row["qd_score"] for row in res.metrics]
    assert len(res.metrics) == 3
    for row in res.metrics:
        assert list(row) == keys
        assert row["critic_loss"] == 0.0  # no reward model in expert mode
    assert all(b >= a for a, b in zip(qd, qd[1:]))  # positive-fitness inserts only add

    for name in ("metrics.csv", "archive.csv", "archive_params.bin",
                 "counts.csv", "obs_norm.txt", "theta.bin"):
        assert (out / name).exists()
    assert not (out / "reward_model").exists()

    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == METRICS_HEADER
    assert len(lines) == 4

    back = load_snapshot(out / "archive.csv", out / "archive_params.bin")
    assert len(back.cells) == len(res.archive.cells)


def test_learned_run_trains_model(tmp_path):
    out = tmp_path / "run"
    res = run(micro_config(), demo_data=demo_arrays(), out_dir=str(out))
    assert res.model is not None
    assert any(row["ae_loss"] != 0.0 for row in res.metrics)
    assert any(row["critic_loss"] != 0.0 for row in res.metrics)
    assert (out / "reward_model").is_dir()


def test_restart_on_stalled_archive():
    # a 1-cell grid stalls quickly; the stall must reset and teleport
    res = run(micro_config(iterations=4, grid_resolution=1, seed=0), demo_data=None)
    assert res.restarts >= 1
    assert len(res.archive.cells) == 1


def test_identical_seeds_identical_outputs(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run(micro_config(seed=3), demo_data=demo_arrays(), out_dir=str(out))
        outs.append(out)
    for fname in ("metrics.csv", "archive.csv", "counts.csv", "obs_norm.txt"):
        b1 = (outs[0] / fname).read_bytes()
        b2 = (outs[1] / fname).read_bytes()
        assert b1 == b2, fname
    assert (outs[0] / "theta.bin").read_bytes() == (outs[1] / "theta.bin").read_bytes()


def test_different_seeds_differ(tmp_path):
    m = []
    for seed in (3, 4):
        out = tmp_path / str(seed)
        run(micro_config(seed=seed), demo_data=None, out_dir=str(out))
        m.append((out / "metrics.csv").read_bytes())
    assert m[0] != m[1]
