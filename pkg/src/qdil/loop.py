"""Archive-building search driver.

Each iteration: estimate objective and measure gradients of the search policy
by parameter differencing, insert the search policy into the archive, branch
a batch of offspring along sampled gradient blends, insert them, adapt the
coefficient distribution on the ranked fitness improvements, then walk the
search policy a few PPO cycles along the adapted mean blend and refresh the
reward model on the walk's rollout data. If an iteration leaves the archive
completely unchanged, the coefficient distribution resets and the search
policy restarts from a uniformly random occupied cell's elite.

Offspring are always inserted with their environment-reward fitness; the
learned reward only drives gradient estimation and the walk.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import env as walker
from .archive import Elite, GridArchive, save_snapshot
from .config import Config
from .explorer import VisitCounts
from .nets import PolicySpec, RunningNorm, save_param_vector
from .rewards import RewardConfig, RewardModel
from .vppo import JacobianEstimate, RewardNorm, Vppo, VppoConfig, compute_jacobian, make_walker_factory
from .xnes import CoeffDistribution, adapt, sample_coefficients

METRICS_HEADER = "iteration,qd_score,coverage,best,average,mean_learned_reward,critic_loss,ae_loss"


@dataclass
class RunResult:
    archive: GridArchive
    counts: VisitCounts
    theta: np.ndarray
    policy_spec: PolicySpec
    metrics: list[dict] = field(default_factory=list)
    model: RewardModel | None = None
    obs_norm: RunningNorm | None = None
    restarts: int = 0


def _vppo_config(cfg: Config) -> VppoConfig:
    return VppoConfig(
        n_envs=cfg.n_envs,
        rollout_length=cfg.rollout_length,
        epochs=cfg.ppo_epochs,
        minibatches=cfg.minibatches,
        lr=cfg.ppo_lr,
        gamma=cfg.gamma,
        gae_lambda=cfg.gae_lambda,
        clip_eps=cfg.clip_eps,
        critic_hidden=tuple(cfg.critic_hidden),
        normalize_obs=cfg.normalize_obs,
        normalize_rewards=cfg.normalize_rewards,
    )


def _reward_config(cfg: Config) -> RewardConfig:
    return RewardConfig(
        variant=cfg.variant,
        bonus_enabled=cfg.bonus,
        latent_dim=cfg.latent_dim,
        reg_weight=cfg.reg_weight,
        lr=cfg.model_lr,
        hidden=tuple(cfg.model_hidden),
        n_critic=cfg.n_critic,
        gan_penalty_coef=cfg.gan_penalty_coef,
        critic_penalty_coef=cfg.critic_penalty_coef,
        batch_size=cfg.model_batch,
        epochs=cfg.model_epochs,
    )


def _metrics_row(row: dict) -> str:
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    return ",".join(fmt(row[k]) for k in METRICS_HEADER.split(","))


def _finite_eval(f: float, measures: np.ndarray, f_true: float) -> bool:
    return bool(np.isfinite(f) and np.isfinite(f_true) and np.all(np.isfinite(measures)))


def run(cfg: Config, demo_data=None, out_dir: str | None = None) -> RunResult:
    """Run the full search. demo_data is an (obs, act, delta) array triple of
    expert steps; None switches to expert mode (environment reward, no bonus,
    no reward model)."""
    master = np.random.SeedSequence(cfg.seed)
    ss_policy, ss_model, ss_sample, ss_update, ss_restart, ss_iters = master.spawn(6)
    rng_sample = np.random.Generator(np.random.PCG64(ss_sample))
    rng_update = np.random.Generator(np.random.PCG64(ss_update))
    rng_restart = np.random.Generator(np.random.PCG64(ss_restart))

    policy_spec = PolicySpec(walker.OBS_DIM, walker.ACT_DIM, tuple(cfg.policy_hidden))
    theta = policy_spec.init(np.random.Generator(np.random.PCG64(ss_policy)))

    expert_mode = demo_data is None
    obs_norm = RunningNorm(walker.OBS_DIM)
    reward_norm = RewardNorm(cfg.gamma)
    counts = VisitCounts(cfg.count_resolution)
    model = None
    if not expert_mode:
        model = RewardModel(
            _reward_config(cfg),
            walker.OBS_DIM,
            walker.ACT_DIM,
            walker.MEASURE_DIM,
            np.random.Generator(np.random.PCG64(ss_model)),
            obs_norm=obs_norm,
        )
    vppo = Vppo(
        policy_spec,
        _vppo_config(cfg),
        make_walker_factory(cfg.horizon),
        walker.MEASURE_DIM,
        reward_model=model,
        counts=counts,
        bonus_enabled=cfg.bonus and not expert_mode,
        obs_norm=obs_norm,
        reward_norm=reward_norm,
    )

    archive = GridArchive(cfg.grid_resolution)
    channels = 1 + walker.MEASURE_DIM
    dist = CoeffDistribution.isotropic(channels, cfg.sigma_g)

    metrics_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.csv")
        with open(metrics_path, "w") as f:
            f.write(METRICS_HEADER + "\n")

    result = RunResult(
        archive=archive, counts=counts, theta=theta, policy_spec=policy_spec,
        model=model, obs_norm=obs_norm,
    )

    for iteration in range(cfg.iterations):
        ss_it = ss_iters.spawn(1)[0]
        ss_jac, ss_walk, *ss_off = ss_it.spawn(2 + cfg.branching)

        jac = compute_jacobian(vppo, theta, cfg.n1, cfg.eval_episodes, ss_jac)
        changes_before = archive.change_count
        if _finite_eval(jac.f, jac.measures, jac.f_true):
            archive.insert(Elite(theta, jac.f_true, jac.measures, learned_fitness=jac.f))

        coeffs, raw_coeffs = sample_coefficients(dist, cfg.branching, rng_sample)
        improvements = np.zeros(cfg.branching)
        for i in range(cfg.branching):
            child = theta + coeffs[i] @ jac.grads
            f_i, m_i, true_i = vppo.evaluate(child, cfg.eval_episodes, ss_off[i])
            if not _finite_eval(f_i, m_i, true_i):
                continue  # a broken offspring earns zero improvement
            delta_i = archive.insert(Elite(child, true_i, m_i, learned_fitness=f_i))
            improvements[i] = max(delta_i, 0.0)  # ranking ignores negative deltas
        dist = adapt(dist, raw_coeffs, improvements)

        walk_w = dist.mu.copy()
        walk_w[0] = abs(walk_w[0])
        theta, walk_buf = vppo.run_phase(theta, walk_w, cfg.n2, ss_walk)

        losses = {}
        if model is not None and walk_buf is not None:
            losses = model.run_epoch(demo_data, walk_buf.flat_model_data(), rng_update)

        if archive.change_count == changes_before:
            dist = CoeffDistribution.isotropic(channels, cfg.sigma_g)
            theta = archive.sample_occupied(rng_restart).params.copy()
            result.restarts += 1

        am = archive.metrics()
        row = {
            "iteration": iteration,
            "qd_score": am["qd_score"],
            "coverage": am["coverage"],
            "best": am["best"],
            "average": am["average"],
            "mean_learned_reward": jac.f,
            "critic_loss": losses.get("critic_loss", 0.0),
            "ae_loss": losses.get("ae_loss", 0.0),
        }
        result.metrics.append(row)
        if metrics_path is not None:
            with open(metrics_path, "a") as f:
                f.write(_metrics_row(row) + "\n")

    result.theta = theta
    if out_dir is not None:
        save_snapshot(archive, os.path.join(out_dir, "archive.csv"), os.path.join(out_dir, "archive_params.bin"))
        counts.save_csv(os.path.join(out_dir, "counts.csv"))
        obs_norm.save(os.path.join(out_dir, "obs_norm.txt"))
        save_param_vector(
            os.path.join(out_dir, "theta.bin"),
            (*policy_spec.mlp.widths, policy_spec.act_dim),
            theta,
        )
        if model is not None:
            model.save(os.path.join(out_dir, "reward_model"))
    return result
