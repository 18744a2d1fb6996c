"""Vectorized PPO over one reward channel plus one channel per measure.

Rollouts record a reward vector per step: channel 0 is the training reward
(learned base reward plus optional exploration bonus, or the environment
reward in expert mode) and channel 1 + j is the raw per-step measure
delta_j in {0, 1}, which makes each measure directly optimizable as a
per-step reward. Policy-gradient steps always optimize a fixed linear blend
of the channels; the gradient of any single channel is estimated by cloning
the policy, running a few PPO cycles on that channel alone, and differencing
the parameters.

Each training phase (one channel's cycles, or one blended walk) gets a fresh
critic and fresh optimizers; only the observation and reward normalizers
carry state across phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nets
from .env import VecWalker
from .explorer import VisitCounts, combined_reward
from .nets import MlpSpec, PolicySpec, RunningNorm


@dataclass
class VppoConfig:
    n_envs: int = 32
    rollout_length: int = 64
    epochs: int = 4
    minibatches: int = 4
    lr: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.0  # kept at zero; exploration comes from the bonus channel
    max_grad_norm: float = 0.5
    critic_hidden: tuple[int, ...] = (32, 32)
    normalize_obs: bool = True
    normalize_rewards: bool = True


class RewardNorm:
    """Scales channel-0 rewards by the running std of the discounted return."""

    def __init__(self, gamma: float):
        self.gamma = gamma
        self.var = 1.0
        self.count = 1e-4
        self.frozen = False

    def update(self, returns: np.ndarray) -> None:
        if self.frozen:
            return
        r = np.asarray(returns, dtype=np.float64).reshape(-1)
        n = r.size
        tot = self.count + n
        delta = r.mean() - 0.0
        self.var = (self.var * self.count + r.var() * n + delta**2 * self.count * n / tot) / tot
        self.count = tot

    def scale(self, rewards: np.ndarray) -> np.ndarray:
        return rewards / np.sqrt(self.var + 1e-8)


@dataclass
class RolloutBuffer:
    obs_raw: np.ndarray  # (T, n, obs_dim) as produced by the env
    obs_n: np.ndarray    # (T, n, obs_dim) as consumed by policy and critic
    acts: np.ndarray     # (T, n, act_dim), pre-clamp
    logps: np.ndarray    # (T, n)
    rewards: np.ndarray  # (T, n, channels)
    dones: np.ndarray    # (T, n)
    values: np.ndarray   # (T, n)
    last_value: np.ndarray  # (n,)

    @property
    def channels(self) -> int:
        return self.rewards.shape[2]

    def flat_model_data(self):
        """(obs, act, delta) arrays for reward-model training."""
        T, n, do = self.obs_raw.shape
        return (
            self.obs_raw.reshape(T * n, do),
            self.acts.reshape(T * n, -1),
            self.rewards[:, :, 1:].reshape(T * n, -1),
        )


def gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """Generalized advantage estimates, raw (no normalization).

    rewards/values/dones: (T, n); last_value: (n,) bootstrap for the state
    after the final step. dones[t] marks transitions that ended an episode.
    Returns (advantages, returns), each (T, n).
    """
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    carry = np.zeros(rewards.shape[1])
    for t in range(T - 1, -1, -1):
        nonterm = 1.0 - dones[t]
        nxt = values[t + 1] if t < T - 1 else last_value
        delta = rewards[t] + gamma * nxt * nonterm - values[t]
        carry = delta + gamma * lam * nonterm * carry
        adv[t] = carry
    return adv, adv + values


def clip_grad(g: np.ndarray, max_norm: float) -> np.ndarray:
    with np.errstate(over="ignore"):
        norm = np.sqrt((g**2).sum())
    if not np.isfinite(norm):
        return np.zeros_like(g)  # a poisoned minibatch contributes nothing
    if norm > max_norm > 0:
        return g * (max_norm / norm)
    return g


class Vppo:
    """PPO driver bound to a vectorized environment factory.

    make_vec(n, seed_seq) must supply .obs() and .step(actions) returning
    (obs, true_reward, delta, done, finished). reward_model=None means
    expert mode: channel 0 is the environment's own reward.
    """

    def __init__(
        self,
        policy_spec: PolicySpec,
        cfg: VppoConfig,
        make_vec,
        measure_dim: int,
        reward_model=None,
        counts: VisitCounts | None = None,
        bonus_enabled: bool = False,
        obs_norm: RunningNorm | None = None,
        reward_norm: RewardNorm | None = None,
    ):
        self.policy_spec = policy_spec
        self.cfg = cfg
        self.make_vec = make_vec
        self.measure_dim = measure_dim
        self.channels = 1 + measure_dim
        self.reward_model = reward_model
        self.counts = counts
        self.bonus_enabled = bonus_enabled
        self.obs_norm = obs_norm if obs_norm is not None else RunningNorm(policy_spec.obs_dim)
        if not cfg.normalize_obs:
            self.obs_norm.frozen = True
        self.reward_norm = reward_norm if reward_norm is not None else RewardNorm(cfg.gamma)
        if not cfg.normalize_rewards:
            self.reward_norm.frozen = True
        self.critic_spec = MlpSpec((policy_spec.obs_dim, *cfg.critic_hidden, 1))

    # ------------------------------------------------------------ collection

    def collect(self, vec, policy_params, critic_params, ret_state, rng) -> RolloutBuffer:
        """One rollout of cfg.rollout_length steps across vec's walkers.

        Channel-0 rewards are stored raw; the exploration bonus is computed
        against the visit counts as they stood at entry, and this batch's
        visits are recorded only after all rewards are assembled.
        """
        cfg = self.cfg
        T, n = cfg.rollout_length, vec.n
        do, da = self.policy_spec.obs_dim, self.policy_spec.act_dim
        buf = RolloutBuffer(
            obs_raw=np.empty((T, n, do)),
            obs_n=np.empty((T, n, do)),
            acts=np.empty((T, n, da)),
            logps=np.empty((T, n)),
            rewards=np.empty((T, n, self.channels)),
            dones=np.empty((T, n)),
            values=np.empty((T, n)),
            last_value=np.empty(n),
        )
        raw = vec.obs()
        for t in range(T):
            self.obs_norm.update(raw)
            obs_n = self.obs_norm.normalize(raw)
            act, logp = self.policy_spec.sample(policy_params, obs_n, rng)
            value = nets.forward(self.critic_spec, critic_params, obs_n)[:, 0]
            nxt_raw, true_r, delta, done, _ = vec.step(act)

            if self.reward_model is None:
                base = true_r
            else:
                base = self.reward_model.base_reward(raw, act, delta)
            r0 = combined_reward(base, delta, self.counts, self.bonus_enabled)

            buf.obs_raw[t] = raw
            buf.obs_n[t] = obs_n
            buf.acts[t] = act
            buf.logps[t] = logp
            buf.rewards[t, :, 0] = r0
            buf.rewards[t, :, 1:] = delta
            buf.dones[t] = done
            buf.values[t] = value

            ret_state[:] = cfg.gamma * ret_state * (1.0 - done) + r0
            self.reward_norm.update(ret_state)
            raw = nxt_raw

        buf.last_value = nets.forward(
            self.critic_spec, critic_params, self.obs_norm.normalize(raw)
        )[:, 0]
        if self.counts is not None:
            self.counts.visit(buf.rewards[:, :, 1:].reshape(T * n, self.measure_dim))
        return buf

    def blended_advantages(self, buf: RolloutBuffer, weights: np.ndarray):
        """GAE on the weighted channel blend (channel 0 scaled to unit return std)."""
        w = np.asarray(weights, dtype=np.float64).reshape(self.channels)
        rew = buf.rewards.copy()
        rew[:, :, 0] = self.reward_norm.scale(rew[:, :, 0])
        blend = rew @ w
        return gae(blend, buf.values, buf.dones, buf.last_value, self.cfg.gamma, self.cfg.gae_lambda)

    # --------------------------------------------------------------- updates

    def ppo_update(self, policy_params, critic_params, opt_p, opt_c, buf, weights, rng):
        """cfg.epochs passes of clipped-surrogate updates over shuffled minibatches."""
        cfg = self.cfg
        adv, ret = self.blended_advantages(buf, weights)
        T, n = adv.shape
        N = T * n
        obs = buf.obs_n.reshape(N, -1)
        acts = buf.acts.reshape(N, -1)
        old_lp = buf.logps.reshape(N)
        adv = adv.reshape(N)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        ret = ret.reshape(N)

        mb = max(1, N // cfg.minibatches)
        for _ in range(cfg.epochs):
            perm = rng.permutation(N)
            for start in range(0, N, mb):
                idx = perm[start : start + mb]
                if idx.size < 2:
                    continue
                a, r, ol = adv[idx], ret[idx], old_lp[idx]
                o, ac = obs[idx], acts[idx]

                new_lp = self.policy_spec.log_prob(policy_params, o, ac)
                # log-ratio clamp keeps exp finite when the policy has moved
                # far off the collection distribution; the surrogate's clip
                # mask already discards such samples' gradients
                ratio = np.exp(np.clip(new_lp - ol, -50.0, 50.0))
                clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
                unclipped_wins = ratio * a <= clipped * a
                up = -(a * ratio * unclipped_wins) / idx.size
                pg = self.policy_spec.log_prob_grad(policy_params, o, ac, up)
                policy_params = opt_p.step(policy_params, clip_grad(pg, cfg.max_grad_norm))

                v = nets.forward(self.critic_spec, critic_params, o)[:, 0]
                vu = cfg.value_coef * 2.0 * (v - r) / idx.size
                cg, _ = nets.grad(self.critic_spec, critic_params, o, vu[:, None])
                critic_params = opt_c.step(critic_params, clip_grad(cg, cfg.max_grad_norm))
        return policy_params, critic_params

    # ---------------------------------------------------------------- phases

    def run_phase(self, policy_params, weights, n_cycles: int, seed_seq: np.random.SeedSequence):
        """n_cycles of collect + update on a fixed channel blend.

        Fresh walkers, critic, and optimizers per phase. Returns the updated
        policy parameters and the final rollout buffer (None when n_cycles=0).
        """
        ss_env, ss_init, ss_steps = seed_seq.spawn(3)
        vec = self.make_vec(self.cfg.n_envs, ss_env)
        rng = np.random.Generator(np.random.PCG64(ss_steps))
        critic_params = nets.init_params(self.critic_spec, np.random.Generator(np.random.PCG64(ss_init)))
        opt_p = nets.Adam(lr=self.cfg.lr)
        opt_c = nets.Adam(lr=self.cfg.lr)
        ret_state = np.zeros(vec.n)
        params = np.array(policy_params, copy=True)
        buf = None
        for _ in range(n_cycles):
            buf = self.collect(vec, params, critic_params, ret_state, rng)
            params, critic_params = self.ppo_update(params, critic_params, opt_p, opt_c, buf, weights, rng)
        return params, buf

    def evaluate(self, policy_params, n_episodes: int, seed_seq: np.random.SeedSequence):
        """Full-episode evaluation: mean training-reward return, mean episodic
        measure, mean environment return. Normalizer states are left untouched;
        visits are recorded after the whole batch."""
        ss_env, ss_steps = seed_seq.spawn(2)
        vec = self.make_vec(n_episodes, ss_env)
        rng = np.random.Generator(np.random.PCG64(ss_steps))
        horizon = vec.horizon
        ep_train = np.zeros(n_episodes)
        deltas_all = np.empty((horizon, n_episodes, self.measure_dim))
        true_returns = None
        measures = None
        for t in range(horizon):
            raw = vec.obs()
            obs_n = self.obs_norm.normalize(raw)
            act, _ = self.policy_spec.sample(policy_params, obs_n, rng)
            _, true_r, delta, done, finished = vec.step(act)
            if self.reward_model is None:
                base = true_r
            else:
                base = self.reward_model.base_reward(raw, act, delta)
            ep_train += combined_reward(base, delta, self.counts, self.bonus_enabled)
            deltas_all[t] = delta
            if t == horizon - 1:
                true_returns = np.array([fr for fr, _ in finished])
                measures = np.array([fm for _, fm in finished])
        if self.counts is not None:
            self.counts.visit(deltas_all.reshape(horizon * n_episodes, self.measure_dim))
        return float(ep_train.mean()), measures.mean(axis=0), float(true_returns.mean())


@dataclass
class JacobianEstimate:
    f: float                  # mean training-reward return of the input policy
    measures: np.ndarray      # (k,) mean episodic measures of the input policy
    f_true: float             # mean environment return of the input policy
    grads: np.ndarray         # (k+1, P) unit-normalized parameter steps
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def compute_jacobian(
    vppo: Vppo,
    policy_params: np.ndarray,
    n1: int,
    eval_episodes: int,
    seed_seq: np.random.SeedSequence,
) -> JacobianEstimate:
    """Estimate objective and measure gradients by parameter differencing.

    For each channel, clone the policy, run n1 PPO cycles on that channel
    alone, and take the unit-normalized parameter displacement. A zero
    displacement is left zero and flagged. f and the measures come from full
    evaluation episodes of the unmodified input policy.
    """
    channels = vppo.channels
    ss_eval, *ss_ch = seed_seq.spawn(1 + channels)
    f, m, f_true = vppo.evaluate(policy_params, eval_episodes, ss_eval)
    grads = np.zeros((channels, policy_params.size))
    degenerate = np.zeros(channels, dtype=bool)
    for ch in range(channels):
        w = np.zeros(channels)
        w[ch] = 1.0
        updated, _ = vppo.run_phase(policy_params, w, n1, ss_ch[ch])
        step = updated - policy_params
        norm = np.sqrt((step**2).sum())
        if norm == 0.0 or not np.isfinite(norm):
            degenerate[ch] = True
        else:
            grads[ch] = step / norm
    return JacobianEstimate(f=f, measures=m, f_true=f_true, grads=grads, degenerate=degenerate)


def make_walker_factory(horizon: int):
    def factory(n: int, seed_seq: np.random.SeedSequence) -> VecWalker:
        return VecWalker(n, seed_seq, horizon=horizon)

    return factory
