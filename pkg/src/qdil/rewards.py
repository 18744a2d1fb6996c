"""Adversarial reward models trained from demonstrations.

Four interchangeable variants produce a per-step base reward for the policy
search from (state, action, per-step measure) triples:

- ``gail``: a discriminator on the raw input classifies expert against
  policy samples; reward is -log(1 - D(x)). The input always includes the
  per-step measure.
- ``wae_gail``: an autoencoder maps inputs to a latent space where a
  GAN-style discriminator separates {prior, expert codes} from policy codes;
  reward is -log(1 - D(Q(x))).
- ``wae_wgail``: same autoencoder layout but the latent discriminator is a
  Wasserstein critic with a unit-gradient penalty; reward is the raw critic
  score D_W(Q(x)). The latent input omits the measure.
- ``mcwae_wgail``: ``wae_wgail`` with the measure appended to the input.

The encoder is deterministic; reconstruction cost is squared Euclidean
distance. Within an update the discriminator/critic trains first and the
encoder/decoder step then uses the refreshed scores. Expert and policy
latents enter the critic-gap term with opposite signs in the encoder loss,
so the encoder shrinks the very distance estimate the critic maximizes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import nets
from .nets import MlpSpec, RunningNorm

VARIANTS = ("gail", "wae_gail", "wae_wgail", "mcwae_wgail")


def measure_conditioned(variant: str) -> bool:
    """Whether the variant's input includes the per-step measure (fixed per variant)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    return variant in ("gail", "mcwae_wgail")


def is_wasserstein(variant: str) -> bool:
    return variant in ("wae_wgail", "mcwae_wgail")


@dataclass
class RewardConfig:
    variant: str = "mcwae_wgail"
    bonus_enabled: bool = True
    latent_dim: int = 8
    reg_weight: float = 1.0  # weight coupling the latent term into both losses
    lr: float = 3e-4
    hidden: tuple[int, ...] = (64, 64)
    n_critic: int = 5  # critic steps per encoder step
    gan_penalty_coef: float = 10.0  # zero-centered penalty for GAN-style discriminators
    critic_penalty_coef: float = 10.0  # one-centered penalty for the Wasserstein critic
    batch_size: int = 256
    epochs: int = 1
    optimizer: str = "adam"
    prob_clamp: float = 1e-6


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def critic_step_grad(
    spec: MlpSpec,
    params: np.ndarray,
    ze: np.ndarray,
    zp: np.ndarray,
    lam: float,
    penalty_coef: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Descent gradient for one Wasserstein-critic step on fixed latents.

    The critic ascends (lam/n) * sum[D_W(ze) - D_W(zp)] under a one-centered
    unit-gradient penalty on random interpolates; the returned gradient is the
    negated ascent direction plus the penalty gradient, ready for a minimizer.
    """
    ne, np_ = ze.shape[0], zp.shape[0]
    n = min(ne, np_)
    g_e, _ = nets.grad(spec, params, ze, np.full((ne, 1), -lam / ne))
    g_p, _ = nets.grad(spec, params, zp, np.full((np_, 1), lam / np_))
    eps = rng.uniform(0.0, 1.0, size=(n, 1))
    zi = eps * ze[:n] + (1.0 - eps) * zp[:n]
    gi = nets.input_grad(spec, params, zi, np.ones((n, 1)))
    norms = np.sqrt((gi**2).sum(axis=1) + 1e-12)
    pen_value = penalty_coef * ((norms - 1.0) ** 2).mean()
    v = (2.0 * penalty_coef / n) * ((norms - 1.0) / norms)[:, None] * gi
    pen_grad = nets.grad_of_input_grad(spec, params, zi, v)
    return g_e + g_p + pen_grad, float(pen_value)


class RewardModel:
    """One reward model instance; the variant fixes both nets and updates."""

    def __init__(
        self,
        cfg: RewardConfig,
        obs_dim: int,
        act_dim: int,
        measure_dim: int,
        rng: np.random.Generator,
        obs_norm: RunningNorm | None = None,
    ):
        if cfg.variant not in VARIANTS:
            raise ValueError(f"unknown variant {cfg.variant!r}")
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.measure_dim = measure_dim
        self.obs_norm = obs_norm
        self.conditioned = measure_conditioned(cfg.variant)
        self.x_dim = obs_dim + act_dim + (measure_dim if self.conditioned else 0)

        h = tuple(cfg.hidden)
        if cfg.variant == "gail":
            self.disc_spec = MlpSpec((self.x_dim, *h, 1))
            self.disc_params = nets.init_params(self.disc_spec, rng)
            self._opt_disc = nets.make_optimizer(cfg.optimizer, cfg.lr)
        else:
            self.enc_spec = MlpSpec((self.x_dim, *h, cfg.latent_dim))
            self.dec_spec = MlpSpec((cfg.latent_dim, *h, self.x_dim))
            self.lat_spec = MlpSpec((cfg.latent_dim, *h, 1))
            self.enc_params = nets.init_params(self.enc_spec, rng)
            self.dec_params = nets.init_params(self.dec_spec, rng)
            self.lat_params = nets.init_params(self.lat_spec, rng)
            self._opt_enc = nets.make_optimizer(cfg.optimizer, cfg.lr)
            self._opt_dec = nets.make_optimizer(cfg.optimizer, cfg.lr)
            self._opt_lat = nets.make_optimizer(cfg.optimizer, cfg.lr)

    # ---------------------------------------------------------------- inputs

    def build_input(self, obs: np.ndarray, act: np.ndarray, delta: np.ndarray | None) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        act = np.atleast_2d(np.asarray(act, dtype=np.float64))
        if obs.shape[1] != self.obs_dim or act.shape[1] != self.act_dim:
            raise ValueError("observation/action width mismatch")
        s = self.obs_norm.normalize(obs) if self.obs_norm is not None else obs
        parts = [s, act]
        if self.conditioned:
            if delta is None:
                raise ValueError(f"variant {self.cfg.variant!r} requires per-step measures")
            d = np.atleast_2d(np.asarray(delta, dtype=np.float64))
            if d.shape[1] != self.measure_dim:
                raise ValueError("measure width mismatch")
            parts.append(d)
        return np.concatenate(parts, axis=1)

    def encode(self, x: np.ndarray) -> np.ndarray:
        return nets.forward(self.enc_spec, self.enc_params, x)

    # ---------------------------------------------------------------- reward

    def base_reward(self, obs: np.ndarray, act: np.ndarray, delta: np.ndarray | None) -> np.ndarray:
        """Per-step base reward; deterministic in the model parameters."""
        x = self.build_input(obs, act, delta)
        if self.cfg.variant == "gail":
            logit = nets.forward(self.disc_spec, self.disc_params, x)
        else:
            z = self.encode(x)
            logit = nets.forward(self.lat_spec, self.lat_params, z)
        if is_wasserstein(self.cfg.variant):
            return logit[:, 0].copy()
        d = np.clip(_sigmoid(logit[:, 0]), self.cfg.prob_clamp, 1.0 - self.cfg.prob_clamp)
        return -np.log(1.0 - d)

    # ---------------------------------------------------------------- updates

    def update(self, expert: tuple, policy: tuple, rng: np.random.Generator) -> dict:
        """One minibatch update. expert/policy are (obs, act, delta) triples."""
        xe = self.build_input(*expert)
        xp = self.build_input(*policy)
        if xe.shape[0] == 0 or xp.shape[0] == 0:
            raise ValueError("empty batch")
        if self.cfg.variant == "gail":
            return self._update_gail(xe, xp, rng)
        if self.cfg.variant == "wae_gail":
            return self._update_wae_gail(xe, xp, rng)
        return self._update_wae_wgail(xe, xp, rng)

    def _update_gail(self, xe: np.ndarray, xp: np.ndarray, rng: np.random.Generator) -> dict:
        ne, np_ = xe.shape[0], xp.shape[0]
        le = nets.forward(self.disc_spec, self.disc_params, xe)
        lp = nets.forward(self.disc_spec, self.disc_params, xp)
        bce = _softplus(-le).mean() + _softplus(lp).mean()
        ge, _ = nets.grad(self.disc_spec, self.disc_params, xe, (_sigmoid(le) - 1.0) / ne)
        gp_, _ = nets.grad(self.disc_spec, self.disc_params, xp, _sigmoid(lp) / np_)

        pen_value, pen_grad = self._zero_centered_penalty(
            self.disc_spec, self.disc_params, xe, xp, rng
        )
        self.disc_params = self._opt_disc.step(self.disc_params, ge + gp_ + pen_grad)
        return {"critic_loss": float(bce), "penalty": float(pen_value), "ae_loss": 0.0}

    def _zero_centered_penalty(self, spec, params, xe, xp, rng):
        """coef * mean ||d logit / d x||^2 on random interpolates, plus its
        parameter gradient. Zero for a constant discriminator."""
        n = min(xe.shape[0], xp.shape[0])
        eps = rng.uniform(0.0, 1.0, size=(n, 1))
        xi = eps * xe[:n] + (1.0 - eps) * xp[:n]
        gi = nets.input_grad(spec, params, xi, np.ones((n, 1)))
        value = self.cfg.gan_penalty_coef * (gi**2).sum(axis=1).mean()
        v = (2.0 * self.cfg.gan_penalty_coef / n) * gi
        return value, nets.grad_of_input_grad(spec, params, xi, v)

    def _update_wae_gail(self, xe: np.ndarray, xp: np.ndarray, rng: np.random.Generator) -> dict:
        lam = self.cfg.reg_weight
        ne, np_ = xe.shape[0], xp.shape[0]
        ze = self.encode(xe)
        zp = self.encode(xp)
        zprior = rng.standard_normal((ne, self.cfg.latent_dim))

        # Discriminator ascends log D on prior and expert codes, log(1 - D) on
        # policy codes; equivalently descends the negated objective.
        l_pr = nets.forward(self.lat_spec, self.lat_params, zprior)
        l_e = nets.forward(self.lat_spec, self.lat_params, ze)
        l_p = nets.forward(self.lat_spec, self.lat_params, zp)
        d_obj = (lam / ne) * (-_softplus(-l_pr).sum() - _softplus(-l_e).sum()) - (
            lam / np_
        ) * _softplus(l_p).sum()
        g_pr, _ = nets.grad(self.lat_spec, self.lat_params, zprior, -(lam / ne) * (1.0 - _sigmoid(l_pr)))
        g_e, _ = nets.grad(self.lat_spec, self.lat_params, ze, -(lam / ne) * (1.0 - _sigmoid(l_e)))
        g_p, _ = nets.grad(self.lat_spec, self.lat_params, zp, (lam / np_) * _sigmoid(l_p))
        self.lat_params = self._opt_lat.step(self.lat_params, g_pr + g_e + g_p)

        # Encoder/decoder descend reconstruction minus lam * log D on both codes,
        # against the refreshed discriminator.
        recon, enc_grad, dec_grad = self._recon_grads(xe, ze, xp, zp)
        if lam != 0.0:
            l_e = nets.forward(self.lat_spec, self.lat_params, ze)
            l_p = nets.forward(self.lat_spec, self.lat_params, zp)
            dze = nets.input_grad(self.lat_spec, self.lat_params, ze, -(lam / ne) * (1.0 - _sigmoid(l_e)))
            dzp = nets.input_grad(self.lat_spec, self.lat_params, zp, -(lam / np_) * (1.0 - _sigmoid(l_p)))
            ge, _ = nets.grad(self.enc_spec, self.enc_params, xe, dze)
            gp2, _ = nets.grad(self.enc_spec, self.enc_params, xp, dzp)
            enc_grad = enc_grad + ge + gp2
            ae_loss = recon - lam * ((-_softplus(-l_e)).mean() + (-_softplus(-l_p)).mean())
        else:
            ae_loss = recon
        self.dec_params = self._opt_dec.step(self.dec_params, dec_grad)
        self.enc_params = self._opt_enc.step(self.enc_params, enc_grad)
        return {"critic_loss": float(-d_obj), "ae_loss": float(ae_loss), "recon": float(recon)}

    def _update_wae_wgail(self, xe: np.ndarray, xp: np.ndarray, rng: np.random.Generator) -> dict:
        lam = self.cfg.reg_weight
        ne, np_ = xe.shape[0], xp.shape[0]
        ze = self.encode(xe)
        zp = self.encode(xp)

        # Critic phase: n_critic ascent steps on the expert/policy score gap,
        # kept near 1-Lipschitz by a unit-gradient penalty on interpolates.
        pen_value = 0.0
        for _ in range(self.cfg.n_critic):
            g, pen_value = critic_step_grad(
                self.lat_spec, self.lat_params, ze, zp, lam, self.cfg.critic_penalty_coef, rng
            )
            self.lat_params = self._opt_lat.step(self.lat_params, g)

        gap = lam * (
            nets.forward(self.lat_spec, self.lat_params, ze).mean()
            - nets.forward(self.lat_spec, self.lat_params, zp).mean()
        )

        # Encoder/decoder phase: reconstruction plus the critic gap, critic
        # frozen. The encoder flows through both terms; the decoder through
        # reconstruction only.
        recon, enc_grad, dec_grad = self._recon_grads(xe, ze, xp, zp)
        if lam != 0.0:
            dze = nets.input_grad(self.lat_spec, self.lat_params, ze, np.full((ne, 1), lam / ne))
            dzp = nets.input_grad(self.lat_spec, self.lat_params, zp, np.full((np_, 1), -lam / np_))
            ge, _ = nets.grad(self.enc_spec, self.enc_params, xe, dze)
            gp2, _ = nets.grad(self.enc_spec, self.enc_params, xp, dzp)
            enc_grad = enc_grad + ge + gp2
        self.dec_params = self._opt_dec.step(self.dec_params, dec_grad)
        self.enc_params = self._opt_enc.step(self.enc_params, enc_grad)
        return {
            "critic_loss": float(gap),
            "penalty": float(pen_value),
            "ae_loss": float(recon + gap),
            "recon": float(recon),
        }

    def _recon_grads(self, xe, ze, xp, zp):
        """Mean squared-Euclidean reconstruction loss over both batches and its
        gradients for encoder and decoder."""
        ne, np_ = xe.shape[0], xp.shape[0]
        re = nets.forward(self.dec_spec, self.dec_params, ze)
        rp = nets.forward(self.dec_spec, self.dec_params, zp)
        recon = ((re - xe) ** 2).sum(axis=1).mean() + ((rp - xp) ** 2).sum(axis=1).mean()
        de, ie = nets.grad(self.dec_spec, self.dec_params, ze, 2.0 * (re - xe) / ne)
        dp, ip = nets.grad(self.dec_spec, self.dec_params, zp, 2.0 * (rp - xp) / np_)
        ge, _ = nets.grad(self.enc_spec, self.enc_params, xe, ie)
        gp, _ = nets.grad(self.enc_spec, self.enc_params, xp, ip)
        return recon, ge + gp, de + dp

    def run_epoch(self, expert: tuple, policy: tuple, rng: np.random.Generator) -> dict:
        """cfg.epochs passes over the policy data in shuffled minibatches, each
        paired with a same-size expert sample drawn with replacement."""
        e_obs, e_act, e_del = (np.atleast_2d(np.asarray(a)) for a in expert)
        p_obs, p_act, p_del = (np.atleast_2d(np.asarray(a)) for a in policy)
        ne, m = e_obs.shape[0], p_obs.shape[0]
        if ne == 0 or m == 0:
            raise ValueError("empty demonstration or policy data")
        totals: dict[str, float] = {}
        count = 0
        for _ in range(self.cfg.epochs):
            perm = rng.permutation(m)
            for start in range(0, m, self.cfg.batch_size):
                idx = perm[start : start + self.cfg.batch_size]
                if idx.size < 2:
                    continue
                ei = rng.integers(0, ne, size=idx.size)
                losses = self.update(
                    (e_obs[ei], e_act[ei], e_del[ei]),
                    (p_obs[idx], p_act[idx], p_del[idx]),
                    rng,
                )
                for k, v in losses.items():
                    totals[k] = totals.get(k, 0.0) + v
                count += 1
        if count == 0:
            raise ValueError("policy data yielded no usable minibatch")
        return {k: v / count for k, v in totals.items()}

    # ------------------------------------------------------------ checkpoints

    def _net_items(self):
        if self.cfg.variant == "gail":
            return [("disc", self.disc_spec, "disc_params")]
        return [
            ("enc", self.enc_spec, "enc_params"),
            ("dec", self.dec_spec, "dec_params"),
            ("lat", self.lat_spec, "lat_params"),
        ]

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "manifest.txt"), "w") as f:
            f.write(f"variant={self.cfg.variant}\n")
            f.write(f"bonus_enabled={int(self.cfg.bonus_enabled)}\n")
            f.write(f"latent_dim={self.cfg.latent_dim}\n")
            f.write(f"hidden={','.join(str(w) for w in self.cfg.hidden)}\n")
            f.write(f"dims={self.obs_dim},{self.act_dim},{self.measure_dim}\n")
        for name, spec, attr in self._net_items():
            nets.save_param_vector(os.path.join(directory, f"{name}.bin"), spec.widths, getattr(self, attr))

    @classmethod
    def load(cls, directory, obs_norm: RunningNorm | None = None) -> "RewardModel":
        kv = {}
        with open(os.path.join(directory, "manifest.txt")) as f:
            for line in f:
                k, _, v = line.strip().partition("=")
                kv[k] = v
        cfg = RewardConfig(
            variant=kv["variant"],
            bonus_enabled=bool(int(kv["bonus_enabled"])),
            latent_dim=int(kv["latent_dim"]),
            hidden=tuple(int(w) for w in kv["hidden"].split(",")),
        )
        od, ad, md = (int(v) for v in kv["dims"].split(","))
        model = cls(cfg, od, ad, md, np.random.Generator(np.random.PCG64(0)), obs_norm)
        for name, spec, attr in model._net_items():
            setattr(model, attr, nets.load_param_vector(os.path.join(directory, f"{name}.bin"), spec.widths))
        return model
