"""Experiment configuration: one flat dataclass, serialized as key=value lines.

Defaults are desk-scale (minutes on one core). `paper_scale()` switches the
sizes used for full-scale training runs; it is a preset, not a separate code
path.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .rewards import VARIANTS


@dataclass
class Config:
    # search loop
    iterations: int = 200
    branching: int = 8
    sigma_g: float = 0.5
    grid_resolution: int = 20
    n1: int = 4
    n2: int = 4
    eval_episodes: int = 4
    seed: int = 0

    # environment
    horizon: int = 100

    # policy / critic
    policy_hidden: tuple[int, ...] = (32, 32)
    critic_hidden: tuple[int, ...] = (32, 32)

    # ppo
    n_envs: int = 32
    rollout_length: int = 64
    ppo_epochs: int = 4
    minibatches: int = 4
    ppo_lr: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    normalize_obs: bool = True
    normalize_rewards: bool = True

    # reward model
    variant: str = "mcwae_wgail"
    bonus: bool = True
    latent_dim: int = 8
    reg_weight: float = 1.0
    model_lr: float = 3e-4
    model_hidden: tuple[int, ...] = (64, 64)
    n_critic: int = 5
    model_epochs: int = 1
    model_batch: int = 256
    gan_penalty_coef: float = 10.0
    critic_penalty_coef: float = 10.0

    # exploration bonus
    count_resolution: int = 10

    # demonstrations
    demos: str = ""          # path to a demonstration file ("" = expert mode)
    demo_pool: int = 50
    demo_count: int = 4

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def paper_scale(self) -> "Config":
        """Full-scale sizes for long runs on bigger hardware."""
        return replace(
            self,
            iterations=2000,
            grid_resolution=50,
            n1=10,
            n2=10,
            policy_hidden=(128, 128),
            critic_hidden=(256, 256),
            rollout_length=128,
            minibatches=8,
            model_hidden=(100, 100),
        )


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse(raw: str, ftype, name: str):
    raw = raw.strip()
    if ftype is bool:
        if raw not in ("true", "false"):
            raise ValueError(f"{name}: expected true/false, got {raw!r}")
        return raw == "true"
    if ftype is int:
        return int(raw)
    if ftype is float:
        return float(raw)
    if ftype is str:
        return raw
    # remaining fields are integer tuples
    return tuple(int(x) for x in raw.split(",")) if raw else ()


def save_config(cfg: Config, path) -> None:
    with open(path, "w") as f:
        for fld in fields(cfg):
            f.write(f"{fld.name}={_format(getattr(cfg, fld.name))}\n")


def load_config(path) -> Config:
    """Parse key=value lines; unknown keys and malformed lines are errors."""
    by_name = {f.name: f.type for f in fields(Config)}
    types = {"int": int, "float": float, "str": str, "bool": bool}
    kwargs = {}
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep:
                raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
            if key not in by_name:
                raise ValueError(f"{path}:{ln}: unknown key {key!r}")
            ftype = types.get(by_name[key], tuple)
            kwargs[key] = _parse(raw, ftype, key)
    return Config(**kwargs)
