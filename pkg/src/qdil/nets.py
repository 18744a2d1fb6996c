"""Minimal feed-forward network stack with exact reverse-mode gradients.

Plain-numpy MLPs (tanh hidden layers, identity output) whose parameters live
in a single flat float64 vector. Gradients are computed with respect to both
parameters and inputs; a second-order routine differentiates the input
gradient itself with respect to the parameters, which is what the
gradient-penalty terms in the reward models need.

Parameter layout: for each layer, the weight matrix (out x in, row-major)
followed by the bias vector. `flatten`/`unflatten` round-trip bit-exactly.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of an MLP: layer widths from input to output."""

    widths: tuple[int, ...]

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("MlpSpec needs at least input and output widths")
        if any(w <= 0 for w in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        return sum((i + 1) * o for i, o in zip(self.widths[:-1], self.widths[1:]))

    def layer_slices(self) -> list[tuple[slice, slice, int, int]]:
        """(weight slice, bias slice, in, out) per layer into the flat vector."""
        out = []
        off = 0
        for i, o in zip(self.widths[:-1], self.widths[1:]):
            w = slice(off, off + i * o)
            off += i * o
            b = slice(off, off + o)
            off += o
            out.append((w, b, i, o))
        return out


def init_params(spec: MlpSpec, rng: np.random.Generator, out_scale: float = 1.0) -> np.ndarray:
    """Scaled-uniform (Glorot) init, zero biases, deterministic from rng.

    out_scale multiplies the final layer's weights; policy mean nets pass
    0.01 so fresh policies act near zero.
    """
    flat = np.zeros(spec.n_params)
    for li, (ws, bs, i, o) in enumerate(spec.layer_slices()):
        bound = np.sqrt(6.0 / (i + o))
        w = rng.uniform(-bound, bound, size=(o, i))
        if li == spec.n_layers - 1:
            w *= out_scale
        flat[ws] = w.ravel()
    return flat


def unflatten(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (no copies) of the flat vector as (W, b) pairs."""
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} params, got shape {params.shape}")
    return [(params[ws].reshape(o, i), params[bs]) for ws, bs, i, o in spec.layer_slices()]


def flatten(spec: MlpSpec, layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for w, b in layers:
        parts.append(np.asarray(w, dtype=np.float64).ravel())
        parts.append(np.asarray(b, dtype=np.float64).ravel())
    flat = np.concatenate(parts)
    if flat.shape != (spec.n_params,):
        raise ValueError("layer shapes do not match spec")
    return flat


def _forward_cached(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    """Returns (output, hs) where hs[l] is the post-activation of layer l (hs[0] = input)."""
    layers = unflatten(spec, params)
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    hs = [h]
    for li, (w, b) in enumerate(layers):
        z = h @ w.T + b
        h = np.tanh(z) if li < spec.n_layers - 1 else z
        hs.append(h)
    return h, hs


def forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Batched forward pass. x: (n, in) or (in,); returns matching shape."""
    squeeze = np.ndim(x) == 1
    out, _ = _forward_cached(spec, params, x)
    return out[0] if squeeze else out


def grad(spec: MlpSpec, params: np.ndarray, x: np.ndarray, upstream: np.ndarray):
    """Reverse-mode gradients of sum_i <upstream_i, f(x_i)>.

    Returns (param_grad, input_grad): flat vector summed over the batch and
    per-sample (n, in) array.
    """
    layers = unflatten(spec, params)
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    u = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if u.shape != (x2.shape[0], spec.out_dim):
        raise ValueError(f"upstream shape {u.shape} does not match batch/out dims")
    _, hs = _forward_cached(spec, params, x2)

    pgrad = np.zeros(spec.n_params)
    slices = spec.layer_slices()
    g = u
    for li in range(spec.n_layers - 1, -1, -1):
        w, _ = layers[li]
        ws, bs, i, o = slices[li]
        pgrad[ws] = (g.T @ hs[li]).ravel()
        pgrad[bs] = g.sum(axis=0)
        g = g @ w
        if li > 0:
            g = g * (1.0 - hs[li] ** 2)
    return pgrad, g


def input_grad(spec: MlpSpec, params: np.ndarray, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return grad(spec, params, x, upstream)[1]


def grad_of_input_grad(spec: MlpSpec, params: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Parameter gradient of sum_i <v_i, d f(x_i) / d x_i> for scalar-output nets.

    This is the double-backward needed by gradient penalties: the inner input
    gradient is recomputed as a forward tangent sweep (direction v) and the
    whole sweep is then differentiated with respect to the parameters.
    """
    if spec.out_dim != 1:
        raise ValueError("grad_of_input_grad requires a scalar-output net")
    layers = unflatten(spec, params)
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    v2 = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if v2.shape != x2.shape:
        raise ValueError("v must match x shape")

    L = spec.n_layers
    # Forward sweep carrying tangents: Rh tracks d h / d eps along x + eps v.
    hs = [x2]
    rhs = [v2]
    zs = [None]
    rzs = [None]
    h, rh = x2, v2
    for li, (w, b) in enumerate(layers):
        z = h @ w.T + b
        rz = rh @ w.T
        if li < L - 1:
            h = np.tanh(z)
            rh = (1.0 - h**2) * rz
        else:
            h, rh = z, rz
        hs.append(h)
        rhs.append(rh)
        zs.append(z)
        rzs.append(rz)

    # Reverse sweep over the tangent computation. az/arz are adjoints of the
    # primal and tangent pre-activations of the current layer.
    pgrad = np.zeros(spec.n_params)
    slices = spec.layer_slices()
    n = x2.shape[0]
    arz = np.ones((n, 1))
    az = np.zeros((n, 1))
    for li in range(L - 1, -1, -1):
        w, _ = layers[li]
        ws, bs, i, o = slices[li]
        pgrad[ws] = (az.T @ hs[li] + arz.T @ rhs[li]).ravel()
        pgrad[bs] = az.sum(axis=0)
        if li == 0:
            break
        ah = az @ w
        arh = arz @ w
        hprev = hs[li]          # tanh(z_{li}) of the layer below
        s = 1.0 - hprev**2
        arz = s * arh
        az = (-2.0 * hprev * s) * rzs[li] * arh + s * ah
    return pgrad


class Adam:
    """Standard Adam with bias correction; purely functional step."""

    def __init__(self, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class Sgd:
    """Plain gradient descent, same interface as Adam."""

    def __init__(self, lr: float = 1e-3):
        self.lr = lr

    def step(self, params: np.ndarray, g: np.ndarray) -> np.ndarray:
        return params - self.lr * g


def make_optimizer(kind: str, lr: float):
    if kind == "adam":
        return Adam(lr=lr)
    if kind == "sgd":
        return Sgd(lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")


class RunningNorm:
    """Running mean/variance normalizer (parallel Welford updates).

    Shared between the policy-gradient observation pipeline and the reward
    models so both see the same input scaling. `frozen` stops updates, which
    makes downstream rollout collection a pure function of its arguments.
    """

    def __init__(self, dim: int, clip: float = 10.0):
        self.dim = dim
        self.clip = clip
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.frozen = False

    def update(self, batch: np.ndarray) -> None:
        if self.frozen:
            return
        b = np.atleast_2d(batch)
        n = b.shape[0]
        if n == 0:
            return
        bmean = b.mean(axis=0)
        bvar = b.var(axis=0)
        tot = self.count + n
        delta = bmean - self.mean
        self.mean = self.mean + delta * (n / tot)
        m2 = self.var * self.count + bvar * n + delta**2 * (self.count * n / tot)
        self.var = m2 / tot
        self.count = tot

    def normalize(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(z, -self.clip, self.clip)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(f"count={float(self.count)!r}\n")
            f.write("mean=" + ",".join(repr(float(v)) for v in self.mean) + "\n")
            f.write("var=" + ",".join(repr(float(v)) for v in self.var) + "\n")

    @classmethod
    def load(cls, path) -> "RunningNorm":
        kv = {}
        with open(path) as f:
            for line in f:
                k, _, v = line.strip().partition("=")
                kv[k] = v
        norm = cls(dim=len(kv["mean"].split(",")))
        norm.count = float(kv["count"])
        norm.mean = np.array([float(x) for x in kv["mean"].split(",")])
        norm.var = np.array([float(x) for x in kv["var"].split(",")])
        return norm


LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


@dataclass
class PolicySpec:
    """Diagonal-Gaussian policy: MLP mean head plus state-independent log-std.

    The flat policy vector is [mlp params | log_std (act_dim entries)]; the
    log-std is stored raw and clamped on use, with zero gradient outside the
    clamp range.
    """

    obs_dim: int
    act_dim: int
    hidden: tuple[int, ...] = (32, 32)
    mlp: MlpSpec = field(init=False)

    def __post_init__(self):
        self.mlp = MlpSpec((self.obs_dim, *self.hidden, self.act_dim))

    @property
    def n_params(self) -> int:
        return self.mlp.n_params + self.act_dim

    def init(self, rng: np.random.Generator, init_log_std: float = 0.0) -> np.ndarray:
        flat = np.empty(self.n_params)
        flat[: self.mlp.n_params] = init_params(self.mlp, rng, out_scale=0.01)
        flat[self.mlp.n_params :] = init_log_std
        return flat

    def split(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} policy params, got {params.shape}")
        return params[: self.mlp.n_params], params[self.mlp.n_params :]

    def mean_action(self, params: np.ndarray, obs: np.ndarray) -> np.ndarray:
        mp, _ = self.split(params)
        return forward(self.mlp, mp, obs)

    def std(self, params: np.ndarray) -> np.ndarray:
        _, ls = self.split(params)
        return np.exp(np.clip(ls, LOG_STD_MIN, LOG_STD_MAX))

    def sample(self, params: np.ndarray, obs: np.ndarray, rng: np.random.Generator):
        """Draw actions and their log-probs for a batch of observations."""
        mean = self.mean_action(params, obs)
        std = self.std(params)
        noise = rng.standard_normal(mean.shape)
        act = mean + std * noise
        lp = self.log_prob(params, obs, act)
        return act, lp

    def log_prob(self, params: np.ndarray, obs: np.ndarray, act: np.ndarray) -> np.ndarray:
        mean = self.mean_action(params, obs)
        std = self.std(params)
        z = (act - mean) / std
        return -0.5 * (z**2).sum(axis=-1) - np.log(std).sum() - 0.5 * self.act_dim * np.log(2 * np.pi)

    def log_prob_grad(self, params: np.ndarray, obs: np.ndarray, act: np.ndarray, upstream: np.ndarray):
        """Gradient of sum_i upstream_i * log_prob_i wrt the flat policy vector."""
        mp, ls = self.split(params)
        obs2 = np.atleast_2d(obs)
        act2 = np.atleast_2d(act)
        u = np.asarray(upstream, dtype=np.float64).reshape(-1)
        mean = forward(self.mlp, mp, obs2)
        std = self.std(params)
        z = (act2 - mean) / std
        # d lp / d mean = z / std, d lp / d (clamped log_std) = z^2 - 1
        mean_up = u[:, None] * z / std
        mgrad, _ = grad(self.mlp, mp, obs2, mean_up)
        inside = (ls > LOG_STD_MIN) & (ls < LOG_STD_MAX)
        lsgrad = (u[:, None] * (z**2 - 1.0)).sum(axis=0) * inside
        return np.concatenate([mgrad, lsgrad])


PARAM_MAGIC = b"MLP1"


def widths_hash(widths: tuple[int, ...]) -> int:
    return zlib.crc32(np.asarray(widths, dtype="<u4").tobytes()) & 0xFFFFFFFF


def save_param_vector(path, widths: tuple[int, ...], values: np.ndarray) -> None:
    """Binary dump: 16-byte header (magic, layer count, widths hash, count),
    then the values as little-endian float32."""
    vals = np.asarray(values, dtype="<f4")
    header = PARAM_MAGIC + np.asarray(
        [len(widths) - 1, widths_hash(tuple(widths)), vals.size], dtype="<u4"
    ).tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(vals.tobytes())


def load_param_vector(path, widths: tuple[int, ...]) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16 or raw[:4] != PARAM_MAGIC:
        raise ValueError(f"{path}: not a parameter vector file")
    n_layers, whash, count = np.frombuffer(raw[4:16], dtype="<u4")
    if n_layers != len(widths) - 1 or whash != widths_hash(tuple(widths)):
        raise ValueError(f"{path}: architecture mismatch")
    vals = np.frombuffer(raw[16:], dtype="<f4")
    if vals.size != count:
        raise ValueError(f"{path}: truncated payload ({vals.size} of {count} values)")
    return vals.astype(np.float64)
