"""Two-leg point walker on a line.

Each leg carries a phase angle; a leg touches the ground while sin(phase) is
negative, and ground contact converts the leg's swing into forward thrust.
Actions in [-1, 1]^2 pick each leg's phase speed between a slow and a fast
rate, so a policy shapes how long each leg spends on the ground. The fraction
of steps each leg is in contact is the two-dimensional behaviour descriptor
used by the archive.

Per step (all float64):
    contact_i   = [sin(phi_i) < 0]                      (pre-step state)
    speed       = 0.5 * sum_i contact_i * |cos(phi_i)|  (pre-step state)
    true_reward = speed - 0.05 * (a_1^2 + a_2^2)
    phi_i'      = (phi_i + 0.05 + 0.55 * (a_i + 1) / 2) mod 2 pi

Observations: (sin phi1, cos phi1, sin phi2, cos phi2, c1, c2, t / T).
Episodes last exactly T steps (default 100).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
RATE_MIN = 0.05
RATE_SPAN = 0.55
ACTION_COST = 0.05
DEFAULT_HORIZON = 100

OBS_DIM = 7
ACT_DIM = 2
MEASURE_DIM = 2


@dataclass
class EnvState:
    x: float
    phi1: float
    phi2: float
    c1: int
    c2: int
    t: int


@dataclass
class StepOutcome:
    state: EnvState
    obs: np.ndarray
    true_reward: float
    delta: np.ndarray  # pre-step contact flags, the per-step measure
    done: bool


def _contacts(phi: np.ndarray) -> np.ndarray:
    return (np.sin(phi) < 0.0).astype(np.float64)


def reset(seed: int) -> EnvState:
    """Fresh state with phases drawn uniformly from [0, 2 pi)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    phi = rng.uniform(0.0, TWO_PI, size=2)
    c = _contacts(phi)
    return EnvState(x=0.0, phi1=float(phi[0]), phi2=float(phi[1]), c1=int(c[0]), c2=int(c[1]), t=0)


def observe(state: EnvState, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    return np.array(
        [
            np.sin(state.phi1),
            np.cos(state.phi1),
            np.sin(state.phi2),
            np.cos(state.phi2),
            float(state.c1),
            float(state.c2),
            state.t / horizon,
        ]
    )

def step(state: EnvState, action: np.ndarray, horizon: int = DEFAULT_HORIZON) -> StepOutcome:
    """Advance one step. Actions are clamped to [-1, 1] on entry.

    Raises if the episode is already over; callers reset instead.
    """
    if state.t >= horizon:
        raise ValueError(f"episode is over (t={state.t}, horizon={horizon})")
    a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
    phi = np.array([state.phi1, state.phi2])
    c = np.array([float(state.c1), float(state.c2)])
    speed = 0.5 * float((c * np.abs(np.cos(phi))).sum())
    true_reward = speed - ACTION_COST * float((a**2).sum())
    new_phi = np.mod(phi + RATE_MIN + RATE_SPAN * (a + 1.0) / 2.0, TWO_PI)
    nc = _contacts(new_phi)
    nxt = EnvState(
        x=state.x + speed,
        phi1=float(new_phi[0]),
        phi2=float(new_phi[1]),
        c1=int(nc[0]),
        c2=int(nc[1]),
        t=state.t + 1,
    )
    return StepOutcome(
        state=nxt,
        obs=observe(nxt, horizon),
        true_reward=true_reward,
        delta=c.copy(),
        done=nxt.t >= horizon,
    )


def episodic_measure(deltas: np.ndarray) -> np.ndarray:
    """Componentwise mean of the per-step contact flags over an episode."""
    d = np.atleast_2d(np.asarray(deltas, dtype=np.float64))
    if d.shape[0] == 0:
        raise ValueError("episodic_measure of an empty trajectory")
    return d.mean(axis=0)


class VecWalker:
    """Batch of independent walkers stepped in lockstep.

    Finished walkers auto-reset with seeds drawn from a dedicated stream, so a
    collection loop can run past episode boundaries. Completed-episode returns
    and measures are handed back by `step`.
    """

    def __init__(self, n: int, seed_seq: np.random.SeedSequence, horizon: int = DEFAULT_HORIZON):
        self.n = n
        self.horizon = horizon
        self._seed_rng = np.random.Generator(np.random.PCG64(seed_seq))
        self.phi = np.zeros((n, 2))
        self.x = np.zeros(n)
        self.t = np.zeros(n, dtype=np.int64)
        self._sin = np.zeros((n, 2))
        self._cos = np.zeros((n, 2))
        self.contact = np.zeros((n, 2))
        self._ep_true = np.zeros(n)
        self._ep_delta = np.zeros((n, 2))
        self._reset_mask(np.ones(n, dtype=bool))

    def _reset_mask(self, mask: np.ndarray) -> None:
        idx = np.flatnonzero(mask)
        for i in idx:
            seed = int(self._seed_rng.integers(0, 2**63 - 1))
            rng = np.random.Generator(np.random.PCG64(seed))
            self.phi[i] = rng.uniform(0.0, TWO_PI, size=2)
        self.x[idx] = 0.0
        self.t[idx] = 0
        self._ep_true[idx] = 0.0
        self._ep_delta[idx] = 0.0
        self._sin[idx] = np.sin(self.phi[idx])
        self._cos[idx] = np.cos(self.phi[idx])
        self.contact[idx] = (self._sin[idx] < 0.0).astype(np.float64)

    def obs(self) -> np.ndarray:
        out = np.empty((self.n, OBS_DIM))
        out[:, 0] = self._sin[:, 0]
        out[:, 1] = self._cos[:, 0]
        out[:, 2] = self._sin[:, 1]
        out[:, 3] = self._cos[:, 1]
        out[:, 4:6] = self.contact
        out[:, 6] = self.t / self.horizon
        return out

    def step(self, actions: np.ndarray):
        """Step every walker; returns (obs, true_reward, delta, done, finished).

        `finished` is a list of (true_return, measure) for episodes that ended
        on this step, in walker order.
        """
        a = np.clip(np.asarray(actions, dtype=np.float64).reshape(self.n, 2), -1.0, 1.0)
        delta = self.contact.copy()
        speed = 0.5 * (self.contact * np.abs(self._cos)).sum(axis=1)
        true_reward = speed - ACTION_COST * (a**2).sum(axis=1)

        self.x += speed
        self.phi = np.mod(self.phi + RATE_MIN + RATE_SPAN * (a + 1.0) / 2.0, TWO_PI)
        self._sin = np.sin(self.phi)
        self._cos = np.cos(self.phi)
        self.contact = (self._sin < 0.0).astype(np.float64)
        self.t += 1

        self._ep_true += true_reward
        self._ep_delta += delta
        done = self.t >= self.horizon

        finished = []
        if done.any():
            for i in np.flatnonzero(done):
                finished.append((float(self._ep_true[i]), self._ep_delta[i] / self.t[i]))
            self._reset_mask(done)
        return self.obs(), true_reward, delta, done.astype(np.float64), finished


def dump_trajectory(path, transcript: list[tuple]) -> None:
    """Debug dump, one line per step: t,x,phi1,phi2,c1,c2,a1,a2,true_reward."""
    with open(path, "w") as f:
        for t, x, phi1, phi2, c1, c2, a1, a2, r in transcript:
            f.write(
                f"{t},{float(x)!r},{float(phi1)!r},{float(phi2)!r},{int(c1)},{int(c2)},"
                f"{float(a1)!r},{float(a2)!r},{float(r)!r}\n"
            )


def rollout_transcript(policy_fn, seed: int, horizon: int = DEFAULT_HORIZON):
    """Roll one episode with `policy_fn(obs) -> action`; returns (transcript, outcome arrays)."""
    state = reset(seed)
    rows = []
    obs = observe(state, horizon)
    obs_list, act_list, delta_list, rew_list = [], [], [], []
    while state.t < horizon:
        a = np.clip(np.asarray(policy_fn(obs), dtype=np.float64).reshape(2), -1.0, 1.0)
        out = step(state, a, horizon)
        rows.append(
            (state.t, state.x, state.phi1, state.phi2, state.c1, state.c2, a[0], a[1], out.true_reward)
        )
        obs_list.append(obs)
        act_list.append(a)
        delta_list.append(out.delta)
        rew_list.append(out.true_reward)
        state = out.state
        obs = out.obs
    return rows, (np.array(obs_list), np.array(act_list), np.array(delta_list), np.array(rew_list))
