"""Deep Q-network written directly in numpy.

Forward and backward passes, Adam with global-norm clipping, a ring replay
buffer, soft reference updates, the epsilon schedule and the training loop.
Every episode is a single terminal transition, so the TD target reduces to
the reward.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .env import N_ACTIONS, OBS_SIZE, BearingsOnlyEnv
from .models import ScenarioConfig


class ModelCorruptionError(RuntimeError):
    """Non-finite activations or parameters."""


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    hidden_sizes: tuple = (256, 128, 64)
    buffer_capacity: int = 200_000
    batch_size: int = 256
    learning_rate: float = 3e-4
    grad_clip: float = 1.0
    target_update_every: int = 4
    tau: float = 0.01
    epsilon_start: float = 1.0
    epsilon_min: float = 0.05
    epsilon_decay: float = 0.99994
    gamma: float = 0.99
    episodes: int = 50_000
    warmup: int = 256
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.episodes < 0 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ConfigurationError("episodes, batch_size and buffer_capacity must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigurationError("tau must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparams":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


# ---------------------------------------------------------------------------
# network

def observation_scale(cfg: ScenarioConfig) -> np.ndarray:
    """Per-slot divisors mapping a physical observation to O(1) inputs."""
    d, v = cfg.d_max, cfg.v_max
    return np.array([d, d, v, v, d * d, d * d, d * d, v * v, v * v, v * v, 1.0, 1.0])


@dataclass
class QNetwork:
    weights: list
    biases: list
    obs_scale: np.ndarray = field(default_factory=lambda: np.ones(OBS_SIZE))

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def copy(self) -> "QNetwork":
        return QNetwork([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.obs_scale.copy())

    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def normalise(self, obs) -> np.ndarray:
        return np.asarray(obs, dtype=float) / self.obs_scale


def init_network(rng: np.random.Generator, hidden_sizes=(256, 128, 64),
                 n_in: int = OBS_SIZE, n_out: int = N_ACTIONS,
                 obs_scale: np.ndarray | None = None) -> QNetwork:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    sizes = [n_in, *hidden_sizes, n_out]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    scale = np.ones(n_in) if obs_scale is None else np.asarray(obs_scale, dtype=float)
    return QNetwork(weights, biases, scale)


def _forward_cache(net: QNetwork, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        with np.errstate(invalid="ignore", over="ignore"):
            h = acts[-1] @ W + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    if not np.all(np.isfinite(acts[-1])):
        raise ModelCorruptionError("non-finite Q-values")
    return acts


def forward(net: QNetwork, obs_normalised) -> np.ndarray:
    """Q-values for one normalised observation (shape 12) or a batch (B x 12)."""
    x = np.asarray(obs_normalised, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ModelCorruptionError("non-finite network input")
    return _forward_cache(net, x)[-1]


def q_values(net: QNetwork, obs) -> np.ndarray:
    """Q-values for physical-unit observations (applies the stored scaling)."""
    return forward(net, net.normalise(obs))


def backward(net: QNetwork, obs_normalised, actions, targets) -> tuple[list, float]:
    """Gradients of the mean squared TD error on the selected actions.

    ``actions`` are ids in 1..16. Returns ``(grads, loss)`` where ``grads``
    is ordered like :meth:`QNetwork.parameters`.
    """
    x = np.atleast_2d(np.asarray(obs_normalised, dtype=float))
    idx = np.asarray(actions, dtype=int) - 1
    y = np.asarray(targets, dtype=float)
    B = x.shape[0]
    acts = _forward_cache(net, x)
    rows = np.arange(B)
    err = acts[-1][rows, idx] - y
    loss = float(err @ err) / B

    delta = np.zeros_like(acts[-1])
    delta[rows, idx] = 2.0 * err / B
    grads = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (acts[i] > 0.0)
    return grads, loss


def loss_value(net: QNetwork, obs_normalised, actions, targets) -> float:
    q = forward(net, np.atleast_2d(obs_normalised))
    err = q[np.arange(q.shape[0]), np.asarray(actions, dtype=int) - 1] - np.asarray(targets, dtype=float)
    return float(err @ err) / q.shape[0]


# ---------------------------------------------------------------------------
# optimiser

@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_network(cls, net: QNetwork, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        params = net.parameters()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, beta1, beta2, eps)


def clip_global_norm(grads: list, max_norm: float) -> tuple[list, float]:
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm


def adam_step(net: QNetwork, grads: list, state: AdamState, lr: float,
              clip: float | None = 1.0) -> QNetwork:
    """In-place clipped Adam update with bias correction; returns ``net``."""
    grads, _ = clip_global_norm(grads, clip)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(net.parameters(), grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net


def soft_update(reference: QNetwork, online: QNetwork, tau: float) -> QNetwork:
    """``reference <- (1 - tau) reference + tau online``, in place."""
    if reference.layer_sizes != online.layer_sizes:
        raise ConfigurationError(
            f"layer mismatch: {reference.layer_sizes} vs {online.layer_sizes}")
    for r, o in zip(reference.parameters(), online.parameters()):
        r *= 1.0 - tau
        r += tau * o
    return reference


def epsilon(episode: int, hp: Hyperparams) -> float:
    return max(hp.epsilon_min, hp.epsilon_start * hp.epsilon_decay ** episode)


# ---------------------------------------------------------------------------
# replay

class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions."""

    def __init__(self, capacity: int, obs_size: int = OBS_SIZE):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_size))
        self.next_obs = np.zeros((self.capacity, obs_size))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity, dtype=bool)
        self._next = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action: int, reward: float, done: bool = True, next_obs=None) -> None:
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.dones[i] = done
        self.next_obs[i] = 0.0 if next_obs is None else next_obs
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform mini-batch without replacement: (obs, actions, rewards, dones, next_obs)."""
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.dones[idx], self.next_obs[idx]


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainingResult:
    net: QNetwork
    reference: QNetwork
    log: list = field(default_factory=list)
    rewards: np.ndarray | None = None
    buffer_size: int = 0


LOG_COLUMNS = ("episode", "epsilon", "loss", "reward_ma100")


def episode_seed(seed: int, episode: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, 0, episode])


def greedy_action(net: QNetwork, obs) -> int:
    return int(np.argmax(q_values(net, obs))) + 1


def train(env_factory: Callable[[], BearingsOnlyEnv], hp: Hyperparams | None = None,
          seed: int = 0, checkpoint_sink: Callable[[int, QNetwork], None] | None = None,
          checkpoint_every: int = 10_000, log_every: int = 100,
          progress: Callable[[int, dict], None] | None = None) -> TrainingResult:
    """Train a Q-network on fresh single-decision episodes.

    One terminal transition is stored per episode. Once ``hp.warmup``
    transitions are stored, one mini-batch gradient step follows every
    episode. The reference network is soft-updated every
    ``hp.target_update_every`` episodes and epsilon decays after each
    episode. All randomness derives from ``seed``.
    """
    hp = hp or Hyperparams()
    env = env_factory()
    env.record_trace = False
    scale = observation_scale(env.cfg)

    agent_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    net = init_network(np.random.default_rng(np.random.SeedSequence([seed, 2])),
                       hp.hidden_sizes, obs_scale=scale)
    reference = net.copy()
    adam = AdamState.for_network(net, hp.adam_beta1, hp.adam_beta2, hp.adam_eps)
    buffer = ReplayBuffer(hp.buffer_capacity)
    warmup = max(hp.warmup, hp.batch_size)

    rewards = np.zeros(hp.episodes)
    log = []
    loss = float("nan")
    for ep in range(hp.episodes):
        eps = epsilon(ep, hp)
        obs, _ = env.reset(episode_seed(seed, ep))
        if agent_rng.random() < eps:
            action = int(agent_rng.integers(1, N_ACTIONS + 1))
        else:
            action = greedy_action(net, obs)
        outcome = env.step(action)
        rewards[ep] = outcome.reward
        buffer.add(obs, action, outcome.reward, True)

        if len(buffer) >= warmup:
            b_obs, b_act, b_rew, b_done, b_next = buffer.sample(hp.batch_size, agent_rng)
            targets = b_rew.copy()
            live = ~b_done
            if live.any():
                targets[live] += hp.gamma * q_values(reference, b_next[live]).max(axis=1)
            grads, loss = backward(net, net.normalise(b_obs), b_act, targets)
            adam_step(net, grads, adam, hp.learning_rate, hp.grad_clip)

        if (ep + 1) % hp.target_update_every == 0:
            soft_update(reference, net, hp.tau)

        if (ep + 1) % log_every == 0 or ep + 1 == hp.episodes:
            row = {"episode": ep + 1, "epsilon": eps, "loss": loss,
                   "reward_ma100": float(rewards[max(0, ep - 99):ep + 1].mean())}
            log.append(row)
            if progress is not None:
                progress(ep + 1, row)
        if checkpoint_sink is not None and ((ep + 1) % checkpoint_every == 0 or ep + 1 == hp.episodes):
            checkpoint_sink(ep + 1, net)

    return TrainingResult(net, reference, log, rewards, len(buffer))


def write_training_log(log: list, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in log:
            writer.writerow(row)
    return path


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"BOTQNET\x00"
VERSION = 1
# gamma is left out of the header: it cannot influence the weights
_HEADER_HP_EXCLUDE = ("gamma",)


def save_checkpoint(path: str | Path, net: QNetwork, hp: Hyperparams | None = None,
                    beta: float | None = None) -> Path:
    """Write the flat little-endian checkpoint described in the README."""
    path = Path(path)
    hp_dict = {k: v for k, v in (hp or Hyperparams()).to_dict().items() if k not in _HEADER_HP_EXCLUDE}
    header = json.dumps({
        "beta": beta,
        "hyperparams": hp_dict,
        "obs_scale": [float(s) for s in net.obs_scale],
        "layers": [list(W.shape) for W in net.weights],
    }, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(net.weights)))
        for W, b in zip(net.weights, net.biases):
            fh.write(struct.pack("<II", *W.shape))
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return path


def load_checkpoint(path: str | Path) -> tuple[QNetwork, dict]:
    """Return ``(net, header)``; the header carries beta and hyperparameters."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ConfigurationError(f"{path}: not a Q-network checkpoint")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    header = json.loads(data[off:off + hlen])
    off += hlen
    (n_layers,) = struct.unpack_from("<I", data, off)
    off += 4
    weights, biases = [], []
    for _ in range(n_layers):
        n_in, n_out = struct.unpack_from("<II", data, off)
        off += 8
        W = np.frombuffer(data, dtype="<f8", count=n_in * n_out, offset=off).reshape(n_in, n_out)
        off += 8 * n_in * n_out
        b = np.frombuffer(data, dtype="<f8", count=n_out, offset=off)
        off += 8 * n_out
        weights.append(W.astype(float))
        biases.append(b.astype(float))
    net = QNetwork(weights, biases, np.array(header["obs_scale"], dtype=float))
    return net, header
