"""Leg-2 heading policies: PTB, ITO (D-optimal Fisher information), DQN, random.

Each policy object is called with an :class:`~botrl.env.DecisionPoint` and
returns an action id in 1..16. Ties always resolve to the lowest id.
"""

from __future__ import annotations

import math

import numpy as np

from .ckf import GaussianBelief
from .dqn import ModelCorruptionError, QNetwork, q_values
from .env import ACTION_HEADINGS, N_ACTIONS, DecisionPoint, nearest_action
from .models import ScenarioConfig

POLICY_NAMES = ("ptb", "ito", "dqn", "random")
RANGE_SQ_FLOOR = 1e-6


def ptb_action(belief: GaussianBelief, cfg: ScenarioConfig) -> int:
    """Perpendicular-to-bearing heading.

    Of the two headings perpendicular to the line of sight to the estimate,
    keep the one pointing toward the estimate advanced by one leg of the
    estimated relative velocity, then snap to the 16-heading grid.
    """
    p, v = belief.position, belief.velocity
    los = math.atan2(p[1], p[0])
    ahead = p + cfg.steps_per_leg * cfg.sample_interval * v
    candidates = (los + math.pi / 2.0, los - math.pi / 2.0)
    scores = [math.cos(c) * ahead[0] + math.sin(c) * ahead[1] for c in candidates]
    actions = [nearest_action(c) for c in candidates]
    if scores[0] > scores[1]:
        return actions[0]
    if scores[1] > scores[0]:
        return actions[1]
    return min(actions)


def predicted_positions(belief: GaussianBelief, observer_velocity, headings, M: int,
                        speed: float, T: float = 1.0) -> np.ndarray:
    """Noise-free relative positions over the next leg for each heading.

    Returns an array of shape (len(headings), M, 2) for sub-steps 1..M.
    """
    headings = np.asarray(headings, dtype=float)
    v_obs_new = speed * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    v_rel = belief.velocity + np.asarray(observer_velocity, dtype=float) - v_obs_new
    steps = T * np.arange(1, M + 1)
    return belief.position + steps[None, :, None] * v_rel[:, None, :]


def accumulated_information(positions: np.ndarray, sigma: float) -> np.ndarray:
    """Sum over sub-steps of ``H'H / sigma^2`` for bearing gradients ``H``.

    ``positions`` has shape (..., M, 2); the result has shape (..., 2, 2).
    """
    dx, dy = positions[..., 0], positions[..., 1]
    r2 = np.maximum(dx * dx + dy * dy, RANGE_SQ_FLOOR)
    hx, hy = -dy / r2, dx / r2
    info = np.empty(positions.shape[:-2] + (2, 2))
    info[..., 0, 0] = (hx * hx).sum(axis=-1)
    info[..., 0, 1] = info[..., 1, 0] = (hx * hy).sum(axis=-1)
    info[..., 1, 1] = (hy * hy).sum(axis=-1)
    return info / sigma ** 2


def ito_scores(belief: GaussianBelief, sigma: float, M: int, cfg: ScenarioConfig,
               observer_velocity, prior_information: np.ndarray | None = None) -> np.ndarray:
    """``det(J + sum H'H / sigma^2)`` for each of the 16 candidate headings."""
    J = np.linalg.inv(belief.position_cov) if prior_information is None else prior_information
    pos = predicted_positions(belief, observer_velocity, ACTION_HEADINGS, M,
                              cfg.platform_speed, cfg.sample_interval)
    total = J + accumulated_information(pos, sigma)
    return total[:, 0, 0] * total[:, 1, 1] - total[:, 0, 1] * total[:, 1, 0]


def ito_action(belief: GaussianBelief, sigma: float, M: int, cfg: ScenarioConfig,
               observer_velocity, prior_information: np.ndarray | None = None) -> int:
    """Greedy D-optimal heading over the next leg.

    ``observer_velocity`` is the leg-1 velocity, needed to predict how the
    relative velocity changes when the observer turns.
    """
    scores = ito_scores(belief, sigma, M, cfg, observer_velocity, prior_information)
    return int(np.argmax(scores)) + 1


def random_action(rng: np.random.Generator) -> int:
    return int(rng.integers(1, N_ACTIONS + 1))


def dqn_action(obs, net: QNetwork) -> int:
    q = q_values(net, obs)
    if not np.all(np.isfinite(q)):
        raise ModelCorruptionError("non-finite Q-values")
    return int(np.argmax(q)) + 1


class PTBPolicy:
    name = "ptb"

    def __call__(self, dp: DecisionPoint) -> int:
        return ptb_action(dp.belief, dp.cfg)


class ITOPolicy:
    name = "ito"

    def __call__(self, dp: DecisionPoint) -> int:
        cfg = dp.cfg
        return ito_action(dp.belief, cfg.bearing_noise_sigma, cfg.steps_per_leg, cfg,
                          dp.observer.velocity)


class RandomPolicy:
    name = "random"

    def __call__(self, dp: DecisionPoint) -> int:
        return random_action(dp.rng)


class DQNPolicy:
    name = "dqn"

    def __init__(self, net: QNetwork, beta: float | None = None):
        self.net = net
        self.beta = beta

    def __call__(self, dp: DecisionPoint) -> int:
        return dqn_action(dp.observation, self.net)


def make_policy(name: str, net: QNetwork | None = None, beta: float | None = None):
    name = name.strip().lower()
    if name == "ptb":
        return PTBPolicy()
    if name == "ito":
        return ITOPolicy()
    if name == "random":
        return RandomPolicy()
    if name == "dqn":
        if net is None:
            raise ValueError("the dqn policy needs a trained network (--model)")
        return DQNPolicy(net, beta)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
