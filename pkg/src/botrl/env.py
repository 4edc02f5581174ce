"""Single-decision belief-MDP for the leg-2 heading choice.

``reset`` samples a geometry and flies leg 1 perpendicular to the first
bearing; ``step`` flies leg 2 on the chosen heading and returns the terminal
outcome. Observations stay in physical units; network scaling lives in
:mod:`botrl.dqn`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ckf
from .ckf import FilterError, FilterHealthError, GaussianBelief
from .models import (
    PlatformState,
    ScenarioConfig,
    measure_bearing,
    observer_input,
    process_noise_cov,
    propagate_relative,
    run_leg,
    sample_scenario,
    transition_matrix,
    wrap_angle,
)

N_ACTIONS = 16
ACTION_IDS = tuple(range(1, N_ACTIONS + 1))
OBS_SIZE = 12
OBS_FIELDS = (
    "x", "y", "vx", "vy",
    "P11", "P12", "P22",
    "P33", "P34", "P44",
    "cos_z", "sin_z",
)
N_STREAMS = 5


class UsageError(RuntimeError):
    """Environment method called out of protocol order."""


def action_heading(action: int) -> float:
    if action not in ACTION_IDS:
        raise ValueError(f"action id must be in 1..{N_ACTIONS}, got {action!r}")
    return (action - 1) * 2.0 * math.pi / N_ACTIONS


ACTION_HEADINGS = np.array([action_heading(a) for a in ACTION_IDS])


def nearest_action(heading: float) -> int:
    """Discrete heading closest to ``heading``; ties go to the lower id."""
    diff = np.abs(wrap_angle(ACTION_HEADINGS - heading))
    return int(np.argmin(diff)) + 1


def build_observation(belief: GaussianBelief, z: float) -> np.ndarray:
    m, P = belief.mean, belief.cov
    return np.array([
        m[0], m[1], m[2], m[3],
        P[0, 0], P[0, 1], P[1, 1],
        P[2, 2], P[2, 3], P[3, 3],
        math.cos(z), math.sin(z),
    ])


def euclidean_distance(p_hat, p) -> float:
    return float(np.linalg.norm(np.asarray(p_hat, dtype=float) - np.asarray(p, dtype=float)))


def mahalanobis_distance(p_hat, p, P_pos) -> float:
    """``sqrt(e' P^-1 e)`` via a linear solve; jitters once if P is singular."""
    e = np.asarray(p_hat, dtype=float) - np.asarray(p, dtype=float)
    P = np.asarray(P_pos, dtype=float)
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        jitter = 1e-9 * max(np.trace(P), 1e-12) / P.shape[0]
        P = P + jitter * np.eye(P.shape[0])
        try:
            np.linalg.cholesky(P)
        except np.linalg.LinAlgError as exc:
            raise FilterHealthError("position covariance is singular") from exc
    return float(math.sqrt(max(e @ np.linalg.solve(P, e), 0.0)))


@dataclass(frozen=True)
class RewardParams:
    beta: float = 0.7
    distance_floor: float = 1e-9

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.distance_floor > 0:
            raise ValueError("distance_floor must be positive")


def reward(d_E: float, d_M: float, params: RewardParams) -> float:
    """Geometric Pareto blend ``-d_E**beta * d_M**(1-beta)``; never positive."""
    b = params.beta
    return -(max(d_E, params.distance_floor) ** b) * (max(d_M, params.distance_floor) ** (1.0 - b))


@dataclass
class EpisodeStreams:
    """Independent generators so policies share all randomness they can.

    Measurement and process noise are consumed one draw-block per sub-step,
    so two episodes with the same seed see identical noise at each sub-step
    whatever heading was chosen.
    """

    scenario: np.random.Generator
    process: np.random.Generator
    measurement: np.random.Generator
    coin: np.random.Generator
    policy: np.random.Generator

    @classmethod
    def from_seed(cls, seed) -> "EpisodeStreams":
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(s) for s in seq.spawn(N_STREAMS)))

    @classmethod
    def coerce(cls, rng) -> "EpisodeStreams":
        if isinstance(rng, cls):
            return rng
        if isinstance(rng, np.random.Generator):
            return cls(*rng.spawn(N_STREAMS))
        return cls.from_seed(rng)


@dataclass
class Trace:
    """Per-sub-step record: row 0 is the initial measurement, then leg 1, then leg 2."""

    leg: np.ndarray
    observer: np.ndarray
    relative: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    bearing: np.ndarray
    leg1_heading: float = float("nan")
    action: int = 0

    @classmethod
    def empty(cls, n: int) -> "Trace":
        full = np.full
        return cls(np.zeros(n, dtype=int), full((n, 4), np.nan), full((n, 4), np.nan),
                   full((n, 4), np.nan), full((n, 4, 4), np.nan), full(n, np.nan))

    def truncated(self, n: int) -> "Trace":
        return Trace(self.leg[:n], self.observer[:n], self.relative[:n], self.mean[:n],
                     self.cov[:n], self.bearing[:n], self.leg1_heading, self.action)

    def __len__(self) -> int:
        return len(self.leg)

    @property
    def target(self) -> np.ndarray:
        return self.relative + self.observer


@dataclass
class EpisodeOutcome:
    d_E: float
    d_M: float
    reward: float
    beta: float
    action: int
    divergent: bool = False
    trace: Trace | None = None
    # rewards handed out before termination; always zero here
    intermediate_rewards: list = field(default_factory=list)


@dataclass
class DecisionPoint:
    """Everything a policy may look at when choosing the leg-2 heading."""

    belief: GaussianBelief
    observation: np.ndarray
    observer: PlatformState
    bearing: float
    cfg: ScenarioConfig
    rng: np.random.Generator | None = None


_COV_IDX = [(i, j) for i in range(4) for j in range(i, 4)]
TRACE_COLUMNS = (
    ["step", "leg", "action", "leg1_heading"]
    + ["observer_x", "observer_y", "observer_vx", "observer_vy"]
    + ["target_x", "target_y", "target_vx", "target_vy"]
    + ["rel_x", "rel_y", "rel_vx", "rel_vy", "bearing"]
    + ["est_x", "est_y", "est_vx", "est_vy"]
    + [f"P{i}{j}" for i, j in _COV_IDX]
)


def write_trace_csv(trace: Trace, path: str | Path) -> Path:
    path = Path(path)
    target = trace.target
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for k in range(len(trace)):
            row = [k, int(trace.leg[k]), trace.action, trace.leg1_heading]
            row += list(trace.observer[k]) + list(target[k]) + list(trace.relative[k])
            row += [trace.bearing[k]] + list(trace.mean[k])
            row += [trace.cov[k][i, j] for i, j in _COV_IDX]
            writer.writerow([float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_trace_csv(path: str | Path) -> Trace:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = len(rows)
    trace = Trace.empty(n)
    for k, r in enumerate(rows):
        trace.leg[k] = int(r["leg"])
        trace.observer[k] = [float(r[c]) for c in ("observer_x", "observer_y", "observer_vx", "observer_vy")]
        trace.relative[k] = [float(r[c]) for c in ("rel_x", "rel_y", "rel_vx", "rel_vy")]
        trace.mean[k] = [float(r[c]) for c in ("est_x", "est_y", "est_vx", "est_vy")]
        trace.bearing[k] = float(r["bearing"])
        for i, j in _COV_IDX:
            trace.cov[k][i, j] = trace.cov[k][j, i] = float(r[f"P{i}{j}"])
    if rows:
        trace.action = int(rows[0]["action"])
        trace.leg1_heading = float(rows[0]["leg1_heading"])
    return trace


class BearingsOnlyEnv:
    """Two-leg bearings-only episode with a single terminal reward."""

    def __init__(self, cfg: ScenarioConfig | None = None, reward_params: RewardParams | None = None,
                 record_trace: bool = True):
        self.cfg = cfg or ScenarioConfig()
        self.reward_params = reward_params or RewardParams()
        self.record_trace = record_trace
        T = self.cfg.sample_interval
        self._F = transition_matrix(T)
        self._Q = process_noise_cov(T, self.cfg.process_noise_q)
        self._L = np.linalg.cholesky(self._Q)
        self._ready = False

    # -- internals -------------------------------------------------------
    def _record(self, k: int, leg: int) -> None:
        if self._trace is None:
            return
        t = self._trace
        t.leg[k] = leg
        t.observer[k] = self._observer.as_vector()
        t.relative[k] = self._x
        t.mean[k] = self.belief.mean
        t.cov[k] = self.belief.cov
        t.bearing[k] = self._z

    def _sub_step(self, obs_prev: PlatformState, obs_next: PlatformState) -> None:
        cfg = self.cfg
        T = cfg.sample_interval
        self._x = propagate_relative(self._x, obs_prev, obs_next, T, cfg.process_noise_q,
                                     self._streams.process, noise_factor=self._L)
        self._observer = obs_next
        self._k += 1
        # the measurement is drawn before the filter can fail so noise stays aligned
        self._z = measure_bearing(self._x, cfg.bearing_noise_sigma, self._streams.measurement)
        U = observer_input(obs_prev, obs_next, T)
        pred = ckf.predict(self.belief, U, self._F, self._Q)
        self.belief = ckf.update(pred, self._z, cfg.bearing_noise_sigma)

    def _fly_leg(self, heading: float, leg: int) -> None:
        cfg = self.cfg
        path = run_leg(self._observer, heading, cfg.steps_per_leg, cfg.platform_speed,
                       cfg.sample_interval)
        prev = self._observer
        for nxt in path[1:]:
            self._sub_step(prev, nxt)
            self._record(self._k, leg)
            prev = nxt

    # -- protocol --------------------------------------------------------
    def reset(self, rng) -> tuple[np.ndarray, np.ndarray]:
        """Start an episode and fly leg 1.

        ``rng`` may be an int seed, a SeedSequence, a Generator or an
        :class:`EpisodeStreams`. Returns the decision-time observation and
        the hidden true relative state.
        """
        cfg = self.cfg
        self._streams = EpisodeStreams.coerce(rng)
        target, observer = sample_scenario(cfg, self._streams.scenario)
        self._k = 0
        self._trace = Trace.empty(2 * cfg.steps_per_leg + 1) if self.record_trace else None

        self._x = target - observer.as_vector()
        self._observer = observer
        self._z = measure_bearing(self._x, cfg.bearing_noise_sigma, self._streams.measurement)
        self.belief = ckf.initialize(self._z, cfg)
        self.initial_belief = self.belief.copy()

        sign = 1.0 if self._streams.coin.integers(2) == 1 else -1.0
        self.leg1_heading = wrap_angle(self._z + sign * math.pi / 2.0)
        # no pre-episode manoeuvre: the observer already moves on the leg-1 heading
        v1 = run_leg(observer, self.leg1_heading, 1, cfg.platform_speed)[0].velocity
        self._observer = PlatformState(observer.position.copy(), v1)
        self._x = target - self._observer.as_vector()
        if self._trace is not None:
            self._trace.leg1_heading = self.leg1_heading
        self._record(0, 0)

        self._fly_leg(self.leg1_heading, 1)
        self.observation = build_observation(self.belief, self._z)
        self._ready = True
        return self.observation.copy(), self._x.copy()

    def decision_point(self) -> DecisionPoint:
        if not self._ready:
            raise UsageError("decision_point() requires a fresh reset()")
        return DecisionPoint(self.belief.copy(), self.observation.copy(),
                             PlatformState(self._observer.position.copy(), self._observer.velocity.copy()),
                             self._z, self.cfg, self._streams.policy)

    def step(self, action: int) -> EpisodeOutcome:
        if not self._ready:
            raise UsageError("step() must follow reset() and may be called once per episode")
        self._ready = False
        heading = action_heading(action)
        if self._trace is not None:
            self._trace.action = action

        divergent = False
        last_belief, last_x = self.belief, self._x
        try:
            cfg = self.cfg
            path = run_leg(self._observer, heading, cfg.steps_per_leg, cfg.platform_speed,
                           cfg.sample_interval)
            prev = self._observer
            for nxt in path[1:]:
                last_belief, last_x = self.belief, self._x
                self._sub_step(prev, nxt)
                self._record(self._k, 2)
                prev = nxt
            last_belief, last_x = self.belief, self._x
        except FilterError:
            divergent = True

        d_E = euclidean_distance(last_belief.position, last_x[:2])
        try:
            d_M = mahalanobis_distance(last_belief.position, last_x[:2], last_belief.position_cov)
        except FilterHealthError:
            divergent, d_M = True, float("inf")
        r = reward(d_E, d_M, self.reward_params)
        trace = None
        if self._trace is not None:
            n = self._k + 1 if not divergent else self._k
            trace = self._trace.truncated(n)
        return EpisodeOutcome(d_E, d_M, r, self.reward_params.beta, action, divergent, trace)

    @property
    def true_state(self) -> np.ndarray:
        return self._x.copy()

    @property
    def observer(self) -> PlatformState:
        return self._observer
