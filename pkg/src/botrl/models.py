"""Ground-truth kinematics for the two-leg bearings-only scenario.

All states use the position-first ordering ``[x, y, vx, vy]``. The target is
placed at the origin; only target-minus-observer geometry is filtered.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

TWO_PI = 2.0 * math.pi


class InvalidGeometryError(ValueError):
    """Raised when a bearing is requested at zero range."""


@dataclass(frozen=True)
class ScenarioConfig:
    steps_per_leg: int = 12
    platform_speed: float = 1.0
    d_min: float = 18.0
    d_max: float = 26.0
    bearing_noise_sigma: float = 0.0175
    process_noise_q: float = 1e-6
    nominal_range: float = 23.0
    range_sigma: float = 5.0
    v_max: float = 3.0
    sample_interval: float = 1.0

    def __post_init__(self):
        if self.steps_per_leg < 1:
            raise ValueError("steps_per_leg must be >= 1")
        if not 0 < self.d_min <= self.d_max:
            raise ValueError("need 0 < d_min <= d_max")
        for name in ("bearing_noise_sigma", "process_noise_q", "range_sigma", "v_max",
                     "sample_interval", "platform_speed", "nominal_range"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def velocity_sigma(self) -> float:
        # prior velocity spread covers v_max at three sigma
        return self.v_max / 3.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown ScenarioConfig keys: {sorted(unknown)}")
        return cls(**data)


def load_config_file(path: str | Path) -> dict:
    """Read a YAML or JSON mapping (JSON is valid YAML)."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return data


def load_scenario_config(path: str | Path) -> ScenarioConfig:
    """Build a ScenarioConfig from a file; keys outside the dataclass are ignored.

    Hyperparameter keys may share the same file, so only ScenarioConfig
    field names are picked up here.
    """
    data = load_config_file(path)
    known = {f.name for f in fields(ScenarioConfig)}
    return ScenarioConfig(**{k: v for k, v in data.items() if k in known})


@dataclass
class PlatformState:
    position: np.ndarray
    velocity: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, vec) -> "PlatformState":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:2].copy(), vec[2:].copy())


def wrap_angle(angle):
    """Wrap angle(s) to the half-open interval (-pi, pi]."""
    if isinstance(angle, float):
        w = math.fmod(angle + math.pi, TWO_PI)
        w = w + TWO_PI if w < 0 else w
        w -= math.pi
        return w + TWO_PI if w <= -math.pi else w
    wrapped = np.mod(np.asarray(angle, dtype=float) + math.pi, TWO_PI) - math.pi
    # mod puts +pi at -pi; move it back to the closed end
    wrapped = np.where(wrapped <= -math.pi, wrapped + TWO_PI, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def transition_matrix(T: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = T
    F[1, 3] = T
    return F


def process_noise_cov(T: float, q: float) -> np.ndarray:
    I2 = np.eye(2)
    return q * np.block([
        [T ** 3 / 3.0 * I2, T ** 2 / 2.0 * I2],
        [T ** 2 / 2.0 * I2, T * I2],
    ])


def observer_input(obs_prev: PlatformState, obs_next: PlatformState, T: float) -> np.ndarray:
    """Known observer-motion term ``U = x_o(k+1) - F x_o(k)``."""
    return obs_next.as_vector() - transition_matrix(T) @ obs_prev.as_vector()


def _noise_factor(T: float, q: float) -> np.ndarray:
    if q <= 0:
        return np.zeros((4, 4))
    return np.linalg.cholesky(process_noise_cov(T, q))


def propagate_relative(x, obs_prev: PlatformState, obs_next: PlatformState, T: float,
                       q: float, rng: np.random.Generator | None = None,
                       noise_factor: np.ndarray | None = None) -> np.ndarray:
    """Advance the relative state one step: ``F x - U + w``.

    Four standard normals are always drawn when ``rng`` is given, even for
    ``q == 0``, so noise streams stay aligned step-by-step. ``noise_factor``
    is an optional precomputed Cholesky factor of Q.
    """
    x = np.asarray(x, dtype=float)
    out = transition_matrix(T) @ x - observer_input(obs_prev, obs_next, T)
    if rng is not None:
        L = _noise_factor(T, q) if noise_factor is None else noise_factor
        out = out + L @ rng.standard_normal(4)
    return out


def true_bearing(x) -> float:
    if x[0] == 0.0 and x[1] == 0.0:
        raise InvalidGeometryError("bearing undefined at zero range")
    return math.atan2(x[1], x[0])


def measure_bearing(x, sigma: float, rng: np.random.Generator | None = None) -> float:
    """Noisy four-quadrant bearing to the relative position, wrapped to (-pi, pi]."""
    z = true_bearing(x)
    if rng is not None:
        z += sigma * rng.standard_normal()
    return wrap_angle(z)


def heading_velocity(heading: float, speed: float) -> np.ndarray:
    return speed * np.array([math.cos(heading), math.sin(heading)])


def run_leg(observer: PlatformState, heading: float, M: int, speed: float,
            T: float = 1.0) -> list[PlatformState]:
    """Constant-velocity leg of ``M`` steps; the start state (with the new
    velocity) is element 0 of the returned list."""
    if M < 1:
        raise ValueError("a leg needs at least one step")
    v = heading_velocity(heading, speed)
    p0 = np.asarray(observer.position, dtype=float)
    return [PlatformState(p0 + k * T * v, v.copy()) for k in range(M + 1)]


def sample_scenario(cfg: ScenarioConfig, rng: np.random.Generator
                    ) -> tuple[np.ndarray, PlatformState]:
    """Random target (at the origin) and observer placed in the range annulus.

    The observer velocity is left at zero; the caller sets it to the leg-1
    velocity once the first heading is chosen.
    """
    heading = rng.uniform(0.0, TWO_PI)
    target = np.concatenate([np.zeros(2), heading_velocity(heading, cfg.platform_speed)])
    rng_range = rng.uniform(cfg.d_min, cfg.d_max)
    angle = rng.uniform(0.0, TWO_PI)
    observer = PlatformState(rng_range * np.array([math.cos(angle), math.sin(angle)]),
                             np.zeros(2))
    return target, observer
