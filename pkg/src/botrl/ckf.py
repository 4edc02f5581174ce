"""Cubature Kalman filter for bearing-only measurements of a relative CV state."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import ScenarioConfig, wrap_angle

N_STATE = 4
N_POINTS = 2 * N_STATE
# columns of 2 [I, -I]
UNIT_POINTS = 2.0 * np.hstack([np.eye(N_STATE), -np.eye(N_STATE)])


class FilterError(RuntimeError):
    """Base class for numerical failures inside the filter."""


class FilterHealthError(FilterError):
    """Covariance could not be factorised even after jitter."""


class FilterDivergenceError(FilterError):
    """Non-positive innovation variance or a non-finite update."""


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def copy(self) -> "GaussianBelief":
        return GaussianBelief(self.mean.copy(), self.cov.copy())

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[2:]

    @property
    def position_cov(self) -> np.ndarray:
        return self.cov[:2, :2]

    def is_valid(self) -> bool:
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov))):
            return False
        try:
            np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            return False
        return True


def symmetrise(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def sqrt_cov(P: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying once with jitter ``1e-9 * trace(P)/4``."""
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-9 * np.trace(P) / N_STATE
    if not (np.isfinite(jitter) and jitter > 0):
        raise FilterHealthError("covariance is not positive definite")
    try:
        return np.linalg.cholesky(P + jitter * np.eye(P.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise FilterHealthError("covariance is not positive definite after jitter") from exc


def regularise(P: np.ndarray) -> np.ndarray:
    """Return P, or P plus the one-shot jitter if P alone is not positive definite."""
    try:
        np.linalg.cholesky(P)
        return P
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-9 * np.trace(P) / N_STATE
    P = P + jitter * np.eye(P.shape[0])
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise FilterHealthError("posterior covariance is not positive definite") from exc
    return P


def predict(belief: GaussianBelief, U, F: np.ndarray, Q: np.ndarray) -> GaussianBelief:
    mean = F @ belief.mean - np.asarray(U, dtype=float)
    cov = symmetrise(F @ belief.cov @ F.T + Q)
    return GaussianBelief(mean, cov)


def cubature_points(belief: GaussianBelief) -> np.ndarray:
    """The eight equally weighted points, one per column (shape 4x8)."""
    S = sqrt_cov(belief.cov)
    return belief.mean[:, None] + S @ UNIT_POINTS


def _check_finite(mean: np.ndarray, cov: np.ndarray) -> None:
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise FilterDivergenceError("non-finite filter update")


def update(belief_pred: GaussianBelief, z: float, sigma: float) -> GaussianBelief:
    """Bearing update.

    The predicted bearing is the circular mean of the transformed points and
    every bearing residual is wrapped, so beliefs straddling the +-pi cut are
    handled like any other.
    """
    X = cubature_points(belief_pred)
    Z = np.arctan2(X[1], X[0])
    z_hat = math.atan2(np.sin(Z).sum(), np.cos(Z).sum())
    dZ = wrap_angle(Z - z_hat)
    dX = X - belief_pred.mean[:, None]

    Pzz = float(dZ @ dZ) / N_POINTS + sigma ** 2
    if not Pzz > 0:
        raise FilterDivergenceError(f"innovation variance {Pzz!r} is not positive")
    Pxz = dX @ dZ / N_POINTS
    gain = Pxz / Pzz

    mean = belief_pred.mean + gain * wrap_angle(z - z_hat)
    cov = symmetrise(belief_pred.cov - Pzz * np.outer(gain, gain))
    _check_finite(mean, cov)
    return GaussianBelief(mean, regularise(cov))


def update_vector(belief_pred: GaussianBelief, z, h: Callable[[np.ndarray], np.ndarray],
                  R: np.ndarray) -> GaussianBelief:
    """Cubature update for a general vector measurement with additive noise R.

    ``h`` maps a 4x8 block of points to an m x 8 block of measurements. Used
    for linear cross-checks against the exact Kalman filter.
    """
    X = cubature_points(belief_pred)
    Z = np.atleast_2d(h(X))
    z_hat = Z.mean(axis=1)
    dZ = Z - z_hat[:, None]
    dX = X - belief_pred.mean[:, None]
    Pzz = dZ @ dZ.T / N_POINTS + R
    Pxz = dX @ dZ.T / N_POINTS
    gain = np.linalg.solve(Pzz.T, Pxz.T).T
    mean = belief_pred.mean + gain @ (np.asarray(z, dtype=float) - z_hat)
    cov = symmetrise(belief_pred.cov - gain @ Pzz @ gain.T)
    _check_finite(mean, cov)
    return GaussianBelief(mean, cov)


def initial_position_cov(z0: float, R0: float, sigma_R: float, sigma_bearing: float) -> np.ndarray:
    """First-order polar-to-Cartesian covariance of a range/bearing pair."""
    c, s = math.cos(z0), math.sin(z0)
    var_r = sigma_R ** 2
    var_t = R0 ** 2 * sigma_bearing ** 2
    off = (var_r - var_t) * s * c
    return np.array([
        [var_r * c * c + var_t * s * s, off],
        [off, var_r * s * s + var_t * c * c],
    ])


def initialize(z0: float, cfg: ScenarioConfig) -> GaussianBelief:
    R0 = cfg.nominal_range
    mean = np.array([R0 * math.cos(z0), R0 * math.sin(z0), 0.0, 0.0])
    cov = np.zeros((4, 4))
    cov[:2, :2] = initial_position_cov(z0, R0, cfg.range_sigma, cfg.bearing_noise_sigma)
    cov[2:, 2:] = cfg.velocity_sigma ** 2 * np.eye(2)
    return GaussianBelief(mean, cov)
