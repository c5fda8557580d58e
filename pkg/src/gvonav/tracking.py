"""Constant-velocity Kalman tracking of pedestrians and their Gaussian forecast."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_R = 0.05      # measurement noise std, m
DEFAULT_Q = 0.5       # white-acceleration intensity, m^2/s^3
DEFAULT_INIT_VEL_VAR = 1.0
STALE_AFTER = 1.0     # seconds without an observation

_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class Track:
    mean: np.ndarray
    covariance: np.ndarray
    last_update: float = 0.0
    id: int = 0
    # time the state refers to; advanced by kf_predict
    stamp: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[2:]

    @property
    def speed(self) -> float:
        return float(math.hypot(self.mean[2], self.mean[3]))


@dataclass(frozen=True)
class GaussianPrediction:
    mean: np.ndarray
    covariance: np.ndarray
    horizon: float


def new_track(observation, time: float, track_id: int = 0, r: float = DEFAULT_R,
              init_vel_var: float = DEFAULT_INIT_VEL_VAR) -> Track:
    """Track seeded at an observed position with zero, uncertain velocity."""
    mean = np.array([observation[0], observation[1], 0.0, 0.0], dtype=float)
    cov = np.diag([r**2, r**2, init_vel_var, init_vel_var])
    return Track(mean, cov, last_update=time, id=track_id, stamp=time)


def process_noise(dt: float, q: float) -> np.ndarray:
    """Discretised white-noise-acceleration covariance for one step of dt."""
    q11 = q * dt**3 / 3.0
    q12 = q * dt**2 / 2.0
    q22 = q * dt
    return np.array([
        [q11, 0.0, q12, 0.0],
        [0.0, q11, 0.0, q12],
        [q12, 0.0, q22, 0.0],
        [0.0, q12, 0.0, q22],
    ])


def transition(dt: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    return F


def kf_predict(track: Track, dt: float, q: float = DEFAULT_Q) -> Track:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    F = transition(dt)
    P = F @ track.covariance @ F.T + process_noise(dt, q)
    return replace(track, mean=F @ track.mean, covariance=0.5 * (P + P.T),
                   stamp=track.stamp + dt)


def kf_update(track: Track, observation, r: float = DEFAULT_R,
              time: Optional[float] = None) -> Track:
    """Position-measurement update in Joseph form."""
    if r <= 0:
        raise ValueError("measurement noise r must be positive")
    z = np.asarray(observation, dtype=float)
    if z.shape != (2,) or not np.all(np.isfinite(z)):
        raise ValueError(f"observation must be a finite 2-vector, got {observation!r}")
    P = track.covariance
    R = np.eye(2) * r**2
    S = _H @ P @ _H.T + R
    K = np.linalg.solve(S, _H @ P).T
    mean = track.mean + K @ (z - _H @ track.mean)
    A = np.eye(4) - K @ _H
    P = A @ P @ A.T + K @ R @ K.T
    return replace(track, mean=mean, covariance=0.5 * (P + P.T),
                   last_update=track.stamp if time is None else time)


def predict_distribution(track: Track, t: float,
                         velocity_cov: Optional[np.ndarray] = None) -> GaussianPrediction:
    """Position forecast N(mu_p + mu_v t, Sigma_p + t^2 Sigma_v).

    Position/velocity cross-covariance is ignored on purpose. Pass
    ``velocity_cov`` to replace the filter's velocity block with a fixed prior.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    sig_p = track.covariance[:2, :2]
    sig_v = track.covariance[2:, 2:] if velocity_cov is None else np.asarray(velocity_cov)
    return GaussianPrediction(track.mean[:2] + track.mean[2:] * t, sig_p + t**2 * sig_v, t)


def forecast_many(track: Track, times: np.ndarray,
                  velocity_cov: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised predict_distribution: means (m, 2) and covariances (m, 2, 2)."""
    times = np.asarray(times, dtype=float)
    sig_p = track.covariance[:2, :2]
    sig_v = track.covariance[2:, 2:] if velocity_cov is None else np.asarray(velocity_cov)
    means = track.mean[:2] + times[:, None] * track.mean[2:]
    covs = sig_p[None] + (times**2)[:, None, None] * sig_v[None]
    return means, covs


def normalized_pdf_at(pred: GaussianPrediction, point) -> float:
    """Density at ``point`` divided by the density at the mean: exp(-d^2 / 2)."""
    try:
        L = np.linalg.cholesky(pred.covariance)
    except np.linalg.LinAlgError as exc:
        raise ValueError("prediction covariance is not positive definite") from exc
    diff = np.asarray(point, dtype=float) - pred.mean
    y = np.linalg.solve(L, diff)
    return float(np.exp(-0.5 * y @ y))


def mahalanobis_sq_many(means: np.ndarray, covs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distance of ``points`` (..., m, 2) to m 2D Gaussians."""
    a = covs[:, 0, 0]
    b = covs[:, 0, 1]
    d = covs[:, 1, 1]
    det = a * d - b * b
    if np.any(det <= 0) or np.any(a <= 0):
        raise ValueError("prediction covariance is not positive definite")
    dx = points[..., 0] - means[:, 0]
    dy = points[..., 1] - means[:, 1]
    return (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det


class Tracker:
    """Mutable store of live tracks, advanced once per perception cycle."""

    def __init__(self, q: float = DEFAULT_Q, r: float = DEFAULT_R, gate: float = 0.8,
                 stale_after: float = STALE_AFTER,
                 init_vel_var: float = DEFAULT_INIT_VEL_VAR) -> None:
        self.q = q
        self.r = r
        self.gate = gate
        self.stale_after = stale_after
        self.init_vel_var = init_vel_var
        self.tracks: list[Track] = []
        self.time: Optional[float] = None
        self._ids = itertools.count()

    def step(self, time: float, clusters: Sequence,
             may_spawn: Callable[[object], bool] = lambda c: False) -> dict:
        """Predict all tracks to ``time`` and fold in cluster centroids.

        Association is greedy nearest-centroid within the gate, one cluster
        per track. Unmatched clusters accepted by ``may_spawn`` start new
        tracks. Returns {cluster index: track id}.
        """
        if self.time is not None and time > self.time:
            dt = time - self.time
            self.tracks = [kf_predict(t, dt, self.q) for t in self.tracks]
        self.time = time

        pairs = []
        for ti, track in enumerate(self.tracks):
            for ci, cluster in enumerate(clusters):
                d = math.hypot(cluster.centroid[0] - track.mean[0],
                               cluster.centroid[1] - track.mean[1])
                if d <= self.gate:
                    pairs.append((d, ti, ci))
        pairs.sort()
        used_t, used_c, assoc = set(), set(), {}
        for _, ti, ci in pairs:
            if ti in used_t or ci in used_c:
                continue
            used_t.add(ti)
            used_c.add(ci)
            self.tracks[ti] = kf_update(self.tracks[ti], clusters[ci].centroid, self.r, time)
            assoc[ci] = self.tracks[ti].id

        for ci, cluster in enumerate(clusters):
            if ci not in used_c and may_spawn(cluster):
                track = new_track(cluster.centroid, time, next(self._ids), self.r,
                                  self.init_vel_var)
                self.tracks.append(track)
                assoc[ci] = track.id

        self.tracks = [t for t in self.tracks if time - t.last_update <= self.stale_after]
        return assoc

    def snapshot(self) -> list[Track]:
        return list(self.tracks)
