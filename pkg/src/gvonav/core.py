"""Shared geometric types and the constant-(v, omega) arc motion model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this |omega| the arc formulas switch to their Taylor expansion.
OMEGA_EPS = 1e-6


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    return np.pi - np.mod(np.pi - theta, 2.0 * np.pi)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance_to(self, point) -> float:
        return math.hypot(point[0] - self.x, point[1] - self.y)


@dataclass(frozen=True)
class Action:
    v: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega])


STOP = Action(0.0, 0.0)


@dataclass(frozen=True)
class ActionSpace:
    """Box of admissible (v, omega) commands.

    ``v_min`` is the lowest forward velocity allowed when sampling or
    clamping; keep it at zero for a forward-only robot.
    """

    v_max: float = 1.6
    omega_max: float = math.pi
    v_min: float = 0.0
    sample_count: int = 200

    def __post_init__(self) -> None:
        if self.v_max <= 0 or self.omega_max <= 0:
            raise ValueError("v_max and omega_max must be positive")
        if self.v_min > self.v_max:
            raise ValueError("v_min must not exceed v_max")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    def clamp(self, action: Action) -> Action:
        v = min(max(action.v, self.v_min), self.v_max)
        omega = min(max(action.omega, -self.omega_max), self.omega_max)
        return Action(v, omega)

    def contains(self, action: Action, tol: float = 1e-12) -> bool:
        return (
            self.v_min - tol <= action.v <= self.v_max + tol
            and abs(action.omega) <= self.omega_max + tol
        )

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Uniform samples over the box, shape (n, 2) as (v, omega) rows."""
        n = self.sample_count if n is None else n
        v = rng.uniform(self.v_min, self.v_max, n)
        omega = rng.uniform(-self.omega_max, self.omega_max, n)
        return np.column_stack([v, omega])


def arc_displacement(theta, v, omega, t):
    """World-frame displacement after driving a constant (v, omega) arc for t.

    All arguments broadcast against each other. For |omega| >= OMEGA_EPS this
    is exactly

        dx = v/omega * (sin(theta + omega t) - sin(theta))
        dy = -v/omega * (cos(theta + omega t) - cos(theta))

    and below OMEGA_EPS the second-order expansion in omega*t is used.
    """
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    t = np.asarray(t, dtype=float)

    straight = np.abs(omega) < OMEGA_EPS
    w = np.where(straight, 1.0, omega)
    with np.errstate(invalid="ignore", divide="ignore"):
        dx_arc = v / w * (np.sin(theta + w * t) - np.sin(theta))
        dy_arc = -v / w * (np.cos(theta + w * t) - np.cos(theta))

    phi = omega * t
    s = 1.0 - phi**2 / 6.0
    c = phi / 2.0
    dx_lin = v * t * (np.cos(theta) * s - np.sin(theta) * c)
    dy_lin = v * t * (np.sin(theta) * s + np.cos(theta) * c)

    dx = np.where(straight, dx_lin, dx_arc)
    dy = np.where(straight, dy_lin, dy_arc)
    return dx, dy


def propagate_arc(pose: Pose, action: Action, t: float) -> Pose:
    """Pose reached after holding ``action`` for ``t`` seconds from ``pose``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    dx, dy = arc_displacement(pose.theta, action.v, action.omega, t)
    return Pose(pose.x + float(dx), pose.y + float(dy), pose.theta + action.omega * t)


def arc_positions(pose: Pose, v: np.ndarray, omega: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Robot centres for many actions at many times.

    ``v`` and ``omega`` have shape (n,), ``times`` shape (m,); the result has
    shape (n, m, 2).
    """
    v = np.asarray(v, dtype=float)[:, None]
    omega = np.asarray(omega, dtype=float)[:, None]
    times = np.asarray(times, dtype=float)[None, :]
    dx, dy = arc_displacement(pose.theta, v, omega, times)
    return np.stack([pose.x + dx, pose.y + dy], axis=-1)


def unicycle_derivative(pose: Pose, action: Action) -> tuple[float, float, float]:
    return (
        action.v * math.cos(pose.theta),
        action.v * math.sin(pose.theta),
        action.omega,
    )
