"""Closed-loop trajectory tracking for a unicycle robot."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Action, ActionSpace, Pose, wrap_angle


@dataclass(frozen=True)
class FollowerParams:
    xi: float = 0.9
    g: float = 10.0
    lookahead_steps: int = 5
    trace_spacing: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 < self.xi <= 1.0:
            raise ValueError("xi must lie in (0, 1]")
        if self.g <= 0:
            raise ValueError("g must be positive")
        if self.lookahead_steps < 1:
            raise ValueError("lookahead_steps must be >= 1")


@dataclass(frozen=True)
class TrackingError:
    e1: float
    e2: float
    e3: float

    def norm_xy(self) -> float:
        return math.hypot(self.e1, self.e2)


def tracking_error(real: Pose, ref: Pose) -> TrackingError:
    """Pose error expressed in the real robot frame.

    e = [[-cos t, -sin t, 0], [sin t, -cos t, 0], [0, 0, -1]] @ (real - ref),
    i.e. (e1, e2) is the reference position seen from the robot (forward,
    left) and e3 = theta_ref - theta.
    """
    dx = real.x - ref.x
    dy = real.y - ref.y
    c, s = math.cos(real.theta), math.sin(real.theta)
    return TrackingError(
        -c * dx - s * dy,
        s * dx - c * dy,
        wrap_angle(ref.theta - real.theta),
    )


def gains(u_r: Action, params: FollowerParams) -> tuple[float, float, float]:
    k1 = 2.0 * params.xi * math.sqrt(u_r.omega**2 + params.g * u_r.v**2)
    k2 = params.g * abs(u_r.v)
    return k1, k2, k1


def _sign(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def control(real: Pose, ref: Pose, u_r: Action, params: FollowerParams,
            space: Optional[ActionSpace] = None) -> Action:
    """Tracking command; clamped to ``space`` when one is given.

    Feedback u_e1 = -k1 e1 and u_e2 = -sign(v_r) k2 e2 - k3 e3 is subtracted
    from the feed-forward term: v = v_r cos(e3) - u_e1, w = w_r - u_e2. With
    e defined as the reference seen from the robot, a reference ahead speeds
    the robot up and a reference to the left turns it left.
    """
    e = tracking_error(real, ref)
    k1, k2, k3 = gains(u_r, params)
    u_e1 = -k1 * e.e1
    u_e2 = -_sign(u_r.v) * k2 * e.e2 - k3 * e.e3
    out = Action(u_r.v * math.cos(e.e3) - u_e1, u_r.omega - u_e2)
    return space.clamp(out) if space is not None else out


def nearest_index(trace_xy: np.ndarray, point) -> int:
    """Index of the trace sample nearest ``point``; ties go to the lower index."""
    d = np.hypot(trace_xy[:, 0] - point[0], trace_xy[:, 1] - point[1])
    return int(np.argmin(d))


def reference_lookup(path, real: Pose, params: FollowerParams) -> tuple[Pose, Action]:
    """Reference pose at the nearest trace sample, action a few samples ahead.

    Once the nearest sample is the final one and the robot has moved past it
    along the final heading, the reference action is zero.
    """
    xy = path.trace_xy
    if len(xy) == 0:
        raise ValueError("path has an empty trace")
    i = nearest_index(xy, (real.x, real.y))
    last = len(xy) - 1
    ref = Pose(float(xy[i, 0]), float(xy[i, 1]), float(path.trace_theta[i]))
    if i == last:
        th = path.trace_theta[last]
        along = (real.x - xy[last, 0]) * math.cos(th) + (real.y - xy[last, 1]) * math.sin(th)
        if along >= 0.0:
            return ref, Action(0.0, 0.0)
    j = min(i + params.lookahead_steps, last)
    return ref, Action(float(path.trace_v[j]), float(path.trace_omega[j]))


def follow(path, real: Pose, params: FollowerParams,
           space: Optional[ActionSpace] = None) -> Action:
    ref, u_r = reference_lookup(path, real, params)
    return control(real, ref, u_r, params, space)
