"""Generalized-velocity-obstacle action filter for a unicycle robot.

Each candidate (v, omega) is forward-simulated along its exact arc for a
short horizon. Static obstacles reject it when the robot centre comes within
``radius_robot`` of any obstacle point; a tracked pedestrian rejects it when
the peak-normalised density of the pedestrian's predicted position at the
robot centre exceeds ``p_th``. Among accepted candidates the one closest to
the desired action wins; otherwise the rejected candidate whose first
conflict is latest is taken, or the robot stops if even that is too soon.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import STOP, Action, ActionSpace, Pose, arc_positions
from .tracking import Track, forecast_many, mahalanobis_sq_many


@dataclass(frozen=True)
class AvoidParams:
    t_s_th: float = 4.0
    t_d_th: float = 4.0
    t_c_th: float = 0.8
    p_th: float = math.exp(-4.5)
    delta_t: float = 0.05
    radius_robot: float = 0.2
    dis_sta: float = 3.0
    n_samples: int = 200
    omega_weight: float = 0.5
    # Hard floor on predicted centre distance to a pedestrian; 0 disables it.
    radius_human: float = 0.3
    velocity_cov: Optional[tuple] = None   # fixed 2x2 prior replacing the filter's
    # in-place rotations (0, +-k/spin * omega_max) added to the candidates;
    # uniform sampling almost never draws v = 0 exactly
    spin_candidates: int = 4
    # pull towards the previous command; keeps the robot from alternating
    # between passing left and passing right of the same obstacle. At most 1,
    # so a free u_star still wins by the triangle inequality.
    hold_weight: float = 0.5

    def __post_init__(self) -> None:
        if not 0 < self.delta_t < self.t_c_th <= min(self.t_s_th, self.t_d_th):
            raise ValueError("need 0 < delta_t < t_c_th <= min(t_s_th, t_d_th)")
        if not 0.0 < self.p_th < 1.0:
            raise ValueError("p_th must lie in (0, 1)")
        if self.radius_robot <= 0:
            raise ValueError("radius_robot must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.spin_candidates < 0 or self.spin_candidates % 2:
            raise ValueError("spin_candidates must be an even count >= 0")
        if not 0.0 <= self.hold_weight <= 1.0:
            raise ValueError("hold_weight must lie in [0, 1]")

    def times(self, horizon: float) -> np.ndarray:
        n = int(math.floor(horizon / self.delta_t + 1e-9))
        return np.arange(n + 1) * self.delta_t

    @property
    def horizon(self) -> float:
        return max(self.t_s_th, self.t_d_th)


@dataclass(frozen=True)
class ActionVerdict:
    action: Action
    free: bool
    t_min: float


@dataclass
class Decision:
    action: Action
    mode: str                      # "avoid" or "stop"
    chosen: int                    # candidate index, -1 for the stop action
    candidates: np.ndarray         # (n, 2) rows of (v, omega); row 0 is u_star
    free: np.ndarray
    t_min: np.ndarray
    stop_free: bool = False        # the stop action was checked and found free

    @property
    def chosen_free(self) -> bool:
        if self.chosen < 0:
            return self.stop_free
        return bool(self.free[self.chosen])

    def verdicts(self) -> list:
        return [ActionVerdict(Action(float(v), float(w)), bool(f), float(t))
                for (v, w), f, t in zip(self.candidates, self.free, self.t_min)]

    def to_dict(self) -> dict:
        return {
            "action": [self.action.v, self.action.omega],
            "mode": self.mode,
            "chosen": self.chosen,
            "stop_free": self.stop_free,
            "candidates": self.candidates.tolist(),
            "free": self.free.tolist(),
            "t_min": self.t_min.tolist(),
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)


# --------------------------------------------------------------------------
# batched verdicts

def _cluster_arrays(statics) -> list:
    out = []
    for c in statics:
        xy = c.xy if hasattr(c, "xy") else np.asarray(c, dtype=float).reshape(-1, 2)
        if len(xy):
            out.append(xy)
    return out


def static_verdicts(candidates: np.ndarray, robot: Pose, statics,
                    params: AvoidParams) -> tuple[np.ndarray, np.ndarray]:
    """Hit flags and conflict times of each candidate against static clusters.

    Per cluster, D_s(t) is the distance from the robot centre to the
    cluster's nearest point. A cluster is hit when min_t D_s(t) falls below
    ``radius_robot``; the conflict time is the time of that minimum. If the
    robot already sits inside the radius of a cluster, only actions that
    bring it closer still count as hitting that cluster.
    """
    n = len(candidates)
    times = params.times(params.t_s_th)
    hit = np.zeros(n, dtype=bool)
    t_min = np.full(n, params.horizon)
    clusters = _cluster_arrays(statics)
    if not clusters:
        return hit, t_min
    pos = arc_positions(robot, candidates[:, 0], candidates[:, 1], times)
    flat = pos.reshape(-1, 2)
    r = params.radius_robot
    reach = float(np.max(np.abs(candidates[:, 0]))) * times[-1] + r
    for xy in clusters:
        tree = cKDTree(xy)
        # same distance routine as the sweep, so an action that holds its
        # distance compares exactly equal to d0
        d0 = tree.query([robot.x, robot.y])[0]
        if d0 > reach:
            continue
        threshold = min(r, d0)
        # distances at or beyond the threshold come back as inf
        d, _ = tree.query(flat, distance_upper_bound=threshold)
        d = d.reshape(n, len(times))
        k = np.argmin(d, axis=1)
        dmin = d[np.arange(n), k]
        cluster_hit = dmin < threshold
        hit |= cluster_hit
        t_min = np.where(cluster_hit, np.minimum(t_min, times[k]), t_min)
    return hit, t_min


def dynamic_verdicts(candidates: np.ndarray, robot: Pose, tracks: Sequence[Track],
                     params: AvoidParams) -> tuple[np.ndarray, np.ndarray]:
    """Hit flags and first conflict times of each candidate against tracks.

    A candidate conflicts at the first scanned t where the normalised density
    of the track's forecast at the robot centre exceeds ``p_th`` or, when
    ``radius_human`` > 0, the centre comes within radius_robot + radius_human
    of the forecast mean. Conditions already true at t = 0 only count when
    the action makes them worse.
    """
    n = len(candidates)
    times = params.times(params.t_d_th)
    hit = np.zeros(n, dtype=bool)
    t_min = np.full(n, params.horizon)
    if not tracks:
        return hit, t_min
    pos = arc_positions(robot, candidates[:, 0], candidates[:, 1], times)
    vcov = None if params.velocity_cov is None else np.asarray(params.velocity_cov)
    floor = params.radius_robot + params.radius_human
    for track in tracks:
        means, covs = forecast_many(track, times, vcov)
        f = np.exp(-0.5 * mahalanobis_sq_many(means, covs, pos))
        f0 = f[0, 0]
        bad = f > (params.p_th if f0 <= params.p_th else f0)
        if params.radius_human > 0:
            dist = np.hypot(pos[..., 0] - means[:, 0], pos[..., 1] - means[:, 1])
            d0 = dist[0, 0]
            bad |= dist < (floor if d0 >= floor else d0)
        any_bad = bad.any(axis=1)
        first = np.argmax(bad, axis=1)
        t_first = np.where(any_bad, times[first], params.horizon)
        hit |= any_bad
        t_min = np.minimum(t_min, t_first)
    return hit, t_min


def evaluate(candidates: np.ndarray, robot: Pose, statics, tracks: Sequence[Track],
             params: AvoidParams) -> tuple[np.ndarray, np.ndarray]:
    """Combined (free, t_min) for each candidate row."""
    s_hit, s_t = static_verdicts(candidates, robot, statics, params)
    d_hit, d_t = dynamic_verdicts(candidates, robot, tracks, params)
    hit = s_hit | d_hit
    t_min = np.where(hit, np.minimum(np.where(s_hit, s_t, np.inf), np.where(d_hit, d_t, np.inf)),
                     params.horizon)
    return ~hit, t_min


# --------------------------------------------------------------------------
# single-action wrappers

def static_conflict(action: Action, robot: Pose, statics, params: AvoidParams
                    ) -> tuple[bool, float]:
    hit, t = static_verdicts(np.array([[action.v, action.omega]]), robot, statics, params)
    return bool(hit[0]), float(t[0]) if hit[0] else params.t_s_th


def dynamic_conflict(action: Action, robot: Pose, track: Track, params: AvoidParams
                     ) -> tuple[bool, float]:
    hit, t = dynamic_verdicts(np.array([[action.v, action.omega]]), robot, [track], params)
    return bool(hit[0]), float(t[0]) if hit[0] else params.t_d_th


# --------------------------------------------------------------------------
# selection

def statics_near(statics, robot: Pose, dis_sta: float) -> list:
    out = []
    for c in statics:
        xy = c.xy if hasattr(c, "xy") else np.asarray(c, dtype=float).reshape(-1, 2)
        if len(xy) and np.min(np.hypot(xy[:, 0] - robot.x, xy[:, 1] - robot.y)) <= dis_sta:
            out.append(c)
    return out


def spin_actions(space: ActionSpace, count: int) -> list:
    half = count // 2
    rates = [space.omega_max * (k + 1) / half for k in range(half)]
    return [[0.0, s * w] for w in rates for s in (1.0, -1.0)]


def decide(u_star: Action, robot: Pose, statics, tracks: Sequence[Track],
           space: ActionSpace, params: AvoidParams,
           rng: np.random.Generator, previous: Optional[Action] = None) -> Decision:
    """Filter ``u_star`` through the velocity-obstacle check.

    Candidates are u_star (row 0), a few in-place rotations and uniform
    samples, n_samples rows in total. The free candidate nearest u_star wins,
    distance to ``previous`` (if given) adding ``hold_weight`` times its own
    weighted norm. When none is free, standing still is
    taken if it is itself free (it never brings a static obstacle closer);
    otherwise the candidate with the latest conflict, or a forced stop when
    even that conflict is sooner than t_c_th.
    """
    fixed = [[u_star.v, u_star.omega]] + spin_actions(space, params.spin_candidates)
    fixed = fixed[:params.n_samples]
    samples = space.sample(rng, max(params.n_samples - len(fixed), 0))
    candidates = np.vstack([fixed, samples.reshape(-1, 2)])
    near = statics_near(statics, robot, params.dis_sta)
    free, t_min = evaluate(candidates, robot, near, tracks, params)

    def pick(i: int, mode: str = "avoid") -> Decision:
        return Decision(Action(float(candidates[i, 0]), float(candidates[i, 1])), mode, i,
                        candidates, free, t_min)

    if free.any():
        dv = candidates[:, 0] - u_star.v
        dw = params.omega_weight * (candidates[:, 1] - u_star.omega)
        cost = np.hypot(dv, dw)
        if previous is not None and params.hold_weight > 0:
            pv = candidates[:, 0] - previous.v
            pw = params.omega_weight * (candidates[:, 1] - previous.omega)
            cost = cost + params.hold_weight * np.hypot(pv, pw)
        cost = np.where(free, cost, np.inf)
        return pick(int(np.argmin(cost)))
    stop_free, _ = evaluate(np.array([[STOP.v, STOP.omega]]), robot, near, tracks, params)
    if stop_free[0]:
        return Decision(STOP, "stop", -1, candidates, free, t_min, stop_free=True)
    i = int(np.argmax(t_min))
    if t_min[i] < params.t_c_th:
        return Decision(STOP, "stop", -1, candidates, free, t_min)
    return pick(i)


def select_action(u_star: Action, robot: Pose, statics, tracks: Sequence[Track],
                  space: ActionSpace, params: AvoidParams,
                  rng: np.random.Generator, previous: Optional[Action] = None) -> Action:
    return decide(u_star, robot, statics, tracks, space, params, rng, previous).action
