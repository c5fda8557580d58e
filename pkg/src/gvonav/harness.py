"""Episode orchestration, batch metrics and trace export.

One control cycle: scan, cluster, track, split static/dynamic, (re)plan,
desired action from the follower or straight at the goal, velocity-obstacle
filter when anything is within reach, then step the world.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .avoidance import AvoidParams, decide
from .core import Action, ActionSpace, Pose, wrap_angle
from .follower import FollowerParams, follow, nearest_index
from .perception import (DEFAULT_EPS, DEFAULT_GATE, DEFAULT_MIN_PTS, DEFAULT_V_DYN_TH,
                         classify_clusters, cluster_xy)
from .planner import InvalidEndpointError, PlannedPath, PlanningError, PlanParams, plan
from .scenario import Scenario, ScenarioError, normalize_method
from .simulator import (LidarParams, Pedestrian, Robot, World, check_collision, clearance,
                        scan_arrays, step)
from .tracking import DEFAULT_INIT_VEL_VAR, DEFAULT_R, STALE_AFTER, Tracker

log = logging.getLogger(__name__)

MODES = ("follow", "avoid", "stop")


@dataclass(frozen=True)
class EpisodeParams:
    dt: float = 0.05
    goal_tol: float = 0.3
    robot_radius: float = 0.2
    # avoidance footprint = robot_radius + avoid_margin (absorbs scan noise
    # and the time discretisation of the conflict sweep)
    avoid_margin: float = 0.05
    goal_gain: float = 1.5          # bearing gain of the goal-seeking action
    goal_speed_ratio: float = 0.5   # goal-seeking speed as a fraction of v_max
    map_tol: float = 0.1            # scan points farther than this from the map are new
    replan_every: float = 0.5       # retry period after a failed re-plan, s
    plan_attempts: int = 3          # planner seeds tried before giving up


@dataclass(frozen=True)
class PerceptionParams:
    eps: float = DEFAULT_EPS
    min_pts: int = DEFAULT_MIN_PTS
    gate: float = DEFAULT_GATE
    v_dyn_th: float = DEFAULT_V_DYN_TH
    # "tags": clusters whose points mostly carry a simulator pedestrian id;
    # "motion": person-sized clusters whose centroid moved since the last scan
    people: str = "tags"
    person_max_radius: float = 0.45

    def __post_init__(self) -> None:
        if self.people not in ("tags", "motion"):
            raise ValueError("people must be 'tags' or 'motion'")


@dataclass(frozen=True)
class TrackerParams:
    # episodes use a calmer process noise than the filter default: scripted
    # pedestrians walk straight, and the 4 s forecast cone grows with sigma_v
    q: float = 0.05
    r: float = DEFAULT_R
    stale_after: float = STALE_AFTER
    init_vel_var: float = DEFAULT_INIT_VEL_VAR
    # a track takes part in avoidance once its velocity std is below this
    confirm_vel_std: float = 0.15


@dataclass(frozen=True)
class EpisodeConfig:
    episode: EpisodeParams
    planner: PlanParams
    follower: FollowerParams
    avoid: AvoidParams
    lidar: LidarParams
    perception: PerceptionParams
    tracker: TrackerParams
    space: ActionSpace

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "EpisodeConfig":
        over = scenario.params

        def build(section: str, kind, **defaults):
            given = dict(over.get(section, {}))
            names = {f.name for f in fields(kind)}
            unknown = sorted(set(given) - names)
            if unknown:
                raise ScenarioError(f"unknown parameter(s) {unknown}", f"params.{section}")
            for k, v in given.items():
                if isinstance(v, list):
                    given[k] = tuple(tuple(r) if isinstance(r, list) else r for r in v)
            try:
                return kind(**{**defaults, **given})
            except (TypeError, ValueError) as exc:
                raise ScenarioError(str(exc), f"params.{section}") from None

        episode = build("episode", EpisodeParams)
        if "robot" in over:
            robot = dict(over["robot"])
            if set(robot) - {"radius"}:
                raise ScenarioError("only 'radius' is supported", "params.robot")
            episode = replace(episode, robot_radius=float(robot.get("radius", 0.2)))
        space = build("action_space", ActionSpace)
        avoid = build("avoid", AvoidParams,
                      radius_robot=episode.robot_radius + episode.avoid_margin,
                      n_samples=space.sample_count)
        return cls(
            episode=episode,
            planner=build("planner", PlanParams, goal_tol=episode.goal_tol),
            follower=build("follower", FollowerParams),
            avoid=avoid,
            lidar=build("lidar", LidarParams),
            perception=build("perception", PerceptionParams),
            tracker=build("tracker", TrackerParams),
            space=space,
        )


@dataclass(frozen=True)
class StepRecord:
    step: int
    time: float
    pose: Pose
    command: Action
    mode: str
    free: bool                    # executed action passed the obstacle check
    clearance: float
    pedestrians: tuple            # ((x, y), ...)


@dataclass
class EpisodeResult:
    success: bool
    completion_time: Optional[float]
    min_clearance: float
    collision: bool
    replan_count: int
    reason: str
    method: str
    seed: int
    trace: list = field(default_factory=list)
    path: Optional[PlannedPath] = None

    def summary(self) -> dict:
        return {
            "success": self.success,
            "completion_time": self.completion_time,
            "min_clearance": self.min_clearance,
            "collision": self.collision,
            "replan_count": self.replan_count,
            "reason": self.reason,
            "method": self.method,
            "seed": self.seed,
            "steps": len(self.trace),
        }


# --------------------------------------------------------------------------
# world construction

def build_world(scenario: Scenario, config: EpisodeConfig, rng: np.random.Generator) -> World:
    peds = []
    for i, p in enumerate(scenario.pedestrians):
        x, y = p.start
        if p.start_jitter > 0:
            x += rng.uniform(-p.start_jitter, p.start_jitter)
            y += rng.uniform(-p.start_jitter, p.start_jitter)
        delay = p.delay + (rng.uniform(0.0, p.delay_jitter) if p.delay_jitter > 0 else 0.0)
        peds.append(Pedestrian((x, y), p.speed, p.waypoints, p.radius, p.loop, id=i,
                               delay=delay))
    return World(Robot(scenario.robot_start, config.episode.robot_radius), tuple(peds),
                 scenario.static_shapes, 0.0, config.episode.dt)


class StaticMap:
    """Accumulated static scan points, thinned to ``tol``."""

    def __init__(self, tol: float) -> None:
        self.tol = tol
        self.points = np.empty((0, 2))
        self._tree: Optional[cKDTree] = None

    def novel(self, xy: np.ndarray) -> np.ndarray:
        if len(xy) == 0 or self._tree is None:
            return xy
        d, _ = self._tree.query(xy, distance_upper_bound=self.tol)
        return xy[~np.isfinite(d)]

    def add(self, xy: np.ndarray) -> None:
        if len(xy) == 0:
            return
        # thin the batch itself on a tol grid so repeated scans stay bounded
        keys = np.floor(xy / self.tol).astype(np.int64)
        _, first = np.unique(keys, axis=0, return_index=True)
        self.points = np.vstack([self.points, xy[np.sort(first)]])
        self._tree = cKDTree(self.points)


def confirmed(track, params: TrackerParams) -> bool:
    """Velocity settled enough to forecast; fresh tracks carry the prior."""
    return float(np.max(np.linalg.eigvalsh(track.covariance[2:, 2:]))) <= params.confirm_vel_std ** 2


def detect_people(clusters: list, previous: np.ndarray, params: PerceptionParams,
                  dt: float) -> tuple[list, np.ndarray]:
    """Indices of clusters registered as people, plus this scan's candidates.

    ``previous`` holds the person-sized centroids of the last scan (motion
    mode only). In motion mode a person-sized cluster counts when its nearest
    previous candidate lies within the gate and at least half the dynamic
    speed threshold's travel per step away. The robot's own motion also
    shifts the visible faces of small static objects; those may be tracked
    briefly but stay static unless their speed passes v_dyn_th.
    """
    if params.people == "tags":
        return [i for i, c in enumerate(clusters) if c.majority_source() is not None], previous
    sized = [i for i, c in enumerate(clusters) if c.radius <= params.person_max_radius]
    now = np.array([clusters[i].centroid for i in sized], dtype=float).reshape(-1, 2)
    out = []
    if len(previous):
        min_step = 0.5 * params.v_dyn_th * dt
        for i, c in zip(sized, now):
            d = np.min(np.hypot(previous[:, 0] - c[0], previous[:, 1] - c[1]))
            if min_step <= d <= params.gate:
                out.append(i)
    return out, now


def goal_action(pose: Pose, goal, space: ActionSpace, params: EpisodeParams) -> Action:
    """Desired action pointing straight at the goal."""
    bearing = math.atan2(goal[1] - pose.y, goal[0] - pose.x)
    err = wrap_angle(bearing - pose.theta)
    return space.clamp(Action(params.goal_speed_ratio * space.v_max, params.goal_gain * err))


def _path_finished(path: PlannedPath, pose: Pose) -> bool:
    xy = path.trace_xy
    i = nearest_index(xy, (pose.x, pose.y))
    if i < len(xy) - 1:
        return False
    th = path.trace_theta[-1]
    return (pose.x - xy[-1, 0]) * math.cos(th) + (pose.y - xy[-1, 1]) * math.sin(th) >= 0.0


# --------------------------------------------------------------------------
# episode

def run_episode(scenario: Scenario, config: Optional[EpisodeConfig] = None,
                keep_path: bool = True) -> EpisodeResult:
    config = config or EpisodeConfig.from_scenario(scenario)
    method = normalize_method(scenario.method)
    ep = config.episode
    seeds = np.random.SeedSequence(scenario.seed).spawn(3)
    world_rng, scan_rng, gvo_rng = (np.random.default_rng(s) for s in seeds)
    plan_params = replace(config.planner, rng_seed=config.planner.rng_seed + scenario.seed)

    world = build_world(scenario, config, world_rng)
    tracker = Tracker(config.tracker.q, config.tracker.r, config.perception.gate,
                      config.tracker.stale_after, config.tracker.init_vel_var)
    static_map = StaticMap(ep.map_tol)
    goal = scenario.robot_goal
    path: Optional[PlannedPath] = None
    replans = 0
    pending_since: Optional[float] = None     # time of a failed re-plan still owed
    trace: list[StepRecord] = []
    prev_people = np.empty((0, 2))
    n_steps = int(math.floor(scenario.timeout / ep.dt + 1e-9))
    reason = "timeout"
    success = collision = False
    completion = None

    def record(k: int, cmd: Action, mode: str, free: bool) -> None:
        trace.append(StepRecord(k, world.time, world.robot.pose, cmd, mode, free,
                                clearance(world),
                                tuple(p.position for p in world.pedestrians)))

    def replan(start_xy) -> Optional[PlannedPath]:
        statics = _as_clusters([static_map.points])
        for attempt in range(ep.plan_attempts):
            params = replace(plan_params, rng_seed=plan_params.rng_seed + 7919 * attempt)
            try:
                return plan(start_xy, goal, statics, params, bounds=scenario.bounds)
            except InvalidEndpointError as exc:
                log.debug("planning refused at t=%.2f: %s", world.time, exc)
                break       # an endpoint problem does not go away with a new seed
            except PlanningError as exc:
                log.debug("planning failed at t=%.2f (attempt %d): %s", world.time,
                          attempt + 1, exc)
        return None

    last_cmd = None
    for k in range(n_steps + 1):
        pose = world.robot.pose
        if check_collision(world):
            collision, reason = True, "collision"
            record(k, Action(0.0, 0.0), "stop", False)
            break
        if math.hypot(goal[0] - pose.x, goal[1] - pose.y) <= ep.goal_tol:
            success, reason, completion = True, "goal", world.time
            record(k, Action(0.0, 0.0), "stop", True)
            break
        if k == n_steps:
            record(k, Action(0.0, 0.0), "stop", True)
            break

        # perception
        xy, src = scan_arrays(world, config.lidar, scan_rng)
        clusters, _ = cluster_xy(xy, config.perception.eps, config.perception.min_pts,
                                 src, world.time)
        person, prev_people = detect_people(clusters, prev_people, config.perception, ep.dt)
        sub = [clusters[i] for i in person]
        tracked = tracker.step(world.time, sub, may_spawn=lambda c: True)
        assoc = {person[i]: tid for i, tid in tracked.items()}
        tracks = [t for t in tracker.snapshot() if confirmed(t, config.tracker)]
        split = classify_clusters([sub[i] for i in tracked], tracks,
                                  config.perception.v_dyn_th, config.perception.gate)
        statics = [c for i, c in enumerate(clusters) if i not in assoc] + split.static_clusters
        dynamic = [t for t in tracks if t.speed > config.perception.v_dyn_th]
        untracked = [c.xy for i, c in enumerate(clusters) if i not in assoc]
        seen = np.vstack(untracked) if untracked else np.empty((0, 2))

        # planning
        if method == "GVO_RRT":
            fresh = static_map.novel(seen)
            static_map.add(fresh)
            if k == 0:
                path = replan(pose.xy)
                if path is None:
                    reason = "no_path"
                    record(k, Action(0.0, 0.0), "stop", True)
                    break
            elif path is not None:
                if len(fresh) and pending_since is None:
                    i = nearest_index(path.trace_xy, pose.xy)
                    rest = path.trace_xy[i:]
                    d, _ = cKDTree(fresh).query(rest)
                    if np.min(d) < plan_params.dis_th:
                        pending_since = -math.inf
                if pending_since is not None and world.time - pending_since >= ep.replan_every:
                    new = replan(pose.xy)
                    if new is not None:
                        path, pending_since = new, None
                        replans += 1
                        log.debug("re-planned at t=%.2f", world.time)
                    else:
                        pending_since = world.time

        # desired action
        if path is not None and not _path_finished(path, pose):
            u_star = follow(path, pose, config.follower, config.space)
        else:
            u_star = goal_action(pose, goal, config.space, ep)

        # activation and filtering
        reach = config.avoid.dis_sta
        active = any(c.nearest_distance(pose.xy) <= reach for c in statics) or any(
            math.hypot(t.mean[0] - pose.x, t.mean[1] - pose.y) <= reach for t in dynamic)
        if active:
            d = decide(u_star, pose, statics, dynamic, config.space, config.avoid, gvo_rng,
                       previous=last_cmd)
            cmd, mode, free = d.action, d.mode, d.chosen_free
        else:
            cmd, mode, free = u_star, "follow", True

        record(k, cmd, mode, free)
        last_cmd = cmd
        world = step(world, cmd)

    return EpisodeResult(
        success=success,
        completion_time=completion,
        min_clearance=min(r.clearance for r in trace),
        collision=collision,
        replan_count=replans,
        reason=reason,
        method=method,
        seed=scenario.seed,
        trace=trace,
        path=path if keep_path else None,
    )


def _as_clusters(arrays: list) -> list:
    from .perception import Cluster
    return [Cluster.from_xy(a) for a in arrays if len(a)]


# --------------------------------------------------------------------------
# batches

def run_batch(scenario: Scenario, runs: int, config: Optional[EpisodeConfig] = None,
              keep_results: bool = True, keep_path: bool = False) -> dict:
    """Run seeds seed .. seed+runs-1; times are aggregated over successes only."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    config = config or EpisodeConfig.from_scenario(scenario)
    results = [run_episode(scenario.with_seed(scenario.seed + i), config, keep_path=keep_path)
               for i in range(runs)]
    return summarize(results, scenario, keep_results)


def summarize(results: list, scenario: Scenario, keep_results: bool = True) -> dict:
    times = np.array([r.completion_time for r in results if r.success], dtype=float)
    summary = {
        "scenario": scenario.name,
        "method": normalize_method(scenario.method),
        "runs": len(results),
        "success_rate": sum(r.success for r in results) / len(results),
        "collisions": sum(r.collision for r in results),
        # None marks an undefined statistic (no successful run)
        "mean_time": float(times.mean()) if len(times) else None,
        "std_time": float(times.std()) if len(times) else None,
        "min_clearance": min(r.min_clearance for r in results),
    }
    if keep_results:
        summary["per_run"] = [r.summary() for r in results]
        summary["results"] = results
    return summary


# --------------------------------------------------------------------------
# export

TRACE_COLUMNS = ("step", "time", "x", "y", "theta", "v", "omega", "mode", "free", "clearance")


def trace_columns(n_pedestrians: int) -> list:
    cols = list(TRACE_COLUMNS)
    for i in range(n_pedestrians):
        cols += [f"ped{i}_x", f"ped{i}_y"]
    return cols


def trace_csv(result: EpisodeResult) -> str:
    """Trace as CSV text; floats are written with repr so replays compare exactly."""
    n_ped = len(result.trace[0].pedestrians) if result.trace else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_columns(n_ped))
    for r in result.trace:
        row = [r.step, repr(r.time), repr(r.pose.x), repr(r.pose.y), repr(r.pose.theta),
               repr(r.command.v), repr(r.command.omega), r.mode, int(r.free),
               repr(r.clearance)]
        for x, y in r.pedestrians:
            row += [repr(float(x)), repr(float(y))]
        w.writerow(row)
    return buf.getvalue()


def write_trace(result: EpisodeResult, path) -> None:
    Path(path).write_text(trace_csv(result), encoding="utf-8")


def read_trace(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def json_safe(obj):
    """Copy of ``obj`` with non-finite floats replaced by None (strict JSON)."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_outputs(summary: dict, out_dir, tree_debug: bool = False) -> list:
    """trace_<run>.csv per run, summary.json and optionally tree_debug.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    results = summary.get("results", [])
    for i, r in enumerate(results):
        p = out / f"trace_{i}.csv"
        write_trace(r, p)
        written.append(p)
    clean = json_safe({k: v for k, v in summary.items() if k != "results"})
    p = out / "summary.json"
    p.write_text(json.dumps(clean, indent=2, sort_keys=True, allow_nan=False), encoding="utf-8")
    written.append(p)
    if tree_debug:
        paths = [r.path for r in results if r.path is not None]
        if paths:
            p = out / "tree_debug.json"
            paths[-1].dump_debug(p)
            written.append(p)
    return written
