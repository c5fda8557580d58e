"""Scenario files: JSON schema, loading and validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from .core import Pose
from .simulator import DEFAULT_PED_RADIUS, DEFAULT_PED_SPEED, Box, Disc

SCHEMA_VERSION = 1
METHODS = ("GVO_ONLY", "GVO_RRT")
METHOD_ALIASES = {"gvo": "GVO_ONLY", "gvo-rrt": "GVO_RRT", "gvo_only": "GVO_ONLY",
                  "gvo_rrt": "GVO_RRT"}

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["version", "robot_start", "robot_goal"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "bounds": {"type": "array", "items": _point, "minItems": 2, "maxItems": 2},
        "robot_start": {"type": "array", "items": {"type": "number"},
                        "minItems": 2, "maxItems": 3},
        "robot_goal": _point,
        "timeout": {"type": "number"},
        "method": {"enum": list(METHODS)},
        "seed": {"type": "integer"},
        "static_shapes": {
            "type": "array",
            "items": {
                "oneOf": [
                    {"type": "object", "additionalProperties": False,
                     "required": ["type", "min", "max"],
                     "properties": {"type": {"const": "box"}, "min": _point, "max": _point}},
                    {"type": "object", "additionalProperties": False,
                     "required": ["type", "center", "radius"],
                     "properties": {"type": {"const": "disc"}, "center": _point,
                                    "radius": {"type": "number"}}},
                ]
            },
        },
        "pedestrians": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["start"],
                "properties": {
                    "start": _point,
                    "waypoints": {"type": "array", "items": _point},
                    "speed": {"type": "number"},
                    "radius": {"type": "number"},
                    "loop": {"type": "boolean"},
                    "delay": {"type": "number"},
                    # seeded perturbations applied per episode
                    "start_jitter": {"type": "number"},
                    "delay_jitter": {"type": "number"},
                },
            },
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "object"} for k in
                           ("planner", "follower", "avoid", "lidar", "perception",
                            "tracker", "robot", "episode", "action_space")},
        },
    },
}


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None) -> None:
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class PedestrianSpec:
    start: tuple
    waypoints: tuple = ()
    speed: float = DEFAULT_PED_SPEED
    radius: float = DEFAULT_PED_RADIUS
    loop: bool = False
    delay: float = 0.0
    start_jitter: float = 0.0
    delay_jitter: float = 0.0


@dataclass(frozen=True)
class Scenario:
    name: str
    bounds: tuple                  # ((xmin, xmax), (ymin, ymax))
    robot_start: Pose
    robot_goal: tuple
    static_shapes: tuple = ()
    pedestrians: tuple = ()
    timeout: float = 60.0
    method: str = "GVO_RRT"
    seed: int = 0
    params: dict = field(default_factory=dict)

    def with_method(self, method: str) -> "Scenario":
        from dataclasses import replace
        return replace(self, method=normalize_method(method))

    def with_seed(self, seed: int) -> "Scenario":
        from dataclasses import replace
        return replace(self, seed=int(seed))


def normalize_method(method: str) -> str:
    m = METHOD_ALIASES.get(method.lower(), method.upper())
    if m not in METHODS:
        raise ScenarioError(f"unknown method {method!r}", "method")
    return m


def _field_name(path) -> str:
    parts = [str(p) for p in path]
    return ".".join(parts) if parts else "<root>"


def _line_of(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _inside(bounds, p) -> bool:
    (x0, x1), (y0, y1) = bounds
    return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


def scenario_from_dict(data: dict, text: Optional[str] = None) -> Scenario:
    """Validate a decoded scenario and build it, filling defaults."""
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        top = exc.path[0] if exc.path else (exc.validator_value[0]
                                           if exc.validator == "required" else None)
        name = _field_name(exc.path) if exc.path else top
        if exc.validator == "required":
            missing = [k for k in exc.validator_value if k not in exc.instance]
            name = missing[0] if missing else name
        line = _line_of(text, str(exc.path[-1] if exc.path and isinstance(exc.path[-1], str)
                                  else top)) if text and top else None
        raise ScenarioError(exc.message, name, line) from None

    def check(cond: bool, msg: str, key: str) -> None:
        if not cond:
            raise ScenarioError(msg, key, _line_of(text, key.split(".")[0]) if text else None)

    start = data["robot_start"]
    goal = tuple(float(v) for v in data["robot_goal"])
    start_pose = Pose(float(start[0]), float(start[1]), float(start[2]) if len(start) > 2 else 0.0)
    if "bounds" in data:
        bounds = tuple(tuple(float(v) for v in b) for b in data["bounds"])
    else:
        xs = (start_pose.x, goal[0])
        ys = (start_pose.y, goal[1])
        bounds = ((min(xs) - 2.0, max(xs) + 2.0), (min(ys) - 2.0, max(ys) + 2.0))
    check(bounds[0][1] > bounds[0][0] and bounds[1][1] > bounds[1][0],
          "bounds must be [[xmin, xmax], [ymin, ymax]] with min < max", "bounds")
    check(_inside(bounds, start_pose.xy), "start lies outside bounds", "robot_start")
    check(_inside(bounds, goal), "goal lies outside bounds", "robot_goal")
    timeout = float(data.get("timeout", 60.0))
    check(timeout > 0, "timeout must be positive", "timeout")
    check(all(math.isfinite(v) for v in (*start_pose.xy, *goal)),
          "coordinates must be finite", "robot_start")

    shapes = []
    for i, s in enumerate(data.get("static_shapes", [])):
        try:
            if s["type"] == "box":
                shapes.append(Box(s["min"][0], s["min"][1], s["max"][0], s["max"][1]))
            else:
                shapes.append(Disc(s["center"][0], s["center"][1], s["radius"]))
        except ValueError as exc:
            raise ScenarioError(str(exc), f"static_shapes.{i}") from None

    peds = []
    for i, p in enumerate(data.get("pedestrians", [])):
        spec = PedestrianSpec(
            start=tuple(p["start"]),
            waypoints=tuple(tuple(w) for w in p.get("waypoints", [])),
            speed=float(p.get("speed", DEFAULT_PED_SPEED)),
            radius=float(p.get("radius", DEFAULT_PED_RADIUS)),
            loop=bool(p.get("loop", False)),
            delay=float(p.get("delay", 0.0)),
            start_jitter=float(p.get("start_jitter", 0.0)),
            delay_jitter=float(p.get("delay_jitter", 0.0)),
        )
        check(spec.speed >= 0, "speed must be >= 0", f"pedestrians.{i}.speed")
        check(spec.radius > 0, "radius must be positive", f"pedestrians.{i}.radius")
        check(spec.delay >= 0 and spec.start_jitter >= 0 and spec.delay_jitter >= 0,
              "delay and jitters must be >= 0", f"pedestrians.{i}")
        peds.append(spec)

    return Scenario(
        name=data.get("name", "unnamed"),
        bounds=bounds,
        robot_start=start_pose,
        robot_goal=goal,
        static_shapes=tuple(shapes),
        pedestrians=tuple(peds),
        timeout=timeout,
        method=data.get("method", "GVO_RRT"),
        seed=int(data.get("seed", 0)),
        params={k: dict(v) for k, v in data.get("params", {}).items()},
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    Raises OSError when the file cannot be read and ScenarioError (with line
    and field when known) when it does not parse or validate.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (column {exc.colno})",
                            line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ScenarioError("top level must be an object", line=1)
    return scenario_from_dict(data, text)


def scenario_to_dict(s: Scenario) -> dict:
    out = {
        "version": SCHEMA_VERSION,
        "name": s.name,
        "bounds": [list(b) for b in s.bounds],
        "robot_start": [s.robot_start.x, s.robot_start.y, s.robot_start.theta],
        "robot_goal": list(s.robot_goal),
        "timeout": s.timeout,
        "method": s.method,
        "seed": s.seed,
        "static_shapes": [sh.to_dict() for sh in s.static_shapes],
        "pedestrians": [
            {"start": list(p.start), "waypoints": [list(w) for w in p.waypoints],
             "speed": p.speed, "radius": p.radius, "loop": p.loop, "delay": p.delay,
             "start_jitter": p.start_jitter, "delay_jitter": p.delay_jitter}
            for p in s.pedestrians
        ],
    }
    if s.params:
        out["params"] = s.params
    return out


def bundled_scenarios() -> list:
    """Names of the scenario files shipped with the package."""
    root = resources.files("gvonav") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str) -> Path:
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files("gvonav") / "scenarios" / name))
