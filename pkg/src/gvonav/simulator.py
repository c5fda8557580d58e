"""Discrete-time world: unicycle robot, scripted pedestrians, static shapes, 2D lidar."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import Action, Pose, propagate_arc
from .perception import ScanPoint

WAYPOINT_SWITCH = 0.2
DEFAULT_DT = 0.05
DEFAULT_PED_SPEED = 1.0
DEFAULT_PED_RADIUS = 0.3
RASTER_SPACING = 0.05


# --------------------------------------------------------------------------
# shapes

@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle; walls are thin boxes."""
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate box {self}")

    def distance(self, x: float, y: float) -> float:
        """Distance from (x, y) to the box (0 inside)."""
        dx = max(self.xmin - x, 0.0, x - self.xmax)
        dy = max(self.ymin - y, 0.0, y - self.ymax)
        return math.hypot(dx, dy)

    def segments(self) -> np.ndarray:
        c = np.array([[self.xmin, self.ymin], [self.xmax, self.ymin],
                      [self.xmax, self.ymax], [self.xmin, self.ymax]])
        return np.stack([c, np.roll(c, -1, axis=0)], axis=1)   # (4, 2, 2)

    def boundary_points(self, spacing: float = RASTER_SPACING) -> np.ndarray:
        out = []
        for a, b in self.segments():
            n = max(int(math.ceil(np.linalg.norm(b - a) / spacing)), 1)
            s = np.arange(n)[:, None] / n
            out.append(a + s * (b - a))
        return np.vstack(out)

    def to_dict(self) -> dict:
        return {"type": "box", "min": [self.xmin, self.ymin], "max": [self.xmax, self.ymax]}


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"degenerate disc {self}")

    def distance(self, x: float, y: float) -> float:
        return max(math.hypot(x - self.cx, y - self.cy) - self.radius, 0.0)

    def boundary_points(self, spacing: float = RASTER_SPACING) -> np.ndarray:
        n = max(int(math.ceil(2 * math.pi * self.radius / spacing)), 3)
        a = np.arange(n) * (2 * math.pi / n)
        return np.c_[self.cx + self.radius * np.cos(a), self.cy + self.radius * np.sin(a)]

    def to_dict(self) -> dict:
        return {"type": "disc", "center": [self.cx, self.cy], "radius": self.radius}


Shape = Union[Box, Disc]


def rasterize(shapes: Sequence[Shape], spacing: float = RASTER_SPACING) -> np.ndarray:
    """Boundary point set of all shapes at roughly ``spacing``."""
    if not shapes:
        return np.empty((0, 2))
    return np.vstack([s.boundary_points(spacing) for s in shapes])


# --------------------------------------------------------------------------
# actors

@dataclass(frozen=True)
class Pedestrian:
    """Passive waypoint walker. It never reacts to the robot."""
    position: tuple
    speed: float = DEFAULT_PED_SPEED
    waypoints: tuple = ()
    radius: float = DEFAULT_PED_RADIUS
    loop: bool = False
    target: int = 0
    id: int = 0
    delay: float = 0.0         # seconds to stand still before walking

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError("pedestrian speed must be >= 0")
        if self.radius <= 0:
            raise ValueError("pedestrian radius must be positive")

    @property
    def done(self) -> bool:
        return self.target >= len(self.waypoints)

    def advance(self, dt: float) -> "Pedestrian":
        if self.delay > 0:
            return replace(self, delay=max(self.delay - dt, 0.0))
        target = self.target
        x, y = self.position
        if target < len(self.waypoints):
            wx, wy = self.waypoints[target]
            if math.hypot(wx - x, wy - y) <= WAYPOINT_SWITCH:
                target += 1
                if target >= len(self.waypoints) and self.loop:
                    target = 0
        if target >= len(self.waypoints):
            return replace(self, target=target)
        wx, wy = self.waypoints[target]
        dist = math.hypot(wx - x, wy - y)
        step = min(self.speed * dt, dist)
        if dist > 0:
            x += step * (wx - x) / dist
            y += step * (wy - y) / dist
        return replace(self, position=(x, y), target=target)

    def velocity(self) -> tuple:
        if self.done or self.speed == 0 or self.delay > 0:
            return (0.0, 0.0)
        wx, wy = self.waypoints[self.target]
        x, y = self.position
        d = math.hypot(wx - x, wy - y)
        if d == 0:
            return (0.0, 0.0)
        return (self.speed * (wx - x) / d, self.speed * (wy - y) / d)


@dataclass(frozen=True)
class Robot:
    pose: Pose
    radius: float = 0.2


@dataclass(frozen=True)
class World:
    robot: Robot
    pedestrians: tuple = ()
    static_shapes: tuple = ()
    time: float = 0.0
    dt: float = DEFAULT_DT

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.robot.radius <= 0:
            raise ValueError("robot radius must be positive")


@dataclass(frozen=True)
class LidarParams:
    fov: float = math.radians(270.0)
    angular_resolution: float = math.radians(0.33)
    range_max: float = 10.0
    range_min: float = 0.05
    noise_std: float = 0.01

    def __post_init__(self) -> None:
        if not 0 <= self.range_min < self.range_max:
            raise ValueError("need 0 <= range_min < range_max")
        if self.angular_resolution <= 0:
            raise ValueError("angular_resolution must be positive")
        if not 0 < self.fov <= 2 * math.pi:
            raise ValueError("fov must lie in (0, 2 pi]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    def ray_angles(self) -> np.ndarray:
        """Ray bearings relative to the robot heading, centre ray included."""
        half = int(math.floor(self.fov / 2 / self.angular_resolution + 1e-9))
        return np.arange(-half, half + 1) * self.angular_resolution


# --------------------------------------------------------------------------
# dynamics

def step(world: World, command: Action) -> World:
    """Advance robot (exact arc) and pedestrians by one dt."""
    pose = propagate_arc(world.robot.pose, command, world.dt)
    peds = tuple(p.advance(world.dt) for p in world.pedestrians)
    return replace(world, robot=replace(world.robot, pose=pose), pedestrians=peds,
                   time=world.time + world.dt)


def static_clearance(world: World, x: float, y: float) -> float:
    return min((s.distance(x, y) for s in world.static_shapes), default=math.inf)


def clearance(world: World) -> float:
    """Distance from the robot centre to the nearest obstacle surface."""
    x, y = world.robot.pose.x, world.robot.pose.y
    d = static_clearance(world, x, y)
    for p in world.pedestrians:
        d = min(d, math.hypot(x - p.position[0], y - p.position[1]) - p.radius)
    return d


def check_collision(world: World) -> bool:
    x, y = world.robot.pose.x, world.robot.pose.y
    r = world.robot.radius
    if any(s.distance(x, y) < r for s in world.static_shapes):
        return True
    return any(math.hypot(x - p.position[0], y - p.position[1]) < r + p.radius
               for p in world.pedestrians)


# --------------------------------------------------------------------------
# lidar

def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _ray_segments(origin: np.ndarray, dirs: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Ray parameter of the nearest hit for each ray, inf when none. segs: (S, 2, 2)."""
    if len(segs) == 0:
        return np.full(len(dirs), np.inf)
    p = segs[:, 0]
    e = segs[:, 1] - segs[:, 0]
    w = p - origin                                   # (S, 2)
    denom = _cross(dirs[:, None, :], e[None, :, :])   # (R, S)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(w, e)[None, :] / denom
        s = _cross(w[None, :, :], dirs[:, None, :]) / denom
    ok = (denom != 0) & (t >= 0) & (s >= 0) & (s <= 1)
    return np.where(ok, t, np.inf).min(axis=1)


def _ray_discs(origin: np.ndarray, dirs: np.ndarray, centers: np.ndarray,
               radii: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest entry distance per ray and the index of the disc hit (-1 if none).

    Discs containing the origin are ignored.
    """
    if len(centers) == 0:
        return np.full(len(dirs), np.inf), np.full(len(dirs), -1)
    w = centers - origin                                # (D, 2)
    b = dirs @ w.T                                      # (R, D) projection
    c = np.sum(w * w, axis=1) - radii**2                # (D,)
    disc = b * b - c[None, :]
    with np.errstate(invalid="ignore"):
        t = b - np.sqrt(disc)
    ok = (disc >= 0) & (c[None, :] > 0) & (t >= 0)
    t = np.where(ok, t, np.inf)
    k = np.argmin(t, axis=1)
    tmin = t[np.arange(len(dirs)), k]
    return tmin, np.where(np.isfinite(tmin), k, -1)


def scan_arrays(world: World, params: LidarParams,
                rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, np.ndarray]:
    """Scan as arrays: world-frame points (n, 2) and source ids (-1 for static)."""
    pose = world.robot.pose
    origin = np.array([pose.x, pose.y])
    ang = pose.theta + params.ray_angles()
    dirs = np.c_[np.cos(ang), np.sin(ang)]

    boxes = [s for s in world.static_shapes if isinstance(s, Box)]
    discs = [s for s in world.static_shapes if isinstance(s, Disc)]
    segs = np.concatenate([b.segments() for b in boxes]) if boxes else np.empty((0, 2, 2))
    r_seg = _ray_segments(origin, dirs, segs)

    centers = [(d.cx, d.cy) for d in discs] + [p.position for p in world.pedestrians]
    radii = [d.radius for d in discs] + [p.radius for p in world.pedestrians]
    r_disc, k_disc = _ray_discs(origin, dirs, np.array(centers, dtype=float).reshape(-1, 2),
                                np.array(radii, dtype=float))
    n_static_discs = len(discs)
    ped_ids = np.array([p.id for p in world.pedestrians], dtype=int)

    rng_ = np.minimum(r_seg, r_disc)
    src = np.full(len(dirs), -1)
    from_ped = (r_disc < r_seg) & (k_disc >= n_static_discs)
    src[from_ped] = ped_ids[k_disc[from_ped] - n_static_discs]

    keep = (rng_ >= params.range_min) & (rng_ <= params.range_max)
    rng_ = rng_[keep]
    if params.noise_std > 0 and len(rng_):
        if rng is None:
            raise ValueError("an rng is required when noise_std > 0")
        rng_ = rng_ + rng.normal(0.0, params.noise_std, size=len(rng_))
    xy = origin + rng_[:, None] * dirs[keep]
    return xy, src[keep]


def simulate_scan(world: World, params: LidarParams,
                  rng: Optional[np.random.Generator] = None) -> list:
    xy, src = scan_arrays(world, params, rng)
    return [ScanPoint(float(x), float(y), world.time, None if s < 0 else int(s))
            for (x, y), s in zip(xy, src)]
