"""Two-phase informed RRT* with curvature checks and cubic-spline smoothing.

Phase one grows an ordinary RRT* over the planning bounds at a low node
density to get a first solution cost ``c_best``. Phase two grows a fresh tree
whose samples are drawn exclusively from the ellipse with foci at start and
goal and focal-distance sum ``c_best``. Every edge must clear the static
points by more than ``dis_th`` and bend by less than ``angle_th`` relative to
its parent edge, both on insertion and on rewiring.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .core import Action, Pose, wrap_angle
from .perception import Cluster, points_of

log = logging.getLogger(__name__)


class PlanningError(Exception):
    pass


class NoPathError(PlanningError):
    """Phase one found no connection to the goal within its node budget."""


class InvalidEndpointError(PlanningError):
    """Start or goal is closer than ``dis_th`` to a static obstacle."""


@dataclass(frozen=True)
class PlanParams:
    node_density: float = 8.0          # phase-two nodes per m^2
    max_edge_len: float = 0.6
    dis_th: float = 0.3
    angle_th: float = math.pi / 4
    goal_tol: float = 0.3
    rng_seed: int = 0
    phase1_ratio: float = 0.25         # phase-one density = node_density * ratio
    goal_bias: float = 0.2
    max_attempts: int = 20             # sample attempts per budgeted node
    spacing: float = 0.05              # trace arc-length spacing
    v_ref: float = 0.8                 # cruise speed of the reference profile
    accel: float = 1.0                 # trapezoid ramp, m/s^2
    v_floor: float = 0.2               # profile never drops below this
    omega_ref_max: float = 1.5         # curvature speed cap: v <= omega_ref_max / |kappa|
    kappa_max: float = 7.5             # = omega_ref_max / v_floor; spline curvature bound, 1/m
    retry_angle_factor: float = 0.75
    cone_steer: bool = True
    phase1_extend: bool = True         # keep growing phase one up to full density if unsolved

    def __post_init__(self) -> None:
        for name in ("node_density", "max_edge_len", "dis_th", "angle_th", "goal_tol",
                     "spacing", "v_ref", "kappa_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"PlanParams.{name} must be positive")


@dataclass
class Tree:
    nodes: list = field(default_factory=list)
    parent: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    children: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "nodes": [[float(p[0]), float(p[1])] for p in self.nodes],
            "parent": list(self.parent),
            "cost": [float(c) for c in self.cost],
        }


@dataclass
class PlannedPath:
    nodes: np.ndarray                 # (k, 2) waypoints, start first
    trace_xy: np.ndarray              # (m, 2) spline samples at fixed arc spacing
    trace_theta: np.ndarray
    trace_v: np.ndarray
    trace_omega: np.ndarray
    cost: float
    phase1_cost: float = math.inf
    phase2_samples: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    trees: dict = field(default_factory=dict)
    params: Optional[PlanParams] = None

    @property
    def spline_trace(self) -> list:
        return [
            (Pose(x, y, th), Action(v, w))
            for (x, y), th, v, w in zip(self.trace_xy, self.trace_theta, self.trace_v,
                                         self.trace_omega)
        ]

    def __len__(self) -> int:
        return len(self.trace_xy)

    def debug_dict(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "cost": self.cost,
            "phase1_cost": self.phase1_cost,
            "trees": {k: t.to_dict() for k, t in self.trees.items()},
            "phase2_samples": self.phase2_samples.tolist(),
            "trace": self.trace_xy.tolist(),
        }

    def dump_debug(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.debug_dict(), fh)


# --------------------------------------------------------------------------
# geometric checks

def _segment_point_distances(a: np.ndarray, b: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        d = pts - a
        return np.hypot(d[:, 0], d[:, 1])
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = pts - proj
    return np.hypot(d[:, 0], d[:, 1])


class StaticIndex:
    """KD-tree over static obstacle points for clearance queries."""

    def __init__(self, points: np.ndarray) -> None:
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        self.tree = cKDTree(self.points) if len(self.points) else None

    @classmethod
    def from_clusters(cls, statics: Sequence[Cluster]) -> "StaticIndex":
        return cls(points_of(list(statics)))

    def clearance(self, p) -> float:
        if self.tree is None:
            return math.inf
        d, _ = self.tree.query(np.asarray(p, dtype=float))
        return float(d)

    def clearances(self, pts: np.ndarray) -> np.ndarray:
        if self.tree is None:
            return np.full(len(pts), math.inf)
        d, _ = self.tree.query(np.asarray(pts, dtype=float))
        return d

    def segment_clear(self, a, b, dis_th: float) -> bool:
        if self.tree is None:
            return True
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        mid = 0.5 * (a + b)
        reach = 0.5 * float(np.hypot(*(b - a))) + dis_th
        idx = self.tree.query_ball_point(mid, reach)
        if not idx:
            return True
        return bool(np.min(_segment_point_distances(a, b, self.points[idx])) > dis_th)


def segment_clear(a, b, statics: Sequence[Cluster], dis_th: float) -> bool:
    """True iff every static point is farther than ``dis_th`` from segment ab."""
    pts = points_of(list(statics))
    if len(pts) == 0:
        return True
    d = _segment_point_distances(np.asarray(a, float), np.asarray(b, float), pts)
    return bool(np.min(d) > dis_th)


def heading(a, b) -> float:
    return math.atan2(b[1] - a[1], b[0] - a[0])


def curvature_ok(a, b, c, angle_th: float) -> bool:
    """Heading change between segments ab and bc is below ``angle_th``."""
    if math.hypot(b[0] - a[0], b[1] - a[1]) == 0.0 or math.hypot(c[0] - b[0], c[1] - b[1]) == 0.0:
        return False
    return abs(wrap_angle(heading(b, c) - heading(a, b))) < angle_th


# --------------------------------------------------------------------------
# informed sampling

def ellipse_point(start, goal, c_best: float, u) -> np.ndarray:
    """Map a unit-disc point ``u`` into the (start, goal, c_best) ellipse."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    c_min = float(np.hypot(*(goal - start)))
    if c_best < c_min - 1e-12:
        raise ValueError(f"c_best={c_best} is shorter than the straight line {c_min}")
    if c_min > 0:
        cos_a, sin_a = (goal - start) / c_min
    else:
        cos_a, sin_a = 1.0, 0.0
    rot = np.array([[cos_a, -sin_a], [sin_a, cos_a]])
    minor = math.sqrt(max(c_best**2 - c_min**2, 0.0))
    scale = np.diag([c_best / 2.0, minor / 2.0])
    return rot @ scale @ np.asarray(u, dtype=float) + 0.5 * (start + goal)


def sample_unit_disc(rng: np.random.Generator) -> np.ndarray:
    r = math.sqrt(rng.random())
    a = rng.uniform(-math.pi, math.pi)
    return np.array([r * math.cos(a), r * math.sin(a)])


def sample_ellipse(start, goal, c_best: float, rng: np.random.Generator) -> np.ndarray:
    return ellipse_point(start, goal, c_best, sample_unit_disc(rng))


def ellipse_area(c_min: float, c_best: float) -> float:
    return math.pi * (c_best / 2.0) * (math.sqrt(max(c_best**2 - c_min**2, 0.0)) / 2.0)


# --------------------------------------------------------------------------
# tree growth

class _Grid:
    """Bucketed node index with cell size equal to the edge length."""

    def __init__(self, cell: float) -> None:
        self.cell = cell
        self.buckets: dict = {}
        self.lo = None
        self.hi = None

    def key(self, p) -> tuple:
        return (int(math.floor(p[0] / self.cell)), int(math.floor(p[1] / self.cell)))

    def add(self, idx: int, p) -> None:
        k = self.key(p)
        self.buckets.setdefault(k, []).append(idx)
        if self.lo is None:
            self.lo, self.hi = list(k), list(k)
        else:
            self.lo = [min(self.lo[0], k[0]), min(self.lo[1], k[1])]
            self.hi = [max(self.hi[0], k[0]), max(self.hi[1], k[1])]

    def near(self, p, nodes, radius: float) -> list:
        kx, ky = self.key(p)
        span = int(math.ceil(radius / self.cell))
        out = []
        for ix in range(kx - span, kx + span + 1):
            for iy in range(ky - span, ky + span + 1):
                for i in self.buckets.get((ix, iy), ()):
                    q = nodes[i]
                    if math.hypot(q[0] - p[0], q[1] - p[1]) <= radius:
                        out.append(i)
        out.sort()
        return out

    def _ring(self, kx: int, ky: int, r: int):
        if r == 0:
            yield kx, ky
            return
        for ix in range(kx - r, kx + r + 1):
            yield ix, ky - r
            yield ix, ky + r
        for iy in range(ky - r + 1, ky + r):
            yield kx - r, iy
            yield kx + r, iy

    def nearest(self, p, nodes) -> int:
        kx, ky = self.key(p)
        max_ring = max(abs(kx - self.lo[0]), abs(kx - self.hi[0]),
                       abs(ky - self.lo[1]), abs(ky - self.hi[1]))
        best, best_d = -1, math.inf
        for ring in range(max_ring + 1):
            for cell in self._ring(kx, ky, ring):
                for i in self.buckets.get(cell, ()):
                    q = nodes[i]
                    d = math.hypot(q[0] - p[0], q[1] - p[1])
                    if d < best_d or (d == best_d and i < best):
                        best, best_d = i, d
            if best >= 0 and best_d <= ring * self.cell:
                break
        return best


class _RRTStar:
    def __init__(self, start, goal, index: StaticIndex, params: PlanParams,
                 bounds: np.ndarray) -> None:
        self.start = np.asarray(start, dtype=float)
        self.goal = np.asarray(goal, dtype=float)
        self.index = index
        self.p = params
        self.bounds = bounds
        self.tree = Tree()
        self.grid = _Grid(params.max_edge_len)
        self.goal_nodes: list = []
        self._add(self.start, -1, 0.0)

    def _add(self, p, parent: int, cost: float) -> int:
        i = len(self.tree.nodes)
        self.tree.nodes.append(p)
        self.tree.parent.append(parent)
        self.tree.cost.append(cost)
        self.tree.children.append([])
        if parent >= 0:
            self.tree.children[parent].append(i)
        self.grid.add(i, p)
        if math.hypot(*(p - self.goal)) <= self.p.goal_tol:
            self.goal_nodes.append(i)
        return i

    def _bend_ok(self, c: int, b_pt, a_pt) -> bool:
        if c < 0:
            return True
        return curvature_ok(self.tree.nodes[c], b_pt, a_pt, self.p.angle_th)

    def _in_bounds(self, p) -> bool:
        (x0, x1), (y0, y1) = self.bounds
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    def extend(self, sample: np.ndarray) -> bool:
        tree, p = self.tree, self.p
        near_i = self.grid.nearest(sample, tree.nodes)
        base = tree.nodes[near_i]
        d = math.hypot(*(sample - base))
        if d < 1e-9:
            return False
        a = sample if d <= p.max_edge_len else base + (sample - base) * (p.max_edge_len / d)
        grand = tree.parent[near_i]
        if grand >= 0 and p.cone_steer:
            # keep the steered point inside the parent's admissible heading cone
            h_in = heading(tree.nodes[grand], base)
            turn = wrap_angle(heading(base, a) - h_in)
            limit = 0.95 * p.angle_th
            if abs(turn) >= limit:
                h = h_in + math.copysign(limit, turn)
                step = min(d, p.max_edge_len)
                a = base + step * np.array([math.cos(h), math.sin(h)])
        if not self._in_bounds(a):
            return False

        near = self.grid.near(a, tree.nodes, p.max_edge_len + 1e-12)
        if near_i not in near:
            near.append(near_i)
        candidates = sorted(
            near, key=lambda j: (tree.cost[j] + math.hypot(*(a - tree.nodes[j])), j))
        parent = -1
        for j in candidates:
            if not self._bend_ok(tree.parent[j], tree.nodes[j], a):
                continue
            if not self.index.segment_clear(tree.nodes[j], a, p.dis_th):
                continue
            parent = j
            break
        if parent < 0:
            return False
        new = self._add(a, parent, tree.cost[parent] + math.hypot(*(a - tree.nodes[parent])))
        self._rewire(new, near)
        return True

    def _rewire(self, new: int, near: list) -> None:
        tree, p = self.tree, self.p
        a = tree.nodes[new]
        for x in near:
            if x == tree.parent[new] or tree.parent[x] < 0:
                continue
            xp = tree.nodes[x]
            c = tree.cost[new] + math.hypot(*(xp - a))
            if c >= tree.cost[x] - 1e-12:
                continue
            if not self._bend_ok(tree.parent[new], a, xp):
                continue
            if not all(curvature_ok(a, xp, tree.nodes[y], p.angle_th) for y in tree.children[x]):
                continue
            if not self.index.segment_clear(a, xp, p.dis_th):
                continue
            tree.children[tree.parent[x]].remove(x)
            tree.parent[x] = new
            tree.children[new].append(x)
            self._propagate(x, c - tree.cost[x])

    def _propagate(self, root: int, delta: float) -> None:
        stack = [root]
        while stack:
            i = stack.pop()
            self.tree.cost[i] += delta
            stack.extend(self.tree.children[i])

    def best_path(self) -> Optional[list]:
        """Cheapest back-tracked path; the exact goal is appended when reachable."""
        tree, p = self.tree, self.p
        best, best_cost = None, math.inf
        for g in self.goal_nodes:
            gp = tree.nodes[g]
            tail = math.hypot(*(self.goal - gp))
            chain = self._chain(g)
            if tail > 1e-9 and self._bend_ok(tree.parent[g], gp, self.goal) \
                    and self.index.segment_clear(gp, self.goal, p.dis_th):
                chain = chain + [self.goal]
                cost = tree.cost[g] + tail
            else:
                cost = tree.cost[g]
            if cost < best_cost - 1e-12:
                best, best_cost = chain, cost
        return best

    def _chain(self, i: int) -> list:
        out = []
        while i >= 0:
            out.append(self.tree.nodes[i])
            i = self.tree.parent[i]
        return out[::-1]

    def grow(self, budget: int, sampler, until_solved: int = 0) -> None:
        """Add ``budget`` nodes; if no goal node exists by then, continue up to
        ``until_solved`` nodes or until the first goal node appears."""
        attempts = 0
        cap = max(budget, until_solved)
        limit = self.p.max_attempts * max(cap, 1)
        while attempts < limit:
            n = len(self.tree.nodes) - 1
            if n >= cap or (n >= budget and self.goal_nodes):
                break
            attempts += 1
            self.extend(sampler())


def path_length(nodes) -> float:
    nodes = np.asarray(nodes, dtype=float)
    if len(nodes) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(nodes, axis=0).T)))


# --------------------------------------------------------------------------
# smoothing

def fit_spline(nodes) -> tuple[CubicSpline, np.ndarray]:
    """Interpolating cubic spline through ``nodes`` over chord length."""
    nodes = np.asarray(nodes, dtype=float)
    if len(nodes) < 2:
        raise ValueError("need at least two nodes")
    chords = np.hypot(*np.diff(nodes, axis=0).T)
    keep = np.concatenate([[True], chords > 1e-9])
    nodes = nodes[keep]
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(nodes, axis=0).T))])
    if len(nodes) < 2:
        raise ValueError("nodes are coincident")
    bc = "not-a-knot" if len(nodes) > 2 else "natural"
    return CubicSpline(s, nodes, axis=0, bc_type=bc), s


def speed_profile(arc: np.ndarray, kappa: np.ndarray, v_ref: float,
                  accel: Optional[float] = None, v_floor: float = 0.0,
                  omega_max: Optional[float] = None) -> np.ndarray:
    """Trapezoidal speed along arc length, capped at ``v_ref``."""
    v = np.full_like(arc, v_ref, dtype=float)
    if accel is not None and accel > 0:
        total = arc[-1]
        v = np.minimum(v, np.sqrt(v_floor**2 + 2.0 * accel * arc))
        v = np.minimum(v, np.sqrt(v_floor**2 + 2.0 * accel * (total - arc)))
    if omega_max is not None:
        with np.errstate(divide="ignore"):
            v = np.minimum(v, np.where(np.abs(kappa) > 1e-12, omega_max / np.abs(kappa), np.inf))
    return np.maximum(v, min(v_floor, v_ref))


def smooth(nodes, spacing: float = 0.05, v_ref: float = 0.8, accel: Optional[float] = None,
           v_floor: float = 0.0, omega_max: Optional[float] = None) -> list:
    """Spline trace as a list of (Pose, Action) at fixed arc-length spacing."""
    xy, theta, v, omega, _ = _smooth_arrays(nodes, spacing, v_ref, accel, v_floor, omega_max)
    return [(Pose(p[0], p[1], th), Action(a, w)) for p, th, a, w in zip(xy, theta, v, omega)]


def _smooth_arrays(nodes, spacing, v_ref, accel=None, v_floor=0.0, omega_max=None):
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    spline, s = fit_spline(nodes)
    total_s = s[-1]
    fine_n = max(200, int(math.ceil(total_s / spacing)) * 10)
    u = np.linspace(0.0, total_s, fine_n + 1)
    pts = spline(u)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    length = arc[-1]
    targets = np.arange(0.0, length, spacing)
    if len(targets) == 0 or length - targets[-1] > 1e-9:
        targets = np.append(targets, length)
    u_t = np.interp(targets, arc, u)
    u_t[-1] = total_s
    xy = spline(u_t)
    d1 = spline(u_t, 1)
    d2 = spline(u_t, 2)
    theta = np.arctan2(d1[:, 1], d1[:, 0])
    speed_sq = np.maximum(np.sum(d1 * d1, axis=1), 1e-18)
    kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed_sq**1.5
    v = speed_profile(targets, kappa, v_ref, accel, v_floor, omega_max)
    omega = v * kappa
    return xy, theta, v, omega, kappa


# --------------------------------------------------------------------------
# entry point

def _default_bounds(start, goal, points: np.ndarray, pad: float = 1.0) -> np.ndarray:
    pts = np.vstack([np.atleast_2d(start), np.atleast_2d(goal), points.reshape(-1, 2)])
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    return np.array([[lo[0], hi[0]], [lo[1], hi[1]]])


def _grow_phase(start, goal, index, params, bounds, budget, sampler,
                until_solved: int = 0) -> _RRTStar:
    rrt = _RRTStar(start, goal, index, params, bounds)
    rrt.grow(budget, sampler, until_solved)
    return rrt


def _plan_once(start, goal, index: StaticIndex, params: PlanParams,
               bounds: np.ndarray) -> PlannedPath:
    rng = np.random.default_rng(params.rng_seed)
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    (x0, x1), (y0, y1) = bounds
    area = (x1 - x0) * (y1 - y0)

    def uniform():
        if rng.random() < params.goal_bias:
            return goal.copy()
        return np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])

    budget1 = int(math.ceil(area * params.node_density * params.phase1_ratio))
    extra = int(math.ceil(area * params.node_density)) if params.phase1_extend else 0
    phase1 = _grow_phase(start, goal, index, params, bounds, budget1, uniform, extra)
    path1 = phase1.best_path()
    if path1 is None:
        raise NoPathError(f"no goal connection after {len(phase1.tree.nodes) - 1} nodes")
    c_best = path_length(path1)
    c_min = float(np.hypot(*(goal - start)))

    samples: list = []

    def informed():
        if rng.random() < params.goal_bias:
            p = goal.copy()
        else:
            p = sample_ellipse(start, goal, c_best, rng)
        samples.append(p)
        return p

    budget2 = int(math.ceil(ellipse_area(c_min, c_best) * params.node_density))
    phase2 = _grow_phase(start, goal, index, params, bounds, budget2, informed)
    path2 = phase2.best_path()

    nodes = path1
    if path2 is not None and path_length(path2) <= c_best:
        nodes = path2
    return PlannedPath(
        nodes=np.array(nodes),
        trace_xy=np.empty((0, 2)), trace_theta=np.empty(0), trace_v=np.empty(0),
        trace_omega=np.empty(0),
        cost=path_length(nodes),
        phase1_cost=c_best,
        phase2_samples=np.array(samples).reshape(-1, 2),
        trees={"phase1": phase1.tree, "phase2": phase2.tree},
        params=params,
    )


def _subdivide(a: np.ndarray, b: np.ndarray, max_len: float) -> list:
    n = max(1, int(math.ceil(math.hypot(*(b - a)) / max_len - 1e-9)))
    return [a + (b - a) * (k / n) for k in range(1, n + 1)]


def shortcut(nodes: np.ndarray, index: StaticIndex, params: PlanParams,
             goal=None) -> np.ndarray:
    """Greedy triangle-inequality pruning of a node chain.

    From each kept node, jump to the farthest later node whose straight
    segment is clear, bends admissibly from the previous edge and still
    admits the original next edge. Long jumps are re-subdivided into
    collinear pieces no longer than ``max_edge_len``, so every edge, bend and
    clearance constraint of the input chain still holds and the cost can only
    drop. When ``goal`` is given and the chain stops short of it, the goal is
    offered as an optional final target.
    """
    nodes = np.asarray(nodes, dtype=float)
    optional_tail = goal is not None and math.hypot(*(nodes[-1] - goal)) > 1e-9
    if optional_tail:
        nodes = np.vstack([nodes, goal])
    if len(nodes) <= 2 and not optional_tail:
        return nodes
    out = [nodes[0]]
    i = 0
    last = len(nodes) - 1
    while i < last:
        prev = out[-2] if len(out) > 1 else None
        nxt = i + 1
        for j in range(last, i, -1):
            a, b = nodes[i], nodes[j]
            if prev is not None and not curvature_ok(prev, a, b, params.angle_th):
                continue
            if j < last and not (optional_tail and j + 1 == last) \
                    and not curvature_ok(a, b, nodes[j + 1], params.angle_th):
                continue
            if not index.segment_clear(a, b, params.dis_th):
                continue
            nxt = j
            break
        else:
            if optional_tail and nxt == last:
                break
        out.extend(_subdivide(nodes[i], nodes[nxt], params.max_edge_len))
        i = nxt
    return np.array(out)


def _refine_near(nodes: np.ndarray, bad_xy: np.ndarray) -> np.ndarray:
    """Insert edge midpoints on the edges closest to violating trace samples."""
    seg = set()
    for p in bad_xy:
        d = [float(np.min(_segment_point_distances(a, b, p[None]))) for a, b in
             zip(nodes[:-1], nodes[1:])]
        k = int(np.argmin(d))
        seg.update({max(k - 1, 0), k, min(k + 1, len(nodes) - 2)})
    out = [nodes[0]]
    for k, (a, b) in enumerate(zip(nodes[:-1], nodes[1:])):
        if k in seg:
            out.append(0.5 * (a + b))
        out.append(b)
    return np.array(out)


def _attach_trace(path: PlannedPath, index: StaticIndex, params: PlanParams, goal) -> bool:
    """Fit the spline; accept it only if it keeps clearance and curvature bounds.

    Candidates in order: the thinned node chain, the raw chain, then the
    thinned chain with midpoints added where the spline cut too close.
    """
    thin = shortcut(path.nodes, index, params, goal)
    if path_length(thin) > path.phase1_cost:
        thin = shortcut(path.nodes, index, params)
    raw = path.nodes
    candidates = [thin, raw]
    tried = 0
    while candidates:
        nodes = candidates.pop(0)
        xy, theta, v, omega, kappa = _smooth_arrays(
            nodes, params.spacing, params.v_ref, params.accel, params.v_floor,
            params.omega_ref_max)
        clear = index.clearances(xy) >= params.dis_th
        if np.all(clear) and np.all(np.abs(kappa) <= params.kappa_max):
            path.nodes = nodes
            path.cost = path_length(nodes)
            path.trace_xy, path.trace_theta = xy, theta
            path.trace_v, path.trace_omega = v, omega
            return True
        tried += 1
        if tried <= 3 and not np.all(clear) and nodes is not raw:
            candidates.append(_refine_near(nodes, xy[~clear]))
    return False


def plan(start, goal, statics: Sequence[Cluster], params: PlanParams = PlanParams(),
         bounds=None, index: Optional[StaticIndex] = None) -> PlannedPath:
    """Plan a smoothed, curvature-checked path from ``start`` to ``goal``.

    ``bounds`` is ((xmin, xmax), (ymin, ymax)) for phase-one sampling; by
    default the box around start, goal and obstacles padded by 1 m.
    """
    if index is None:
        index = StaticIndex.from_clusters(statics)
    start = np.asarray(start, dtype=float)[:2]
    goal = np.asarray(goal, dtype=float)[:2]
    for name, p in (("start", start), ("goal", goal)):
        if index.clearance(p) < params.dis_th:
            raise InvalidEndpointError(
                f"{name} {p.tolist()} has clearance {index.clearance(p):.3f} < {params.dis_th}")
    bounds = (_default_bounds(start, goal, index.points) if bounds is None
              else np.asarray(bounds, dtype=float))

    path = _plan_once(start, goal, index, params, bounds)
    if _attach_trace(path, index, params, goal):
        return path
    log.debug("spline violated bounds; re-planning with tighter angle_th")
    tighter = replace(params, angle_th=params.angle_th * params.retry_angle_factor,
                      rng_seed=params.rng_seed + 1)
    path = _plan_once(start, goal, index, tighter, bounds)
    if _attach_trace(path, index, tighter, goal):
        return path
    raise NoPathError("smoothed trace violates clearance or curvature after retry")
