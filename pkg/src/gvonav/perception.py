"""Laser point clustering and the static/dynamic obstacle split."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core import Pose

DEFAULT_EPS = 0.3
DEFAULT_MIN_PTS = 3
DEFAULT_GATE = 0.8
DEFAULT_V_DYN_TH = 0.3


@dataclass(frozen=True)
class ScanPoint:
    x: float
    y: float
    timestamp: float = 0.0
    # Ground-truth label set by the simulator (pedestrian id); never read by
    # the clustering itself.
    source: Optional[int] = None


class Cluster:
    """A group of laser points with its centroid and enclosing radius."""

    __slots__ = ("xy", "sources", "timestamp", "centroid", "radius")

    def __init__(self, xy, sources=None, timestamp: float = 0.0) -> None:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        if len(xy) == 0:
            raise ValueError("a cluster needs at least one point")
        self.xy = xy
        self.sources = None if sources is None else np.asarray(sources, dtype=int)
        self.timestamp = timestamp
        c = xy.mean(axis=0)
        self.centroid = (float(c[0]), float(c[1]))
        self.radius = float(np.max(np.hypot(xy[:, 0] - c[0], xy[:, 1] - c[1])))

    @classmethod
    def from_points(cls, points: Sequence[ScanPoint]) -> "Cluster":
        points = list(points)
        if not points:
            raise ValueError("a cluster needs at least one point")
        xy = [[p.x, p.y] for p in points]
        sources = [-1 if p.source is None else p.source for p in points]
        return cls(xy, sources, points[0].timestamp)

    @classmethod
    def from_xy(cls, xy, timestamp: float = 0.0) -> "Cluster":
        return cls(xy, None, timestamp)

    @property
    def points(self) -> list:
        src = self.sources if self.sources is not None else [-1] * len(self.xy)
        return [ScanPoint(float(x), float(y), self.timestamp, None if s < 0 else int(s))
                for (x, y), s in zip(self.xy, src)]

    def __len__(self) -> int:
        return len(self.xy)

    def nearest_distance(self, point) -> float:
        d = self.xy - np.asarray(point, dtype=float)
        return float(np.min(np.hypot(d[:, 0], d[:, 1])))

    def majority_source(self) -> Optional[int]:
        """Most common ground-truth tag, if tagged points are the majority."""
        if self.sources is None:
            return None
        tagged = self.sources[self.sources >= 0]
        if 2 * len(tagged) <= len(self.sources):
            return None
        values, counts = np.unique(tagged, return_counts=True)
        return int(values[np.argmax(counts)])

    def __repr__(self) -> str:
        return (f"Cluster(n={len(self.xy)}, centroid=({self.centroid[0]:.3f}, "
                f"{self.centroid[1]:.3f}), radius={self.radius:.3f})")


@dataclass
class ObstacleSet:
    static_clusters: list
    dynamic_clusters: list
    # cluster index -> track id, for dynamic clusters
    matches: dict = field(default_factory=dict)

    def static_points(self) -> np.ndarray:
        if not self.static_clusters:
            return np.empty((0, 2))
        return np.vstack([c.xy for c in self.static_clusters])


def dbscan_labels(xy: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """DBSCAN labels (-1 for noise) for an (n, 2) array.

    A point is core when its closed eps-ball, itself included, holds at least
    ``min_pts`` points. Clusters are numbered by their lowest-index core
    point; a border point joins the cluster of its nearest core neighbour.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    labels = np.full(len(xy), -1, dtype=int)
    if len(xy) == 0:
        return labels
    if not np.all(np.isfinite(xy)):
        raise ValueError("scan points must have finite coordinates")
    n = len(xy)
    pairs = cKDTree(xy).query_pairs(eps, output_type="ndarray")
    degree = np.bincount(pairs.ravel(), minlength=n) + 1   # closed ball counts itself
    core = degree >= min_pts
    cc = pairs[core[pairs[:, 0]] & core[pairs[:, 1]]]
    graph = coo_matrix((np.ones(len(cc)), (cc[:, 0], cc[:, 1])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    # number clusters by their lowest-index core point, as a sequential scan would
    core_idx = np.flatnonzero(core)
    if len(core_idx) == 0:
        return labels
    comps, first = np.unique(comp[core_idx], return_index=True)
    order = np.argsort(core_idx[first])
    relabel = np.empty(comp.max() + 1, dtype=int)
    relabel[comps[order]] = np.arange(len(comps))
    labels[core_idx] = relabel[comp[core_idx]]
    # a border point joins the cluster of its nearest core neighbour, ties
    # broken by core coordinates, so the partition ignores input order
    both = np.vstack([pairs, pairs[:, ::-1]])
    edge = both[core[both[:, 0]] & ~core[both[:, 1]]]
    if len(edge):
        c, b = edge[:, 0], edge[:, 1]
        d = np.hypot(*(xy[c] - xy[b]).T)
        order = np.lexsort((xy[c, 1], xy[c, 0], d, b))
        b_sorted = b[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = b_sorted[1:] != b_sorted[:-1]
        labels[b_sorted[first]] = labels[c[order][first]]
    return labels


def cluster_xy(xy: np.ndarray, eps: float = DEFAULT_EPS, min_pts: int = DEFAULT_MIN_PTS,
               sources=None, timestamp: float = 0.0) -> tuple[list, np.ndarray]:
    """Array form of cluster_scan: (clusters, noise mask)."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    labels = dbscan_labels(xy, eps, min_pts)
    src = None if sources is None else np.asarray(sources, dtype=int)
    clusters = []
    for c in range(labels.max(initial=-1) + 1):
        m = labels == c
        clusters.append(Cluster(xy[m], None if src is None else src[m], timestamp))
    return clusters, labels == -1


def cluster_scan(points: Sequence[ScanPoint], eps: float = DEFAULT_EPS,
                 min_pts: int = DEFAULT_MIN_PTS) -> tuple[list, list]:
    """Density-based clustering of scan points; returns (clusters, noise)."""
    points = list(points)
    if not points:
        if eps <= 0 or min_pts < 1:
            raise ValueError("eps must be positive and min_pts >= 1")
        return [], []
    labels = dbscan_labels([[p.x, p.y] for p in points], eps, min_pts)
    clusters = [
        Cluster.from_points([points[i] for i in np.flatnonzero(labels == c)])
        for c in range(labels.max(initial=-1) + 1)
    ]
    noise = [points[i] for i in np.flatnonzero(labels == -1)]
    return clusters, noise


def classify_clusters(clusters: Sequence[Cluster], tracks: Sequence,
                      v_dyn_th: float = DEFAULT_V_DYN_TH,
                      gate: float = DEFAULT_GATE) -> ObstacleSet:
    """Split clusters into static and dynamic obstacles.

    Each cluster is matched to the track whose predicted position is nearest
    its centroid (within ``gate``). A cluster is dynamic only when the matched
    track moves faster than ``v_dyn_th``.
    """
    if v_dyn_th <= 0:
        raise ValueError("v_dyn_th must be positive")
    static, dynamic, matches = [], [], {}
    track_pos = np.array([t.position for t in tracks]).reshape(-1, 2)
    for cluster in clusters:
        track = None
        if len(track_pos):
            d = np.hypot(*(track_pos - np.asarray(cluster.centroid)).T)
            k = int(np.argmin(d))
            if d[k] <= gate:
                track = tracks[k]
        if track is not None and track.speed > v_dyn_th:
            matches[len(dynamic)] = track.id
            dynamic.append(cluster)
        else:
            static.append(cluster)
    return ObstacleSet(static, dynamic, matches)


def statics_within(obstacles: ObstacleSet, robot: Pose, dis_sta: float) -> list:
    """Static clusters with at least one point within ``dis_sta`` (inclusive)."""
    if dis_sta <= 0:
        raise ValueError("dis_sta must be positive")
    return [c for c in obstacles.static_clusters
            if c.nearest_distance((robot.x, robot.y)) <= dis_sta]


def points_of(clusters: Sequence[Cluster]) -> np.ndarray:
    if not clusters:
        return np.empty((0, 2))
    return np.vstack([c.xy for c in clusters])
