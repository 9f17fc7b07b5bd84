"""
Unsupervised macro-component hints and partition noise.

Hints are built from geometry alone: radius-graph connectivity, then
longest-axis median bisection of oversized groups, then absorption of small
fragments into their nearest neighbouring group. The noise injectors perturb
a partition for robustness studies.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from c2lt3d.core.geometry import as_points
from c2lt3d.utils.errors import ConfigError, DataError
from c2lt3d.utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_LINK_RADIUS = 0.03
DEFAULT_MAX_FRAC = 0.6
DEFAULT_MIN_COUNT = 8
MAX_ROUNDS = 8
NOISE_MODES = ("merge", "split", "random")


@dataclass
class Partition:
    """Partition id of every point; ids are contiguous from 0."""

    assign: np.ndarray

    def __post_init__(self) -> None:
        self.assign = np.asarray(self.assign, dtype=np.int64).reshape(-1)
        if len(self.assign) and (
            self.assign.min() < 0 or len(np.unique(self.assign)) != self.assign.max() + 1
        ):
            raise DataError("partition ids must be contiguous from 0")

    @property
    def count(self) -> int:
        return int(self.assign.max()) + 1 if len(self.assign) else 0

    def members(self, pid: int) -> np.ndarray:
        return np.flatnonzero(self.assign == pid)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assign, minlength=self.count)

    def copy(self) -> "Partition":
        return Partition(self.assign.copy())


def relabel_by_first_point(labels: np.ndarray) -> np.ndarray:
    """Renumber groups 0.. in order of their smallest point id."""
    labels = np.asarray(labels, dtype=np.int64)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse.reshape(-1)]


def median_bisect(points: np.ndarray, ids: np.ndarray) -> List[np.ndarray]:
    """Split ``ids`` at the median of their longest bounding-box axis."""
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) < 2:
        return [ids]
    pts = points[ids]
    axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
    order = np.argsort(pts[:, axis], kind="stable")
    half = len(ids) // 2
    return [np.sort(ids[order[:half]]), np.sort(ids[order[half:]])]


def _radius_groups(points: np.ndarray, link_radius: float) -> np.ndarray:
    n = len(points)
    pairs = cKDTree(points).query_pairs(link_radius, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels


def _split_oversized(points: np.ndarray, labels: np.ndarray, limit: float) -> np.ndarray:
    groups = [np.flatnonzero(labels == g) for g in np.unique(labels)]
    done = []
    while groups:
        ids = groups.pop()
        if len(ids) > limit and len(ids) >= 2:
            groups.extend(median_bisect(points, ids))
        else:
            done.append(ids)
    out = np.empty(len(points), dtype=np.int64)
    for g, ids in enumerate(sorted(done, key=lambda a: int(a[0]))):
        out[ids] = g
    return out


def _absorb_small(points: np.ndarray, labels: np.ndarray, min_count: int) -> np.ndarray:
    labels = labels.copy()
    while True:
        uniques, counts = np.unique(labels, return_counts=True)
        if len(uniques) <= 1:
            return labels
        small = [(c, int(np.flatnonzero(labels == u)[0]), u) for u, c in zip(uniques, counts) if c < min_count]
        if not small:
            return labels
        _, _, victim = min(small)
        inside = labels == victim
        foreign = np.flatnonzero(~inside)
        dist, nn = cKDTree(points[foreign]).query(points[inside])
        # Nearest foreign point; ties go to the lowest foreign id.
        best = np.flatnonzero(dist == dist.min())
        target = labels[foreign[np.min(nn[best])]]
        labels[inside] = target


def partition_hints(
    points,
    link_radius: float = DEFAULT_LINK_RADIUS,
    max_frac: float = DEFAULT_MAX_FRAC,
    min_count: int = DEFAULT_MIN_COUNT,
) -> Partition:
    """
    Geometric macro-component hints for a point set.

    Parameters
    ----------
    points : array_like, shape (n, 3)
        Sample points (for example ``SurfaceObject.points``).
    link_radius : float
        Points closer than this are connected.
    max_frac : float
        Largest allowed fraction of all points in one partition.
    min_count : int
        Smallest allowed partition size, unless the whole object is smaller.

    Returns
    -------
    Partition
        Deterministic partition, ids ordered by each group's smallest point id.
    """
    if link_radius <= 0:
        raise ConfigError(f"link_radius must be > 0, got {link_radius}")
    if not 0 < max_frac <= 1:
        raise ConfigError(f"max_frac must be in (0, 1], got {max_frac}")
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    points = as_points(getattr(points, "points", points))
    n = len(points)
    if n == 0:
        raise DataError("empty point set")
    if n == 1:
        return Partition(np.zeros(1, dtype=np.int64))

    limit = max_frac * n
    labels = _radius_groups(points, link_radius)
    for _ in range(MAX_ROUNDS):
        labels = _split_oversized(points, labels, limit)
        labels = _absorb_small(points, labels, min_count)
        sizes = np.bincount(relabel_by_first_point(labels))
        if sizes.max() <= limit or len(sizes) == 1:
            break
    labels = relabel_by_first_point(labels)
    logger.debug(f"Partition hints: {labels.max() + 1} groups over {n} points")
    return Partition(labels)


def _centroids(points: np.ndarray, assign: np.ndarray, count: int) -> np.ndarray:
    sums = np.zeros((count, 3))
    np.add.at(sums, assign, points)
    return sums / np.bincount(assign, minlength=count)[:, None]


def inject_noise(
    partition: Partition,
    mode: str,
    strength: float,
    seed: int = 0,
    points: Optional[np.ndarray] = None,
) -> Partition:
    """
    Perturb a partition.

    Parameters
    ----------
    partition : Partition
        Partition to perturb; it is not modified.
    mode : {"merge", "split", "random"}
        ``merge`` unions the ``strength`` fraction of partition pairs with the
        nearest centroids; ``split`` bisects a seeded ``strength`` fraction of
        partitions once; ``random`` reassigns a seeded ``strength`` fraction of
        points uniformly over the existing partition ids.
    strength : float
        Noise level in [0, 1]. Zero returns an identical copy.
    seed : int
        Seed for the ``split`` and ``random`` modes.
    points : np.ndarray, optional
        Point coordinates, required by ``merge`` and ``split``.

    Returns
    -------
    Partition
        Perturbed partition with contiguous ids.
    """
    if mode not in NOISE_MODES:
        raise ConfigError(f"unknown noise mode '{mode}'")
    if not 0.0 <= strength <= 1.0:
        raise ConfigError(f"noise strength must be in [0, 1], got {strength}")
    if strength == 0.0:
        return partition.copy()

    assign = partition.assign.copy()
    count = partition.count
    rng = np.random.default_rng(seed)

    if mode == "random":
        flip = rng.random(len(assign)) < strength
        assign[flip] = rng.integers(0, count, size=int(flip.sum()))
        return Partition(relabel_by_first_point(assign))

    if points is None:
        raise DataError(f"'{mode}' noise needs point coordinates")
    points = as_points(points)

    if mode == "merge":
        n_pairs = int(round(strength * count * (count - 1) / 2))
        centroids = _centroids(points, assign, count)
        pairs = [
            (float(np.linalg.norm(centroids[i] - centroids[j])), i, j)
            for i in range(count)
            for j in range(i + 1, count)
        ]
        parent = list(range(count))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for _, i, j in sorted(pairs)[:n_pairs]:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        assign = np.array([find(a) for a in assign.tolist()], dtype=np.int64)
        return Partition(relabel_by_first_point(assign))

    n_split = int(round(strength * count))
    chosen = np.sort(rng.choice(count, size=n_split, replace=False))
    next_label = count
    for pid in chosen.tolist():
        halves = median_bisect(points, np.flatnonzero(partition.assign == pid))
        if len(halves) == 2:
            assign[halves[1]] = next_label
            next_label += 1
    return Partition(relabel_by_first_point(assign))
