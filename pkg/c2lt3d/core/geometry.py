"""Rigid poses and exact nearest-neighbour queries.

Everything downstream measures point-to-set distances through ``NNIndex``. The
index narrows candidates with a ``cKDTree`` and then recomputes distances with the
same elementwise formula the brute-force reference uses, so the two paths agree
bit for bit and break ties the same way (lowest point index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from c2lt3d.utils.errors import DataError

ORTHONORMAL_TOL = 1e-6
# Candidates fetched from the tree per query before the exact re-rank.
CANDIDATES = 8
# Relative slack when deciding whether tree candidates may hide a tie.
TIE_SLACK = 1e-9


def as_points(points, name: str = "points") -> np.ndarray:
    """Return ``points`` as a finite float64 ``(n, 3)`` array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DataError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def _euclidean(diff: np.ndarray) -> np.ndarray:
    """Norm over the last axis of ``diff``, evaluated elementwise in a fixed order."""
    return np.sqrt(
        diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
    )


def is_rotation(matrix: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    """True if ``matrix`` is orthonormal with determinant +1 within ``tol``."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (3, 3):
        return False
    return bool(
        np.allclose(m.T @ m, np.eye(3), atol=tol) and abs(np.linalg.det(m) - 1.0) <= tol
    )


def rotation_from_rotvec(rotvec) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix()


def rotvec_from_matrix(matrix: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(np.asarray(matrix, dtype=np.float64)).as_rotvec()


@dataclass(frozen=True, eq=False)
class Pose:
    """Similarity transform ``p -> scale * rotation @ p + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self) -> None:
        rotation = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise DataError(f"pose scale must be positive, got {self.scale}")
        if not np.all(np.isfinite(translation)):
            raise DataError("pose translation must be finite")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    def apply(self, points) -> np.ndarray:
        """Map points (shape ``(3,)`` or ``(n, 3)``) through the pose."""
        p = np.asarray(points, dtype=np.float64)
        return self.scale * (p @ self.rotation.T) + self.translation

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -(rt @ self.translation) / self.scale, 1.0 / self.scale)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
            and abs(self.scale - other.scale) <= atol
        )

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Pose":
        return cls(data["rotation"], data["translation"], data["scale"])


def compose(outer: Pose, inner: Pose) -> Pose:
    """Pose equivalent to applying ``inner`` first and then ``outer``."""
    return Pose(
        outer.rotation @ inner.rotation,
        outer.scale * (outer.rotation @ inner.translation) + outer.translation,
        outer.scale * inner.scale,
    )


def relative_pose(source: Pose, dest: Pose) -> Pose:
    """Pose of ``dest`` expressed in the frame of ``source``."""
    return compose(source.inverse(), dest)


def brute_force_nearest(points, queries) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exhaustive nearest neighbour, the reference every index query must match.

    Parameters
    ----------
    points : array_like, shape (n, 3)
        Indexed points.
    queries : array_like, shape (m, 3)
        Query points.

    Returns
    -------
    distances : np.ndarray, shape (m,)
    indices : np.ndarray, shape (m,)
        Lowest index among the nearest points.
    """
    pts = as_points(points)
    qs = as_points(queries, "queries")
    if len(pts) == 0:
        raise DataError("empty point set")
    dist = np.empty(len(qs))
    idx = np.empty(len(qs), dtype=np.int64)
    chunk = max(1, 2_000_000 // max(len(pts), 1))
    for start in range(0, len(qs), chunk):
        block = _euclidean(qs[start : start + chunk, None, :] - pts[None, :, :])
        winner = np.argmin(block, axis=1)
        idx[start : start + chunk] = winner
        dist[start : start + chunk] = block[np.arange(len(block)), winner]
    return dist, idx


class NNIndex:
    """Immutable exact nearest-neighbour index over a 3D point set."""

    def __init__(self, points) -> None:
        pts = as_points(points).copy()
        pts.setflags(write=False)
        self.points = pts
        self._tree: Optional[cKDTree] = cKDTree(pts) if len(pts) else None

    def __len__(self) -> int:
        return len(self.points)

    def _require(self) -> cKDTree:
        if self._tree is None:
            raise DataError("empty point set")
        return self._tree

    def query(self, queries) -> Tuple[np.ndarray, np.ndarray]:
        """
        Nearest distance and point id for every query row.

        Returns
        -------
        distances : np.ndarray, shape (m,)
        indices : np.ndarray, shape (m,)
        """
        tree = self._require()
        qs = as_points(queries, "queries")
        if len(qs) == 0:
            return np.empty(0), np.empty(0, dtype=np.int64)
        k = min(CANDIDATES, len(self.points))
        tree_dist, cand = tree.query(qs, k=k)
        if k == 1:
            tree_dist, cand = tree_dist[:, None], cand[:, None]

        exact = _euclidean(qs[:, None, :] - self.points[cand])
        # Lowest distance first, lowest index among equal distances.
        order = np.lexsort((cand, exact), axis=-1)
        rows = np.arange(len(qs))
        best = order[:, 0]
        dist = exact[rows, best]
        idx = cand[rows, best]

        # Every indexed point tied with the winner may not be among the k candidates.
        if k < len(self.points):
            bound = dist * (1.0 + TIE_SLACK) + 1e-300
            suspect = np.nonzero(tree_dist[:, -1] <= bound)[0]
            for row in suspect:
                ids = np.asarray(
                    tree.query_ball_point(qs[row], float(bound[row]) * (1.0 + TIE_SLACK) + 1e-12),
                    dtype=np.int64,
                )
                ids.sort()
                d = _euclidean(qs[row] - self.points[ids])
                j = int(np.argmin(d))
                dist[row], idx[row] = d[j], ids[j]
        return dist, idx.astype(np.int64)

    def distances(self, queries) -> np.ndarray:
        """Distance from every query row to the indexed set."""
        return self.query(queries)[0]

    def within(self, center, radius: float) -> np.ndarray:
        """Sorted ids of indexed points within ``radius`` of ``center`` (inclusive)."""
        if self._tree is None:
            return np.empty(0, dtype=np.int64)
        ids = np.asarray(self._tree.query_ball_point(np.asarray(center, dtype=np.float64), radius), dtype=np.int64)
        ids.sort()
        return ids

    def k_nearest(self, center, k: int) -> np.ndarray:
        """Ids of the ``k`` nearest indexed points, nearest first, ties by id."""
        tree = self._require()
        k = min(int(k), len(self.points))
        c = np.asarray(center, dtype=np.float64).reshape(3)
        if k >= len(self.points):
            ids = np.arange(len(self.points))
        else:
            # Widen the radius to the k-th tree distance so ties at the cutoff are seen.
            kth = tree.query(c, k=k)[0]
            kth = float(np.atleast_1d(kth)[-1])
            ids = self.within(c, kth * (1.0 + TIE_SLACK) + 1e-12)
        d = _euclidean(c - self.points[ids])
        order = np.lexsort((ids, d))
        return ids[order][:k]


def nearest(index: NNIndex, q) -> Tuple[float, int]:
    """Nearest distance and point id for a single query point."""
    dist, idx = index.query(np.asarray(q, dtype=np.float64).reshape(1, 3))
    return float(dist[0]), int(idx[0])


def point_set_distances(queries, points, backend: str = "index") -> np.ndarray:
    """``d(x, points)`` for each query row via the index or the brute-force reference."""
    if backend == "index":
        return NNIndex(points).distances(queries)
    if backend == "brute":
        return brute_force_nearest(points, queries)[0]
    raise DataError(f"unknown nearest-neighbour backend '{backend}'")


def nearest_ids(queries, points, backend: str = "index") -> Tuple[np.ndarray, np.ndarray]:
    if backend == "index":
        return NNIndex(points).query(queries)
    if backend == "brute":
        return brute_force_nearest(points, queries)
    raise DataError(f"unknown nearest-neighbour backend '{backend}'")
