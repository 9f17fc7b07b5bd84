"""Canonical local charts.

A chart is the neighbourhood of an anchor point expressed in a frame whose
z-axis is the anchor normal, translated to the anchor and scaled so the
farthest neighbour sits at radius 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from c2lt3d.core.geometry import NNIndex, Pose, _euclidean, rotvec_from_matrix
from c2lt3d.core.tokenizer import TokenPair, tokenize
from c2lt3d.preprocessing.partition import Partition
from c2lt3d.preprocessing.surface import SurfaceObject, fps_sample
from c2lt3d.utils.errors import DataError
from c2lt3d.utils.logger import get_logger

logger = get_logger(__name__)

REFERENCE_AXIS = (1.0, 0.0, 0.0)
DEGENERATE_PROJECTION = 1e-3
ISOTROPY_TOL = 1e-9
SKEW_TOL = 1e-9
DEFAULT_RADIUS = 0.15
DEFAULT_MIN_NEIGHBORS = 8


def _orient(direction: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Fix the sign of a principal axis: positive skew, else positive largest component."""
    proj = points @ direction
    skew = float(np.mean((proj - proj.mean()) ** 3))
    if abs(skew) > SKEW_TOL * max(float(np.mean(proj**2)) ** 1.5, 1e-300):
        return direction if skew > 0 else -direction
    k = int(np.argmax(np.abs(direction)))
    return direction if direction[k] > 0 else -direction


def canonical_frame(normal, points, reference=REFERENCE_AXIS) -> np.ndarray:
    """
    Right-handed frame with z along ``normal``.

    The tangent x-axis is the reference projected into the tangent plane; when
    that projection is shorter than 1e-3 it is the principal direction of the
    tangent-projected points, and when the points are isotropic it is the first
    canonical axis not parallel to the normal.

    Parameters
    ----------
    normal : array_like, shape (3,)
        Unit anchor normal.
    points : array_like, shape (n, 3)
        Neighbourhood points (any origin).
    reference : array_like, shape (3,)
        Global reference direction.

    Returns
    -------
    np.ndarray, shape (3, 3)
        Columns are the x, y and z axes.
    """
    z = np.asarray(normal, dtype=np.float64).reshape(3)
    length = np.linalg.norm(z)
    if not length > 0:
        raise DataError("frame normal has zero length")
    z = z / length

    ref = np.asarray(reference, dtype=np.float64).reshape(3)
    x = ref - (ref @ z) * z
    if np.linalg.norm(x) < DEGENERATE_PROJECTION:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        flat = pts - np.outer(pts @ z, z)
        flat = flat - flat.mean(axis=0)
        lam, vecs = np.linalg.eigh(flat.T @ flat / max(len(flat), 1))
        x = None
        if lam[2] > 0 and lam[2] - lam[1] > ISOTROPY_TOL * lam[2]:
            x = _orient(vecs[:, 2], flat)
        if x is None:
            for axis in np.eye(3):
                candidate = axis - (axis @ z) * z
                if np.linalg.norm(candidate) >= DEGENERATE_PROJECTION:
                    x = candidate
                    break
    # Re-orthogonalize against the normal before completing the frame.
    x = x - (x @ z) * z
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


@dataclass
class Chart:
    chart_id: int
    anchor_id: int
    anchor: np.ndarray
    normal: np.ndarray
    scale: float
    frame: np.ndarray
    partition_id: int
    component_id: int
    neighbor_ids: np.ndarray
    local_points: np.ndarray
    local_normals: np.ndarray
    pose_residual: np.ndarray
    token: Optional[TokenPair] = None
    extra: Dict = field(default_factory=dict)

    @property
    def pose(self) -> Pose:
        return Pose(self.frame, self.anchor, self.scale)

    @property
    def support_ids(self) -> np.ndarray:
        """Anchor plus neighbours, sorted."""
        return np.union1d(self.neighbor_ids, [self.anchor_id])

    def to_dict(self) -> dict:
        out = {
            "chart_id": int(self.chart_id),
            "anchor_id": int(self.anchor_id),
            "anchor": self.anchor.tolist(),
            "normal": self.normal.tolist(),
            "scale": float(self.scale),
            "frame": self.frame.tolist(),
            "partition_id": int(self.partition_id),
            "component_id": int(self.component_id),
            "neighbor_ids": [int(i) for i in self.neighbor_ids],
            "pose_residual": self.pose_residual.tolist(),
            "token": None if self.token is None else self.token.to_dict(),
        }
        return out

    @classmethod
    def from_dict(cls, data: dict, obj: SurfaceObject) -> "Chart":
        anchor = np.asarray(data["anchor"], dtype=np.float64)
        frame = np.asarray(data["frame"], dtype=np.float64)
        scale = float(data["scale"])
        ids = np.asarray(data["neighbor_ids"], dtype=np.int64)
        local_points, local_normals = _to_local(obj, ids, anchor, frame, scale)
        return cls(
            chart_id=int(data["chart_id"]),
            anchor_id=int(data["anchor_id"]),
            anchor=anchor,
            normal=np.asarray(data["normal"], dtype=np.float64),
            scale=scale,
            frame=frame,
            partition_id=int(data["partition_id"]),
            component_id=int(data["component_id"]),
            neighbor_ids=ids,
            local_points=local_points,
            local_normals=local_normals,
            pose_residual=np.asarray(data["pose_residual"], dtype=np.float64),
            token=None if data.get("token") is None else TokenPair.from_dict(data["token"]),
        )


def _to_local(obj, ids, anchor, frame, scale):
    return (obj.points[ids] - anchor) @ frame / scale, obj.normals[ids] @ frame


def partition_centroids(obj: SurfaceObject, partition: Partition) -> np.ndarray:
    sums = np.zeros((partition.count, 3))
    np.add.at(sums, partition.assign, obj.points)
    return sums / partition.sizes()[:, None]


def _neighbors(obj, anchor_id, radius, min_neighbors, index: Optional[NNIndex], members):
    if index is None or members is None:
        members = obj.component_ids(obj.component[anchor_id])
        index = NNIndex(obj.points[members])
    center = obj.points[anchor_id]
    local = index.within(center, radius)
    ids = members[local]
    ids = ids[ids != anchor_id]
    if len(ids) < min_neighbors:
        nearest = members[index.k_nearest(center, min_neighbors + 1)]
        ids = np.union1d(ids, nearest[nearest != anchor_id][:min_neighbors])
    return np.sort(ids)


def build_chart(
    obj: SurfaceObject,
    anchor_id: int,
    radius: float = DEFAULT_RADIUS,
    partition: Optional[Partition] = None,
    *,
    min_neighbors: int = DEFAULT_MIN_NEIGHBORS,
    reference: Sequence[float] = REFERENCE_AXIS,
    chart_id: int = 0,
    centroids: Optional[np.ndarray] = None,
    index: Optional[NNIndex] = None,
    members: Optional[np.ndarray] = None,
) -> Chart:
    """
    Canonical chart around ``anchor_id``.

    Neighbours are the points of the anchor's own component within ``radius``
    (the anchor itself excluded), topped up with nearest neighbours when fewer
    than ``min_neighbors`` fall inside the ball.

    Parameters
    ----------
    obj : SurfaceObject
        Normalized object.
    anchor_id : int
        Anchor point id.
    radius : float
        Neighbourhood radius in object units.
    partition : Partition, optional
        Partition hints; defaults to the ground-truth components.
    min_neighbors : int
        Lower bound on the neighbour count.
    reference : sequence of float
        Global reference direction for the tangent axis.
    chart_id : int
        Id recorded on the chart.
    centroids : np.ndarray, optional
        Precomputed partition centroids.
    index, members : optional
        Precomputed ``NNIndex`` over the anchor component and its point ids.

    Returns
    -------
    Chart
    """
    if not 0 <= int(anchor_id) < len(obj):
        raise DataError(f"anchor {anchor_id} out of range")
    if partition is None:
        partition = Partition(obj.component)
    ids = _neighbors(obj, int(anchor_id), radius, min_neighbors, index, members)
    if len(ids) == 0:
        raise DataError("empty chart")

    anchor = obj.points[anchor_id].copy()
    offsets = obj.points[ids] - anchor
    scale = float(np.max(_euclidean(offsets)))
    if not scale > 0:
        raise DataError("empty chart")
    frame = canonical_frame(obj.normals[anchor_id], offsets, reference)
    local_points, local_normals = _to_local(obj, ids, anchor, frame, scale)

    pid = int(partition.assign[anchor_id])
    if centroids is None:
        centroids = partition_centroids(obj, partition)
    residual = np.concatenate([rotvec_from_matrix(frame), anchor - centroids[pid]])
    return Chart(
        chart_id=int(chart_id),
        anchor_id=int(anchor_id),
        anchor=anchor,
        normal=obj.normals[anchor_id].copy(),
        scale=scale,
        frame=frame,
        partition_id=pid,
        component_id=int(obj.component[anchor_id]),
        neighbor_ids=ids,
        local_points=local_points,
        local_normals=local_normals,
        pose_residual=residual,
    )


def place_back(chart: Chart, q) -> np.ndarray:
    """Map chart-local point(s) back to object space: ``a + s R q``."""
    return chart.anchor + chart.scale * (np.asarray(q, dtype=np.float64) @ chart.frame.T)


def select_anchors(
    obj: SurfaceObject, per_component: int, hints: Sequence[int] = ()
) -> List[int]:
    """FPS anchors of every component in component order, followed by unseen hint anchors."""
    anchors: List[int] = []
    for comp in range(obj.n_components):
        anchors.extend(int(i) for i in fps_sample(obj, comp, per_component))
    seen = set(anchors)
    for h in hints:
        if int(h) not in seen:
            anchors.append(int(h))
            seen.add(int(h))
    return anchors


def build_charts(
    obj: SurfaceObject,
    partition: Partition,
    anchors: Sequence[int],
    *,
    radius: float = DEFAULT_RADIUS,
    min_neighbors: int = DEFAULT_MIN_NEIGHBORS,
    reference: Sequence[float] = REFERENCE_AXIS,
    tokenized: bool = True,
) -> List[Chart]:
    """Build (and by default tokenize) one chart per anchor; anchors with no neighbours are skipped."""
    centroids = partition_centroids(obj, partition)
    indexes = {}
    charts: List[Chart] = []
    for anchor_id in anchors:
        comp = int(obj.component[anchor_id])
        if comp not in indexes:
            members = obj.component_ids(comp)
            indexes[comp] = (NNIndex(obj.points[members]), members)
        index, members = indexes[comp]
        try:
            chart = build_chart(
                obj,
                anchor_id,
                radius,
                partition,
                min_neighbors=min_neighbors,
                reference=reference,
                chart_id=len(charts),
                centroids=centroids,
                index=index,
                members=members,
            )
        except DataError as e:
            logger.debug(f"Skipping anchor {anchor_id}: {e}")
            continue
        if tokenized:
            chart.token = tokenize(chart.local_points, chart.local_normals)
        charts.append(chart)
    return charts


def chart_supports(obj: SurfaceObject, charts: Sequence[Chart]) -> List[np.ndarray]:
    """Object-space support (anchor plus neighbours) of every chart."""
    return [obj.points[c.support_ids] for c in charts]


def chart_pose(chart: Chart) -> Pose:
    """``Pose(R, a, s)`` mapping chart-local coordinates to object space."""
    return chart.pose


MORTON_BITS = 10


def morton_code(point, bits: int = MORTON_BITS) -> int:
    """Interleaved-bit code of a point in the normalized cube ``[-1, 1]^3``, x in the lowest bit."""
    top = (1 << bits) - 1
    q = np.clip(np.rint((np.asarray(point, dtype=np.float64) + 1.0) * 0.5 * top), 0, top).astype(np.int64)
    code = 0
    for bit in range(bits):
        for axis in range(3):
            code |= ((int(q[axis]) >> bit) & 1) << (3 * bit + axis)
    return code


def serialization_order(charts: Sequence[Chart]) -> List[int]:
    """Chart positions sorted partition-major, then by anchor Morton code, then by chart id."""
    return sorted(
        range(len(charts)),
        key=lambda i: (charts[i].partition_id, morton_code(charts[i].anchor), charts[i].chart_id),
    )
