"""
Normalized surface objects.

A ``SurfaceObject`` is the point-normal sample set every stage works on: points
inside ``[-1, 1]^3`` (uniformly scaled so the largest axis span is 2), unit
normals, and the ground-truth component owning each point.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import trimesh
from scipy.spatial import cKDTree

from c2lt3d.core.geometry import _euclidean, as_points
from c2lt3d.preprocessing.mesh_io import RawMesh, prune_non_manifold
from c2lt3d.utils.errors import DataError
from c2lt3d.utils.logger import get_logger

logger = get_logger(__name__)

NORMALIZED_EXTENT = 2.0
DEGENERATE_SPAN = 1e-12
PCA_NEIGHBORS = 8


@dataclass
class SurfaceObject:
    points: np.ndarray
    normals: np.ndarray
    component: np.ndarray
    extent: float = NORMALIZED_EXTENT

    def __post_init__(self) -> None:
        self.points = as_points(self.points)
        self.normals = as_points(self.normals, "normals")
        self.component = np.asarray(self.component, dtype=np.int64).reshape(-1)
        if not (len(self.points) == len(self.normals) == len(self.component)):
            raise DataError("points, normals and component labels differ in length")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_components(self) -> int:
        return int(self.component.max()) + 1 if len(self.component) else 0

    def component_ids(self, component_id: int) -> np.ndarray:
        """Sorted point ids owned by ``component_id``."""
        if not 0 <= int(component_id) < self.n_components:
            raise DataError(f"unknown component {component_id}")
        return np.flatnonzero(self.component == int(component_id))

    def supports(self) -> list:
        """Point set of every component, in component order."""
        return [self.points[self.component == k] for k in range(self.n_components)]

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "normals": self.normals.tolist(),
            "component": self.component.tolist(),
            "extent": self.extent,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurfaceObject":
        return cls(
            np.asarray(data["points"], dtype=np.float64).reshape(-1, 3),
            np.asarray(data["normals"], dtype=np.float64).reshape(-1, 3),
            data["component"],
            float(data["extent"]),
        )


def estimate_normals(points: np.ndarray, k: int = PCA_NEIGHBORS) -> np.ndarray:
    """
    Unit normals from the local covariance of the ``k`` nearest neighbours,
    oriented away from the point-set centroid.
    """
    n = len(points)
    centroid = points.mean(axis=0)
    out = np.tile([0.0, 0.0, 1.0], (n, 1))
    if n >= 3:
        _, nbrs = cKDTree(points).query(points, k=min(k, n))
        local = points[nbrs] - points[nbrs].mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", local, local)
        _, vecs = np.linalg.eigh(cov)
        out = vecs[:, :, 0]
    outward = points - centroid
    flip = np.einsum("ij,ij->i", out, outward) < 0
    out[flip] *= -1.0
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, inverse = np.unique(labels, return_inverse=True)
    return inverse.reshape(-1).astype(np.int64)


def normalize(
    geometry: Union[RawMesh, SurfaceObject, np.ndarray],
    normals: Optional[np.ndarray] = None,
    component: Optional[np.ndarray] = None,
) -> SurfaceObject:
    """
    Center on the bounding-box center and scale uniformly to a max span of 2.

    Parameters
    ----------
    geometry : RawMesh, SurfaceObject or array of shape (n, 3)
        Input geometry. Mesh vertices become the sample points.
    normals : np.ndarray, optional
        Per-point normals. Missing normals come from the mesh (area-weighted)
        or, for bare points, from local covariance.
    component : np.ndarray, optional
        Per-point component labels. Defaults to mesh connectivity, the existing
        labels of a ``SurfaceObject``, or a single component.

    Returns
    -------
    SurfaceObject
        Normalized object with contiguous component ids.
    """
    if isinstance(geometry, SurfaceObject):
        points = geometry.points
        normals = geometry.normals if normals is None else normals
        component = geometry.component if component is None else component
    elif isinstance(geometry, RawMesh):
        points = geometry.vertices
        if normals is None:
            normals = geometry.normals
        if normals is None and len(geometry.triangles):
            normals = geometry.vertex_normals()
        if component is None:
            component = geometry.vertex_components()
    else:
        points = geometry

    points = as_points(points)
    if len(points) == 0:
        raise DataError("empty geometry")
    lo, hi = points.min(axis=0), points.max(axis=0)
    span = float((hi - lo).max())
    if span <= DEGENERATE_SPAN:
        raise DataError("degenerate object")

    center = 0.5 * (lo + hi)
    scaled = (points - center) * (NORMALIZED_EXTENT / span)
    np.clip(scaled, -1.0, 1.0, out=scaled)

    if normals is None:
        normals = estimate_normals(scaled)
    else:
        normals = np.array(normals, dtype=np.float64).reshape(-1, 3)
        length = np.linalg.norm(normals, axis=1)
        missing = ~(length > 0)
        if missing.any():
            normals[missing] = estimate_normals(scaled)[missing]
            length = np.linalg.norm(normals, axis=1)
        normals = normals / length[:, None]

    if component is None:
        component = np.zeros(len(points), dtype=np.int64)
    return SurfaceObject(scaled, normals, _relabel(np.asarray(component)), NORMALIZED_EXTENT)


def sample_mesh_surface(mesh: RawMesh, count: int, seed: int = 0):
    """
    Area-weighted surface samples of a mesh with face normals and face component labels.

    Returns
    -------
    points, normals, component : np.ndarray
    """
    tm = mesh.to_trimesh()
    points, face_index = trimesh.sample.sample_surface(tm, int(count), seed=seed)
    face_labels = trimesh.graph.connected_component_labels(
        tm.face_adjacency, node_count=len(tm.faces)
    )
    return (
        np.asarray(points, dtype=np.float64),
        np.asarray(tm.face_normals[face_index], dtype=np.float64),
        np.asarray(face_labels[face_index], dtype=np.int64),
    )


def surface_from_mesh(mesh: RawMesh, count: int = 4000, seed: int = 0) -> SurfaceObject:
    """Prune, sample and normalize a mesh; bare point clouds are normalized directly."""
    mesh = prune_non_manifold(mesh)
    if len(mesh.triangles) == 0:
        return normalize(mesh)
    points, normals, component = sample_mesh_surface(mesh, count, seed)
    return normalize(points, normals, component)


def fps_sample(obj: SurfaceObject, component_id: int, k: int, seed: Optional[int] = None) -> np.ndarray:
    """
    Farthest-point anchors within one component.

    The first anchor is the component point farthest from the component
    centroid; each next anchor maximizes its distance to the chosen set. Ties go
    to the lowest point id. ``seed`` is accepted for interface stability; the
    selection itself is deterministic.

    Parameters
    ----------
    obj : SurfaceObject
        Object to sample.
    component_id : int
        Component to sample from.
    k : int
        Number of anchors. Values above the component size return every point.
    seed : int, optional
        Unused.

    Returns
    -------
    np.ndarray
        Point ids in selection order.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    ids = obj.component_ids(component_id)
    pts = obj.points[ids]
    k = min(int(k), len(ids))

    centroid = pts.mean(axis=0)
    first = int(np.argmax(_euclidean(pts - centroid)))
    chosen = [first]
    min_dist = _euclidean(pts - pts[first])
    # Chosen points never win again, even among duplicates.
    min_dist[first] = -1.0
    for _ in range(1, k):
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        np.minimum(min_dist, _euclidean(pts - pts[nxt]), out=min_dist)
        min_dist[nxt] = -1.0
    return ids[np.asarray(chosen, dtype=np.int64)]
