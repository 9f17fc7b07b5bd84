"""
Reading and cleaning triangle meshes.

This module parses the Wavefront OBJ subset the pipeline accepts (``v``, ``vn``
and ``f`` records), prunes non-manifold and degenerate geometry, and converts
meshes to ``trimesh`` objects for sampling and export.
"""

import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import trimesh
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from c2lt3d.utils.errors import DataError, ParseError
from c2lt3d.utils.logger import get_logger

logger = get_logger(__name__)

DEGENERATE_AREA = 1e-20


@dataclass
class RawMesh:
    """Vertices, triangles and optional per-vertex normals as parsed from disk."""

    vertices: np.ndarray
    triangles: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise DataError("triangle index out of range")

    def triangle_areas(self) -> np.ndarray:
        """Area of every triangle."""
        return 0.5 * np.linalg.norm(self._cross(), axis=1)

    def vertex_normals(self) -> np.ndarray:
        """
        Area-weighted vertex normals accumulated from the triangles.

        Vertices touched by no (or only zero-area) triangles get a zero row.
        """
        # The unnormalized cross product is already weighted by twice the area.
        cross = self._cross()
        acc = np.zeros_like(self.vertices)
        for corner in range(3):
            np.add.at(acc, self.triangles[:, corner], cross)
        length = np.linalg.norm(acc, axis=1)
        out = np.zeros_like(acc)
        ok = length > 0
        out[ok] = acc[ok] / length[ok, None]
        return out

    def vertex_components(self) -> np.ndarray:
        """Connected-component label of every vertex through shared triangle edges."""
        n = len(self.vertices)
        if len(self.triangles) == 0:
            return np.arange(n, dtype=np.int64)
        t = self.triangles
        rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
        cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
        return labels.astype(np.int64)

    def to_trimesh(self) -> trimesh.Trimesh:
        return trimesh.Trimesh(
            vertices=self.vertices, faces=self.triangles, process=False, validate=False
        )

    def _cross(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])


def _resolve_index(token: str, count: int, line_no: int) -> int:
    try:
        raw = int(token)
    except ValueError:
        raise ParseError(f"malformed face index '{token}'", line_no) from None
    # OBJ indices are 1-based; negative ones count back from the last vertex.
    index = raw - 1 if raw > 0 else count + raw
    if raw == 0 or not 0 <= index < count:
        raise ParseError(f"face index {raw} out of range for {count} vertices", line_no)
    return index


def parse_obj(text: Union[str, bytes]) -> RawMesh:
    """
    Parse OBJ text into a ``RawMesh``.

    Polygons are fan-triangulated. Unknown record types are skipped.

    Parameters
    ----------
    text : str or bytes
        Contents of an OBJ file.

    Returns
    -------
    RawMesh
        Parsed mesh.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"not a text OBJ file: {e}") from e

    vertices = []
    file_normals = []
    triangles = []
    vertex_normal_ref = {}

    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        if tag in ("v", "vn"):
            if len(parts) < 4:
                raise ParseError(f"'{tag}' record needs three coordinates", line_no)
            try:
                xyz = [float(x) for x in parts[1:4]]
            except ValueError:
                raise ParseError(f"malformed '{tag}' coordinates", line_no) from None
            if not np.all(np.isfinite(xyz)):
                raise ParseError(f"non-finite '{tag}' coordinates", line_no)
            (vertices if tag == "v" else file_normals).append(xyz)
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError("face needs at least three vertices", line_no)
            corners = []
            for token in parts[1:]:
                fields = token.split("/")
                vi = _resolve_index(fields[0], len(vertices), line_no)
                if len(fields) >= 3 and fields[2]:
                    vertex_normal_ref[vi] = _resolve_index(fields[2], len(file_normals), line_no)
                corners.append(vi)
            for k in range(1, len(corners) - 1):
                triangles.append((corners[0], corners[k], corners[k + 1]))

    if not vertices:
        raise DataError("empty mesh: no vertices")

    normals = None
    if vertex_normal_ref and len(vertex_normal_ref) == len(vertices):
        table = np.asarray(file_normals, dtype=np.float64)
        normals = table[[vertex_normal_ref[i] for i in range(len(vertices))]]
    elif not vertex_normal_ref and file_normals and len(file_normals) == len(vertices):
        normals = np.asarray(file_normals, dtype=np.float64)

    mesh = RawMesh(np.asarray(vertices), np.asarray(triangles, dtype=np.int64).reshape(-1, 3), normals)
    logger.debug(f"Parsed OBJ with {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles")
    return mesh


def load_obj(path: str) -> RawMesh:
    """Read and parse an OBJ file from disk."""
    if not os.path.exists(path):
        raise DataError(f"OBJ file not found: {path}")
    with open(path, "rb") as f:
        return parse_obj(f.read())


def prune_non_manifold(mesh: RawMesh) -> RawMesh:
    """
    Drop degenerate triangles, triangles on edges shared by more than two
    triangles, and vertices no remaining triangle references.

    Meshes without triangles (bare point clouds) are returned unchanged.
    """
    if len(mesh.triangles) == 0:
        return mesh

    tris = mesh.triangles
    repeated = (tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])
    keep = ~repeated & (mesh.triangle_areas() > DEGENERATE_AREA)
    tris = tris[keep]

    if len(tris):
        edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
        unique, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
        bad_edge = (counts > 2)[inverse.reshape(-1)].reshape(3, -1)
        tris = tris[~bad_edge.any(axis=0)]

    used = np.zeros(len(mesh.vertices), dtype=bool)
    used[tris.reshape(-1)] = True
    remap = -np.ones(len(mesh.vertices), dtype=np.int64)
    remap[used] = np.arange(int(used.sum()))
    dropped = len(mesh.triangles) - len(tris)
    if dropped or not used.all():
        logger.debug(
            f"Pruned {dropped} triangles and {int((~used).sum())} isolated vertices"
        )
    if not used.any():
        raise DataError("mesh has no valid triangles after pruning")
    return RawMesh(
        mesh.vertices[used],
        remap[tris],
        None if mesh.normals is None else mesh.normals[used],
    )


def export_obj(mesh: trimesh.Trimesh, path: str) -> str:
    """Write a trimesh mesh as OBJ, creating the parent directory."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    mesh.export(path, file_type="obj")
    return path
