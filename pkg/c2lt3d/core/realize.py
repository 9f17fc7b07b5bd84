"""
Deterministic realization and structural audits.

Component-owned realization keeps a decoded point only while its own
partition's support is (within a margin) the nearest structural support, then
tops every partition back up to a keep floor. The assembly graph composes
relative chart poses along parent links and audits the result for collisions
between nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from c2lt3d.core.geometry import NNIndex, Pose, _euclidean, as_points, compose, point_set_distances
from c2lt3d.utils.errors import ConfigError, CycleError, DataError, DepthError, InvariantError
from c2lt3d.utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_MARGIN = 0.0
DEFAULT_KEEP_FLOOR = 0.90
FLOOR_SLACK = 1e-9
GROUND_Z = -1.0


@dataclass
class Realization:
    keep: np.ndarray
    d_own: np.ndarray
    d_other: np.ndarray

    def kept_fraction(self, owners: np.ndarray) -> Dict[int, float]:
        return {
            int(p): float(self.keep[owners == p].mean()) for p in np.unique(owners)
        }


def realize_component_owned(
    points,
    owners,
    supports: Sequence[np.ndarray],
    margin: float = DEFAULT_MARGIN,
    keep_floor: float = DEFAULT_KEEP_FLOOR,
    backend: str = "index",
) -> Realization:
    """
    Keep decoded points whose own partition support is nearest.

    Parameters
    ----------
    points : array_like, shape (n, 3)
        Decoded points.
    owners : array_like, shape (n,)
        Owning partition of each point; indexes ``supports``.
    supports : sequence of np.ndarray
        Structural support of every partition.
    margin : float
        A point is kept when ``d_own <= d_other + margin``.
    keep_floor : float
        Minimum kept fraction per partition. Missing points are restored in
        order of increasing ``d_own - d_other``.
    backend : {"index", "brute"}
        Nearest-neighbour path.

    Returns
    -------
    Realization
        Keep mask plus the two distance fields.
    """
    pts = as_points(points)
    owners = np.asarray(owners, dtype=np.int64).reshape(-1)
    if len(owners) != len(pts):
        raise DataError("points and owners differ in length")
    if not 0.0 <= keep_floor <= 1.0:
        raise ConfigError(f"keep_floor must be in [0, 1], got {keep_floor}")
    n_parts = len(supports)
    if len(owners) and (owners.min() < 0 or owners.max() >= n_parts):
        bad = owners[(owners < 0) | (owners >= n_parts)][0]
        raise DataError(f"point owned by unknown partition {bad}")
    for p, s in enumerate(supports):
        if len(s) == 0:
            raise DataError(f"partition {p} has an empty support")

    dist = np.empty((len(pts), n_parts))
    for p, s in enumerate(supports):
        dist[:, p] = point_set_distances(pts, s, backend)
    rows = np.arange(len(pts))
    d_own = dist[rows, owners]
    if n_parts > 1:
        others = dist.copy()
        others[rows, owners] = np.inf
        d_other = others.min(axis=1)
    else:
        d_other = np.full(len(pts), np.inf)

    keep = d_own <= d_other + margin
    slack = d_own - d_other
    for p in np.unique(owners):
        members = np.flatnonzero(owners == p)
        need = math.ceil(keep_floor * len(members) - FLOOR_SLACK)
        missing = need - int(keep[members].sum())
        if missing > 0:
            dropped = members[~keep[members]]
            order = np.argsort(slack[dropped], kind="stable")
            keep[dropped[order[:missing]]] = True
    return Realization(keep=keep, d_own=d_own, d_other=d_other)


@dataclass
class DecodingCandidate:
    log_p_ar: float
    compat: Sequence[float] = ()


def decoding_energy(cand: DecodingCandidate, lam: float = 1.0, eps: float = 0.05) -> float:
    """``-log p_AR + lam * sum(-log max(C, eps))`` over the candidate's seams."""
    if not eps > 0:
        raise ConfigError(f"energy floor eps must be > 0, got {eps}")
    compat = np.asarray(cand.compat, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(compat)) or not np.isfinite(cand.log_p_ar):
        raise DataError("decoding energy inputs must be finite")
    penalty = float(np.sum(-np.log(np.maximum(compat, eps))))
    return -float(cand.log_p_ar) + lam * penalty


class AssemblyGraph:
    """Charts linked by parent edges that carry relative poses."""

    def __init__(self, delta_coll: float = 0.05, r_max: float = 0.3, d_max: int = 64) -> None:
        self.delta_coll = float(delta_coll)
        self.r_max = float(r_max)
        self.d_max = int(d_max)
        self.graph = nx.DiGraph()

    def add_node(self, node: Hashable, pose: Optional[Pose] = None) -> None:
        """Add a node; ``pose`` is its global pose when it is a root."""
        self.graph.add_node(node, pose=pose or Pose.identity())

    def add_edge(self, parent: Hashable, child: Hashable, relative: Pose) -> None:
        """Link ``child`` under ``parent``; ``relative`` is the child pose in the parent frame."""
        for n in (parent, child):
            if n not in self.graph:
                self.add_node(n)
        self.graph.add_edge(parent, child, relative=relative)

    def edges(self) -> List[Tuple[Hashable, Hashable]]:
        return list(self.graph.edges)

    def check_forest(self) -> None:
        try:
            cycle = nx.find_cycle(self.graph)
        except nx.NetworkXNoCycle:
            cycle = None
        if cycle:
            raise CycleError([u for u, _ in cycle])
        for node, degree in self.graph.in_degree():
            if degree > 1:
                raise InvariantError(f"node {node} has {degree} parents")

    def depth(self) -> int:
        """Longest root path, in edges."""
        self.check_forest()
        if self.graph.number_of_edges() == 0:
            return 0
        return int(nx.dag_longest_path_length(self.graph))


def accumulate_transforms(graph: AssemblyGraph) -> Dict[Hashable, Pose]:
    """
    Global pose of every node: roots keep their own pose, every other node
    composes its parent's global pose with the edge's relative pose.

    Raises
    ------
    CycleError
        The parent links are not a forest.
    DepthError
        A root path is longer than ``graph.d_max``.
    """
    graph.check_forest()
    g = graph.graph
    poses: Dict[Hashable, Pose] = {}
    depth: Dict[Hashable, int] = {}
    for node in nx.topological_sort(g):
        parents = list(g.predecessors(node))
        if not parents:
            poses[node] = g.nodes[node]["pose"]
            depth[node] = 0
            continue
        parent = parents[0]
        depth[node] = depth[parent] + 1
        if depth[node] > graph.d_max:
            raise DepthError(f"node {node} sits at depth {depth[node]} > D_max {graph.d_max}")
        poses[node] = compose(poses[parent], g.edges[parent, node]["relative"])
    return poses


@dataclass
class CollisionReport:
    local: List[Tuple[Hashable, Hashable]] = field(default_factory=list)
    non_local: List[Tuple[Hashable, Hashable]] = field(default_factory=list)
    max_proxy: float = 0.0
    proxies: Dict[Tuple[Hashable, Hashable], float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "local_violations": len(self.local),
            "non_local_violations": len(self.non_local),
            "max_penetration": self.max_proxy,
        }


def _penetrating(points, normals, center, r_max, index: NNIndex, target_normals, band) -> np.ndarray:
    """Samples inside the other node's ball, within its band, and behind its surface."""
    d, nn = index.query(points)
    inside = (_euclidean(points - center) <= r_max) & (d < band)
    if target_normals is not None:
        inside &= np.einsum("ij,ij->i", points - index.points[nn], target_normals[nn]) <= 0.0
    return inside


def penetration_proxy(a: dict, b: dict, r_max: float, band: float) -> float:
    """Symmetric fraction of samples of each node penetrating the other."""
    fa = _penetrating(a["points"], a["normals"], b["center"], r_max, b["index"], b["normals"], band)
    fb = _penetrating(b["points"], b["normals"], a["center"], r_max, a["index"], a["normals"], band)
    return 0.5 * (float(fa.mean()) + float(fb.mean()))


def collision_audit(
    graph: AssemblyGraph,
    samples: Dict[Hashable, np.ndarray],
    normals: Optional[Dict[Hashable, np.ndarray]] = None,
    band: float = 0.02,
    groups: Optional[Dict[Hashable, int]] = None,
    poses: Optional[Dict[Hashable, Pose]] = None,
) -> CollisionReport:
    """
    Check every node pair for sample penetration after pose accumulation.

    Args:
        graph: Assembly graph; its ``delta_coll`` and ``r_max`` apply.
        samples: Node-local sample points per node.
        normals: Node-local unit normals per node, enabling the inside test.
        band: Distance below which a sample counts as touching the other node.
        groups: Optional group per node; only pairs in different groups are checked.
        poses: Precomputed global poses; accumulated from the graph when omitted.

    Returns:
        Violations split into parent-child (local) and all other (non-local) pairs.
    """
    poses = poses if poses is not None else accumulate_transforms(graph)
    world = {}
    for node, local in samples.items():
        if node not in poses or len(local) == 0:
            continue
        pose = poses[node]
        pts = pose.apply(np.asarray(local, dtype=np.float64).reshape(-1, 3))
        nrm = None
        if normals is not None and node in normals:
            nrm = np.asarray(normals[node], dtype=np.float64).reshape(-1, 3) @ pose.rotation.T
        world[node] = {
            "points": pts,
            "normals": nrm,
            "center": pose.translation,
            "radius": float(_euclidean(pts - pose.translation).max()),
            "index": NNIndex(pts),
        }

    adjacent = {frozenset(e) for e in graph.edges()}
    nodes = sorted(world)
    report = CollisionReport()
    for i, a in enumerate(nodes):
        for b in nodes[i + 1 :]:
            if groups is not None and groups.get(a) == groups.get(b):
                continue
            wa, wb = world[a], world[b]
            gap = float(_euclidean(wa["center"] - wb["center"])) - wa["radius"] - wb["radius"]
            if gap >= band:
                continue
            proxy = penetration_proxy(wa, wb, graph.r_max, band)
            report.proxies[(a, b)] = proxy
            report.max_proxy = max(report.max_proxy, proxy)
            if proxy > graph.delta_coll:
                (report.local if frozenset((a, b)) in adjacent else report.non_local).append((a, b))
    logger.debug(
        f"Collision audit: {len(report.local)} local, {len(report.non_local)} non-local violations"
    )
    return report


def support_violation(
    components: Sequence[np.ndarray],
    ground: float = GROUND_Z,
    delta: float = 0.05,
    vertical_factor: float = 2.0,
    band: float = 0.02,
) -> List[int]:
    """
    Ids of components with nothing underneath.

    Rays go straight down from the bottom band of a component, its points within
    ``band`` of its lowest point. The component is supported when that lowest
    point lies within ``delta`` of the ground plane, or when a ray finds a point
    of another component within lateral distance ``delta`` strictly below its
    origin, at most ``vertical_factor * delta`` down.
    """
    flagged: List[int] = []
    comps = [np.asarray(c, dtype=np.float64).reshape(-1, 3) for c in components]
    for k, pts in enumerate(comps):
        if len(pts) == 0:
            continue
        low = pts[:, 2].min()
        if low - ground <= delta:
            continue
        foreign = [c for j, c in enumerate(comps) if j != k and len(c)]
        supported = False
        if foreign:
            other = np.concatenate(foreign)
            tree = cKDTree(other[:, :2])
            origins = pts[pts[:, 2] <= low + band]
            for p, near in zip(origins, tree.query_ball_point(origins[:, :2], delta)):
                if not near:
                    continue
                drop = p[2] - other[near, 2]
                if np.any((drop > 0.0) & (drop <= vertical_factor * delta)):
                    supported = True
                    break
        if not supported:
            flagged.append(k)
    return flagged
