"""
Latent repair benchmark.

Every valid seam from a chart to a chart of another group (component or
partition) becomes a task: detach the child chart and rank a pool of candidate
parents. Scorers see only per-candidate quantities: support distance, the
dense band-overlap verifier, or the seam head's predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from c2lt3d.core.geometry import NNIndex, _euclidean, relative_pose
from c2lt3d.core.seam import SeamCandidate, label_candidate, support_distance
from c2lt3d.utils.errors import ConfigError, DataError
from c2lt3d.utils.logger import get_logger

logger = get_logger(__name__)

POLICY_WEIGHTS = (1.0, 0.5, -0.5, -0.5)
SCORERS = ("nn", "dense-support", "seam-head", "policy")
TOP_K = (1, 3)


@dataclass
class RepairTask:
    child: int
    seams: List[SeamCandidate]
    valid: List[int]
    reference: int
    hard: bool
    heuristic_fail: bool
    object_id: str = ""
    split: str = ""

    @property
    def candidates(self) -> List[int]:
        return [s.dest for s in self.seams]

    def to_dict(self) -> dict:
        return {
            "object": self.object_id,
            "child": int(self.child),
            "candidates": [int(c) for c in self.candidates],
            "valid": [int(v) for v in self.valid],
            "reference": int(self.reference),
            "hard": bool(self.hard),
            "heuristic_fail": bool(self.heuristic_fail),
            "split": self.split,
        }


@dataclass
class RankResult:
    ranking: List[int]
    valid_at: Dict[int, float] = field(default_factory=dict)
    parent_at: Dict[int, float] = field(default_factory=dict)
    valid_rr: float = 0.0
    parent_rr: float = 0.0


def _groups(charts: Sequence, group_by: str) -> np.ndarray:
    if group_by == "component":
        return np.array([c.component_id for c in charts])
    if group_by == "partition":
        return np.array([c.partition_id for c in charts])
    raise ConfigError(f"unknown repair grouping '{group_by}'")


def _rank(scores: np.ndarray, ids: Sequence[int]) -> np.ndarray:
    """Positions sorted by descending score, ties to the lower chart id."""
    return np.lexsort((np.asarray(ids), -np.asarray(scores, dtype=np.float64)))


def build_repair_bank(
    charts: Sequence,
    supports: Sequence[np.ndarray],
    normals: Sequence[np.ndarray],
    candidates: Sequence[SeamCandidate],
    attached,
    *,
    mode: str = "edge-bank",
    pool_radius: float = 0.2,
    group_by: str = "component",
    order: Optional[Sequence[int]] = None,
    object_id: str = "",
) -> List[RepairTask]:
    """
    Repair tasks of one object.

    Parameters
    ----------
    charts, supports, normals : sequences
        Charts with their object-space support points and normals.
    candidates : sequence of SeamCandidate
        Labelled proposals; only valid cross-group ones seed tasks.
    attached : callable
        ``attached(a, b)`` for component ids, used to label pool seams.
    mode : {"edge-bank", "prefix"}
        ``prefix`` keeps only candidates serialized before the child.
    pool_radius : float
        Charts of another group whose support comes within this distance of the
        child's support join the pool.
    group_by : {"component", "partition"}
        Which grouping defines a cross-group edge.
    order : sequence of int, optional
        Serialization position of every chart, required by ``prefix`` mode.
    object_id : str
        Recorded on every task.

    Returns
    -------
    list of RepairTask
        One task per valid cross-group edge, ordered by (child, reference).
    """
    if mode not in ("edge-bank", "prefix"):
        raise ConfigError(f"unknown repair mode '{mode}'")
    if mode == "prefix" and order is None:
        raise ConfigError("prefix repair mode needs a serialization order")
    group = _groups(charts, group_by)
    labelled = {(c.source, c.dest): c for c in candidates}
    children = sorted(
        {c.source for c in candidates if c.valid and group[c.source] != group[c.dest]}
    )
    if not children:
        return []

    centers = np.stack([c.anchor for c in charts])
    radii = np.array([float(_euclidean(s - c.anchor).max()) for c, s in zip(charts, supports)])
    indexes: Dict[int, NNIndex] = {}
    tasks: List[RepairTask] = []
    for child in children:
        if child not in indexes:
            indexes[child] = NNIndex(supports[child])
        gaps = _euclidean(centers - centers[child]) - radii - radii[child]
        pool = []
        for k in np.flatnonzero((gaps < pool_radius) & (group != group[child])).tolist():
            if mode == "prefix" and order[k] >= order[child]:
                continue
            seam = labelled.get((child, k))
            if seam is None:
                d = support_distance(indexes[child], supports[k])
                if d >= pool_radius:
                    continue
                seam = SeamCandidate(
                    source=child,
                    dest=k,
                    delta=relative_pose(charts[child].pose, charts[k].pose),
                    scale_ratio=charts[child].scale / charts[k].scale,
                    distance=d,
                )
            if seam.target is None:
                label_candidate(seam, charts, supports, normals, attached)
            pool.append(seam)

        valid = [s.dest for s in pool if s.valid]
        if not valid:
            continue
        if len(pool) < 2:
            logger.debug(f"{object_id}: child {child} has a single candidate, no task")
            continue

        nn = np.array([-s.distance for s in pool])
        is_valid = np.array([bool(s.valid) for s in pool])
        hard = bool((~is_valid).any() and nn[~is_valid].max() > nn[is_valid].max())
        top = _rank(nn, [s.dest for s in pool])[0]
        heuristic_fail = not is_valid[top]
        for ref in valid:
            tasks.append(
                RepairTask(
                    child=child,
                    seams=pool,
                    valid=valid,
                    reference=ref,
                    hard=hard,
                    heuristic_fail=heuristic_fail,
                    object_id=object_id,
                )
            )
    logger.debug(f"{object_id}: {len(tasks)} repair tasks from {len(children)} children")
    return tasks


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        return (values - lo) / (hi - lo)
    return np.zeros_like(values)


def score_task(task: RepairTask, scorer: str, predictions: Optional[Dict[str, np.ndarray]] = None) -> np.ndarray:
    """
    Per-candidate scores of one task (higher is better).

    ``nn`` is the negative support distance, ``dense-support`` the band-overlap
    term of the compatibility target, ``seam-head`` the predicted compatibility,
    and ``policy`` blends the min-max normalized head compatibility, distance
    prior, collision risk and invalid risk.
    """
    if scorer == "nn":
        return np.array([-s.distance for s in task.seams])
    if scorer == "dense-support":
        return np.array([s.terms.overlap for s in task.seams])
    if scorer not in ("seam-head", "policy"):
        raise ConfigError(f"unknown repair scorer '{scorer}'")
    if predictions is None:
        raise DataError(f"scorer '{scorer}' needs seam head predictions")
    if scorer == "seam-head":
        return np.asarray(predictions["compat"], dtype=np.float64)
    w = POLICY_WEIGHTS
    dist = np.array([-s.distance for s in task.seams])
    return (
        w[0] * _minmax(np.asarray(predictions["compat"], dtype=np.float64))
        + w[1] * _minmax(dist)
        + w[2] * _minmax(np.asarray(predictions["p_coll"], dtype=np.float64))
        + w[3] * _minmax(np.asarray(predictions["p_inv"], dtype=np.float64))
    )


def repair_rank(task: RepairTask, scores) -> RankResult:
    """Rank a task's candidates and its Valid@K, Parent@K and reciprocal-rank contributions."""
    ids = task.candidates
    if len(ids) == 0:
        raise DataError("repair task has no candidates")
    if len(ids) < 2:
        raise DataError("repair task needs at least two candidates")
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(scores) != len(ids):
        raise DataError("scores and candidates differ in length")
    ranking = [ids[i] for i in _rank(scores, ids)]
    valid = set(task.valid)
    hits = [c in valid for c in ranking]
    parent = [c == task.reference for c in ranking]
    result = RankResult(ranking=ranking)
    for k in TOP_K:
        result.valid_at[k] = float(any(hits[:k]))
        result.parent_at[k] = float(any(parent[:k]))
    if any(hits):
        result.valid_rr = 1.0 / (hits.index(True) + 1)
    if any(parent):
        result.parent_rr = 1.0 / (parent.index(True) + 1)
    return result


def summarize_ranks(results: Sequence[RankResult]) -> dict:
    """Mean Valid@K, Parent@K and MRRs over tasks; ``tasks`` counts them."""
    if not results:
        return {"tasks": 0}
    out = {"tasks": len(results)}
    for k in TOP_K:
        out[f"valid@{k}"] = float(np.mean([r.valid_at[k] for r in results]))
        out[f"parent@{k}"] = float(np.mean([r.parent_at[k] for r in results]))
    out["valid_mrr"] = float(np.mean([r.valid_rr for r in results]))
    out["parent_mrr"] = float(np.mean([r.parent_rr for r in results]))
    return out
