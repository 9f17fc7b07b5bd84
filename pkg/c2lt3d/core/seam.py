"""
Seams between nearby charts.

Candidates are proposed from support proximity, scored against an analytic
compatibility target, and learned by a small two-layer head with four outputs:
compatibility, a 7-D pose refinement, and collision and invalid logits. The
head's gradients are derived by hand so they can be checked against finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.spatial.transform import Rotation
from scipy.stats import rankdata

from c2lt3d.core.geometry import NNIndex, Pose, _euclidean, relative_pose, rotvec_from_matrix
from c2lt3d.utils.errors import ConfigError, DataError
from c2lt3d.utils.logger import get_logger

logger = get_logger(__name__)

COMPAT_WEIGHTS = (0.35, 0.25, 0.20, 0.20)
CD_SCALE = 0.15
BAND_FRACTION = 0.1
POSITIVE_COMPAT = 0.55
NEGATIVE_COMPAT = 0.35
SEPARATION_MARGIN = 0.2
POSE_TARGET_MIN = 0.5
POSE_DIM = 7
HEAD_OUTPUTS = 1 + POSE_DIM + 1 + 1
DELTA_FEATURES = 8


@dataclass(frozen=True)
class CompatTerms:
    overlap: float
    chamfer: float
    normals: float
    occupancy: float

    @property
    def value(self) -> float:
        w = COMPAT_WEIGHTS
        blend = w[0] * self.overlap + w[1] * self.chamfer + w[2] * self.normals + w[3] * self.occupancy
        return float(np.clip(blend, 0.0, 1.0))

    def to_dict(self) -> dict:
        return {
            "overlap": self.overlap,
            "chamfer": self.chamfer,
            "normals": self.normals,
            "occupancy": self.occupancy,
        }


@dataclass
class SeamPrediction:
    compat: float
    refinement: np.ndarray
    p_coll: float
    p_inv: float


@dataclass
class SeamCandidate:
    """Directed seam ``source -> dest``; ``delta`` is the dest pose in the source frame."""

    source: int
    dest: int
    delta: Pose
    scale_ratio: float
    distance: float
    target: Optional[float] = None
    terms: Optional[CompatTerms] = None
    y_coll: int = 0
    valid: int = 0
    refinement: np.ndarray = field(default_factory=lambda: np.zeros(POSE_DIM))

    def delta_features(self) -> np.ndarray:
        """Axis-angle, translation and log scale of the coarse relative pose."""
        return np.concatenate(
            [
                rotvec_from_matrix(self.delta.rotation),
                self.delta.translation,
                [np.log(self.delta.scale)],
            ]
        )

    def to_dict(self) -> dict:
        return {
            "source": int(self.source),
            "dest": int(self.dest),
            "delta": self.delta.to_dict(),
            "scale_ratio": float(self.scale_ratio),
            "distance": float(self.distance),
            "target": None if self.target is None else float(self.target),
            "terms": None if self.terms is None else self.terms.to_dict(),
            "y_coll": int(self.y_coll),
            "valid": int(self.valid),
            "refinement": [float(v) for v in self.refinement],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SeamCandidate":
        terms = data.get("terms")
        return cls(
            source=int(data["source"]),
            dest=int(data["dest"]),
            delta=Pose.from_dict(data["delta"]),
            scale_ratio=float(data["scale_ratio"]),
            distance=float(data["distance"]),
            target=data.get("target"),
            terms=None if terms is None else CompatTerms(**terms),
            y_coll=int(data.get("y_coll", 0)),
            valid=int(data.get("valid", 0)),
            refinement=np.asarray(data.get("refinement", [0.0] * POSE_DIM), dtype=np.float64),
        )


# -- proposal ----------------------------------------------------------------------


def support_distance(index_a: NNIndex, points_b: np.ndarray) -> float:
    return float(index_a.distances(points_b).min())


def propose_candidates(charts: Sequence, supports: Sequence[np.ndarray], eps_contact: float) -> List[SeamCandidate]:
    """
    Seam candidates between every pair of charts whose supports come closer
    than ``eps_contact``.

    Parameters
    ----------
    charts : sequence of Chart
        Charts of one object, indexed by position.
    supports : sequence of np.ndarray
        Object-space support points of each chart.
    eps_contact : float
        Proposal distance, strictly positive.

    Returns
    -------
    list of SeamCandidate
        Both directions of every qualifying pair, sorted by (source, dest).
    """
    if not eps_contact > 0:
        raise ConfigError(f"eps_contact must be > 0, got {eps_contact}")
    n = len(charts)
    if len(supports) != n:
        raise DataError("charts and supports differ in length")
    if n < 2:
        return []

    # Bounding spheres around each anchor prune most pairs before any exact query.
    centers = np.stack([c.anchor for c in charts])
    radii = np.array([float(_euclidean(s - c.anchor).max()) for c, s in zip(charts, supports)])
    gaps = _euclidean(centers[:, None, :] - centers[None, :, :]) - radii[:, None] - radii[None, :]

    indexes: Dict[int, NNIndex] = {}
    out: List[SeamCandidate] = []
    for i in range(n):
        for j in np.flatnonzero(gaps[i, i + 1 :] < eps_contact) + i + 1:
            j = int(j)
            if j not in indexes:
                indexes[j] = NNIndex(supports[j])
            d = support_distance(indexes[j], supports[i])
            if d >= eps_contact:
                continue
            for a, b in ((i, j), (j, i)):
                out.append(
                    SeamCandidate(
                        source=a,
                        dest=b,
                        delta=relative_pose(charts[a].pose, charts[b].pose),
                        scale_ratio=charts[a].scale / charts[b].scale,
                        distance=d,
                    )
                )
    out.sort(key=lambda c: (c.source, c.dest))
    logger.debug(f"Proposed {len(out)} seam candidates over {n} charts")
    return out


# -- compatibility target ----------------------------------------------------------


def _masked_mean(values: np.ndarray, mask: np.ndarray) -> float:
    return float(values[mask].mean()) if mask.any() else 0.0


def compat_terms(
    points_i,
    normals_i,
    points_j,
    normals_j,
    anchor_i,
    anchor_j,
    scale_i: float,
    scale_j: float,
    tau_band: Optional[float] = None,
) -> CompatTerms:
    """
    The four terms of the compatibility target between two chart supports.

    The contact zone of support ``i`` is its points within ``scale_j + tau_band`` of
    anchor ``j`` (and vice versa). ``overlap`` is the mean fraction of zone points
    lying within ``tau_band`` of the other support; ``chamfer`` maps the
    bidirectional Chamfer distance between the zones through
    ``exp(-d / (0.15 * s_min))``; ``normals`` averages ``(1 + cos) / 2`` over nearest
    pairs; ``occupancy`` is the fraction of zone points whose band membership
    agrees with that of their nearest partner. Every term is symmetric in
    ``i`` and ``j``.
    """
    points_i = np.asarray(points_i, dtype=np.float64).reshape(-1, 3)
    points_j = np.asarray(points_j, dtype=np.float64).reshape(-1, 3)
    if len(points_i) == 0 or len(points_j) == 0:
        raise DataError("empty support")
    normals_i = np.asarray(normals_i, dtype=np.float64).reshape(-1, 3)
    normals_j = np.asarray(normals_j, dtype=np.float64).reshape(-1, 3)
    s_min = min(float(scale_i), float(scale_j))
    tau = BAND_FRACTION * s_min if tau_band is None else float(tau_band)

    d_ij, nn_ij = NNIndex(points_j).query(points_i)
    d_ji, nn_ji = NNIndex(points_i).query(points_j)
    band_i = d_ij <= tau
    band_j = d_ji <= tau
    zone_i = _euclidean(points_i - np.asarray(anchor_j)) <= float(scale_j) + tau
    zone_j = _euclidean(points_j - np.asarray(anchor_i)) <= float(scale_i) + tau

    overlap = 0.5 * (_masked_mean(band_i.astype(float), zone_i) + _masked_mean(band_j.astype(float), zone_j))

    # Terms below fall back to the whole support when a zone is empty.
    use_i = zone_i if zone_i.any() and zone_j.any() else np.ones(len(points_i), dtype=bool)
    use_j = zone_j if zone_i.any() and zone_j.any() else np.ones(len(points_j), dtype=bool)
    zi, zj = points_i[use_i], points_j[use_j]
    chamfer_d = 0.5 * (NNIndex(zj).distances(zi).mean() + NNIndex(zi).distances(zj).mean())
    chamfer = float(np.exp(-chamfer_d / (CD_SCALE * s_min)))

    cos_i = np.clip(np.einsum("ij,ij->i", normals_i, normals_j[nn_ij]), -1.0, 1.0)
    cos_j = np.clip(np.einsum("ij,ij->i", normals_j, normals_i[nn_ji]), -1.0, 1.0)
    normal_term = 0.5 * (
        _masked_mean(0.5 * (1.0 + cos_i), use_i) + _masked_mean(0.5 * (1.0 + cos_j), use_j)
    )

    agree_i = (band_i == band_j[nn_ij]).astype(float)
    agree_j = (band_j == band_i[nn_ji]).astype(float)
    occupancy = 0.5 * (_masked_mean(agree_i, use_i) + _masked_mean(agree_j, use_j))
    return CompatTerms(float(overlap), chamfer, float(normal_term), float(occupancy))


def compat_target(
    cand: SeamCandidate,
    charts: Sequence,
    supports: Sequence[np.ndarray],
    normals: Sequence[np.ndarray],
    tau_band: Optional[float] = None,
) -> float:
    """Compatibility target ``C*`` of a candidate, in [0, 1]."""
    return _terms_for(cand, charts, supports, normals, tau_band).value


def _terms_for(cand, charts, supports, normals, tau_band=None) -> CompatTerms:
    ci, cj = charts[cand.source], charts[cand.dest]
    return compat_terms(
        supports[cand.source],
        normals[cand.source],
        supports[cand.dest],
        normals[cand.dest],
        ci.anchor,
        cj.anchor,
        ci.scale,
        cj.scale,
        tau_band,
    )


def refinement_target(cand: SeamCandidate, charts: Sequence, supports: Sequence[np.ndarray]) -> np.ndarray:
    """
    One-step point-to-point rigid fit of the dest support onto the source support,
    expressed in the source chart frame: axis-angle, translation over the source
    scale, and a zero log-scale.
    """
    src = charts[cand.source]
    x = supports[cand.source]
    y = supports[cand.dest]
    _, nn = NNIndex(x).query(y)
    target = x[nn]
    cy, cx = y.mean(axis=0), target.mean(axis=0)
    if len(y) >= 3 and np.linalg.matrix_rank(y - cy) >= 2:
        rot, _ = Rotation.align_vectors(target - cx, y - cy)
        rotation = rot.as_matrix()
    else:
        rotation = np.eye(3)
    translation = cx - rotation @ cy
    frame = src.frame
    local_rotation = frame.T @ rotation @ frame
    local_translation = frame.T @ translation / src.scale
    return np.concatenate([rotvec_from_matrix(local_rotation), local_translation, [0.0]])


class Attachments:
    """Undirected attachment relation between components."""

    def __init__(self, pairs=()) -> None:
        self.pairs = {frozenset((int(a), int(b))) for a, b in pairs if int(a) != int(b)}

    def __call__(self, a: int, b: int) -> bool:
        return int(a) == int(b) or frozenset((int(a), int(b))) in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_contacts(cls, component_points: Sequence[np.ndarray], eps_contact: float) -> "Attachments":
        """
        BFS tree of the component contact graph rooted at the lowest component.

        Two components are in contact when their supports come closer than
        ``eps_contact``; components unreachable from the root start new trees at
        their own lowest member.
        """
        k = len(component_points)
        graph = nx.Graph()
        graph.add_nodes_from(range(k))
        indexes = [NNIndex(p) for p in component_points]
        for a in range(k):
            for b in range(a + 1, k):
                if support_distance(indexes[a], component_points[b]) < eps_contact:
                    graph.add_edge(a, b)
        lowest = np.argsort([p[:, 2].min() for p in component_points], kind="stable")
        pairs = []
        seen = set()
        for root in lowest.tolist():
            if root in seen:
                continue
            tree = nx.bfs_tree(graph, root, sort_neighbors=sorted)
            seen.update(tree.nodes)
            pairs.extend(tree.edges)
        return cls(pairs)


def _apply_labels(cand, terms, charts, supports, attached, tau_band) -> SeamCandidate:
    ci, cj = charts[cand.source], charts[cand.dest]
    cand.terms = terms
    cand.target = terms.value
    joined = ci.component_id == cj.component_id or bool(attached(ci.component_id, cj.component_id))
    tau = BAND_FRACTION * min(ci.scale, cj.scale) if tau_band is None else tau_band
    cand.valid = int(joined and cand.target >= POSITIVE_COMPAT)
    cand.y_coll = int(not joined and cand.distance < tau)
    if cand.target >= POSE_TARGET_MIN:
        cand.refinement = refinement_target(cand, charts, supports)
    return cand


def label_candidate(
    cand: SeamCandidate,
    charts: Sequence,
    supports: Sequence[np.ndarray],
    normals: Sequence[np.ndarray],
    attached,
    tau_band: Optional[float] = None,
) -> SeamCandidate:
    """
    Fill the target, labels and refinement target of ``cand`` in place.

    ``attached(a, b)`` says whether components ``a`` and ``b`` are joined in the
    attachment forest; a component is always attached to itself.
    """
    terms = _terms_for(cand, charts, supports, normals, tau_band)
    return _apply_labels(cand, terms, charts, supports, attached, tau_band)


def label_candidates(
    candidates: Sequence[SeamCandidate],
    charts: Sequence,
    supports: Sequence[np.ndarray],
    normals: Sequence[np.ndarray],
    attached,
    tau_band: Optional[float] = None,
) -> List[SeamCandidate]:
    """Label every candidate; the symmetric terms are computed once per unordered pair."""
    cache: Dict[frozenset, CompatTerms] = {}
    for cand in candidates:
        key = frozenset((cand.source, cand.dest))
        if key not in cache:
            cache[key] = _terms_for(cand, charts, supports, normals, tau_band)
        _apply_labels(cand, cache[key], charts, supports, attached, tau_band)
    return list(candidates)


def split_by_partition(
    candidates: Sequence[SeamCandidate], chart_partition: Sequence[int]
) -> Tuple[List[float], List[float]]:
    """Targets of labelled candidates inside one partition and across two."""
    part = np.asarray(chart_partition)
    intra: List[float] = []
    inter: List[float] = []
    for c in candidates:
        if c.target is None:
            continue
        (intra if part[c.source] == part[c.dest] else inter).append(float(c.target))
    return intra, inter


def partition_compat_gap(
    candidates: Sequence[SeamCandidate], chart_partition: Sequence[int]
) -> Optional[float]:
    """Mean intra-partition ``C*`` minus mean inter-partition ``C*``; None if either side is empty."""
    intra, inter = split_by_partition(candidates, chart_partition)
    if not intra or not inter:
        return None
    return float(np.mean(intra) - np.mean(inter))


# -- seam head ---------------------------------------------------------------------


def seam_inputs(h_i, h_j, delta: Pose, scale_ratio: float) -> np.ndarray:
    """Input vector ``[h_i, h_j, rotvec, translation, log scale, log s_i/s_j]``."""
    if not scale_ratio > 0:
        raise DataError(f"scale ratio must be positive, got {scale_ratio}")
    return np.concatenate(
        [
            np.asarray(h_i, dtype=np.float64).reshape(-1),
            np.asarray(h_j, dtype=np.float64).reshape(-1),
            rotvec_from_matrix(delta.rotation),
            delta.translation,
            [np.log(delta.scale), np.log(scale_ratio)],
        ]
    )


def candidate_inputs(candidates: Sequence[SeamCandidate], tokens: np.ndarray) -> np.ndarray:
    """Stacked head inputs for candidates whose charts index rows of ``tokens``."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if not candidates:
        return np.zeros((0, 2 * tokens.shape[1] + DELTA_FEATURES))
    return np.stack([seam_inputs(tokens[c.source], tokens[c.dest], c.delta, c.scale_ratio) for c in candidates])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LossWeights:
    compat: float = 1.0
    pose: float = 0.05
    coll: float = 0.05
    sep: float = 0.05
    inv: float = 0.05

    @classmethod
    def from_config(cls, section) -> "LossWeights":
        return cls(
            section.lambda_compat,
            section.lambda_pose,
            section.lambda_coll,
            section.lambda_sep,
            section.lambda_inv,
        )


@dataclass
class SeamBatch:
    """Training labels aligned with the rows of an input matrix."""

    target: np.ndarray
    refinement: np.ndarray
    y_coll: np.ndarray
    valid: np.ndarray

    @classmethod
    def from_candidates(cls, candidates: Sequence[SeamCandidate]) -> "SeamBatch":
        if any(c.target is None for c in candidates):
            raise DataError("seam candidates must be labelled before training")
        return cls(
            target=np.array([c.target for c in candidates], dtype=np.float64),
            refinement=np.stack([c.refinement for c in candidates]).astype(np.float64)
            if candidates
            else np.zeros((0, POSE_DIM)),
            y_coll=np.array([c.y_coll for c in candidates], dtype=np.float64),
            valid=np.array([c.valid for c in candidates], dtype=np.float64),
        )


class SeamHead:
    """
    Two-layer tanh perceptron over seam inputs.

    Output columns: compatibility logit, 7 pose-refinement values, collision
    logit, invalid logit. Inputs are standardized with stored statistics before
    the first layer.
    """

    def __init__(
        self,
        input_dim: int,
        hidden: int = 32,
        seed: int = 0,
        params: Optional[Dict[str, np.ndarray]] = None,
    ) -> None:
        if input_dim < 1 or hidden < 1:
            raise ConfigError("seam head input and hidden sizes must be positive")
        self.input_dim = int(input_dim)
        self.hidden = int(hidden)
        if params is None:
            rng = np.random.default_rng(seed)
            params = {
                "W1": rng.normal(0.0, 1.0 / np.sqrt(input_dim), (input_dim, hidden)),
                "b1": np.zeros(hidden),
                "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, HEAD_OUTPUTS)),
                "b2": np.zeros(HEAD_OUTPUTS),
            }
        self.params = params
        self.mean = np.zeros(input_dim)
        self.std = np.ones(input_dim)

    @classmethod
    def zeros(cls, input_dim: int, hidden: int = 32) -> "SeamHead":
        params = {
            "W1": np.zeros((input_dim, hidden)),
            "b1": np.zeros(hidden),
            "W2": np.zeros((hidden, HEAD_OUTPUTS)),
            "b2": np.zeros(HEAD_OUTPUTS),
        }
        return cls(input_dim, hidden, params=params)

    def names(self) -> List[str]:
        return sorted(self.params)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in self.names()])

    def set_flat(self, theta: np.ndarray) -> None:
        offset = 0
        for n in self.names():
            size = self.params[n].size
            self.params[n] = np.asarray(theta[offset : offset + size], dtype=np.float64).reshape(
                self.params[n].shape
            )
            offset += size

    def flatten(self, grads: Dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[n].ravel() for n in self.names()])

    def fit_standardization(self, inputs: np.ndarray) -> None:
        self.mean = inputs.mean(axis=0)
        std = inputs.std(axis=0)
        self.std = np.where(std > 1e-12, std, 1.0)

    def _check(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DataError(f"seam head expects inputs of width {self.input_dim}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("seam head inputs contain non-finite values")
        return x

    def forward(self, inputs) -> Tuple[np.ndarray, dict]:
        """Raw output matrix ``(N, 10)`` and the cache for :meth:`backward`."""
        x = (self._check(inputs) - self.mean) / self.std
        p = self.params
        hidden = np.tanh(x @ p["W1"] + p["b1"])
        out = hidden @ p["W2"] + p["b2"]
        return out, {"x": x, "hidden": hidden}

    def backward(self, d_out: np.ndarray, cache: dict) -> Dict[str, np.ndarray]:
        p = self.params
        hidden = cache["hidden"]
        d_pre = (d_out @ p["W2"].T) * (1.0 - hidden**2)
        return {
            "W2": hidden.T @ d_out,
            "b2": d_out.sum(axis=0),
            "W1": cache["x"].T @ d_pre,
            "b1": d_pre.sum(axis=0),
        }

    def predict(self, inputs) -> Dict[str, np.ndarray]:
        out, _ = self.forward(inputs)
        return {
            "compat": _sigmoid(out[:, 0]),
            "refinement": out[:, 1 : 1 + POSE_DIM],
            "p_coll": _sigmoid(out[:, 1 + POSE_DIM]),
            "p_inv": _sigmoid(out[:, 2 + POSE_DIM]),
        }

    def loss(self, inputs, batch: SeamBatch, weights: LossWeights) -> Tuple[float, Dict[str, np.ndarray]]:
        """
        Weighted seam loss and its parameter gradients.

        Terms: compatibility MSE, pose MSE on rows with ``C* >= 0.5``, collision
        and invalid BCE on the logits, and a hinge keeping the mean positive
        compatibility 0.2 above the mean negative one.
        """
        out, cache = self.forward(inputs)
        n = out.shape[0]
        if n == 0:
            raise DataError("empty seam batch")
        d_out = np.zeros_like(out)

        compat = _sigmoid(out[:, 0])
        diff = compat - batch.target
        total = weights.compat * float(np.mean(diff**2))
        d_compat = weights.compat * 2.0 * diff / n

        pos = batch.target >= POSITIVE_COMPAT
        neg = batch.target <= NEGATIVE_COMPAT
        if pos.any() and neg.any():
            gap = compat[pos].mean() - compat[neg].mean()
            hinge = SEPARATION_MARGIN - gap
            if hinge > 0:
                total += weights.sep * float(hinge)
                d_compat = d_compat - weights.sep * pos / pos.sum() + weights.sep * neg / neg.sum()
        d_out[:, 0] = d_compat * compat * (1.0 - compat)

        mask = batch.target >= POSE_TARGET_MIN
        if mask.any():
            pose_diff = out[mask, 1 : 1 + POSE_DIM] - batch.refinement[mask]
            m = int(mask.sum())
            total += weights.pose * float(np.sum(pose_diff**2)) / (m * POSE_DIM)
            d_out[mask, 1 : 1 + POSE_DIM] = weights.pose * 2.0 * pose_diff / (m * POSE_DIM)

        for col, labels, lam in (
            (1 + POSE_DIM, batch.y_coll, weights.coll),
            (2 + POSE_DIM, 1.0 - batch.valid, weights.inv),
        ):
            z = out[:, col]
            total += lam * float(np.mean(np.logaddexp(0.0, z) - labels * z))
            d_out[:, col] = lam * (_sigmoid(z) - labels) / n

        return total, self.backward(d_out, cache)


def seam_forward(head: SeamHead, h_i, h_j, delta: Pose, scale_ratio: float) -> SeamPrediction:
    """Prediction for one directed seam."""
    pred = head.predict(seam_inputs(h_i, h_j, delta, scale_ratio))
    return SeamPrediction(
        compat=float(pred["compat"][0]),
        refinement=pred["refinement"][0].copy(),
        p_coll=float(pred["p_coll"][0]),
        p_inv=float(pred["p_inv"][0]),
    )


def train_seam_head(
    head: SeamHead,
    inputs: np.ndarray,
    batch: SeamBatch,
    weights: LossWeights,
    lr: float = 0.5,
    epochs: int = 400,
) -> Tuple[SeamHead, List[float]]:
    """
    Full-batch gradient descent on the seam loss.

    Args:
        head: Head to train in place.
        inputs: Input matrix, one row per candidate.
        batch: Labels aligned with ``inputs``.
        weights: Loss weights.
        lr: Step size.
        epochs: Number of gradient steps.

    Returns:
        The trained head and the loss trace (one value per step plus the final loss).
    """
    inputs = head._check(inputs)
    if not (batch.target >= POSITIVE_COMPAT).any() or not (batch.target <= NEGATIVE_COMPAT).any():
        raise DataError(
            f"seam training needs candidates with C* >= {POSITIVE_COMPAT} and C* <= {NEGATIVE_COMPAT}"
        )
    if lr <= 0 or epochs < 0:
        raise ConfigError("seam learning rate must be > 0 and epochs >= 0")
    head.fit_standardization(inputs)
    trace: List[float] = []
    for _ in range(int(epochs)):
        loss, grads = head.loss(inputs, batch, weights)
        trace.append(loss)
        for name, g in grads.items():
            head.params[name] = head.params[name] - lr * g
    trace.append(head.loss(inputs, batch, weights)[0])
    logger.debug(f"Seam head loss {trace[0]:.4f} -> {trace[-1]:.4f} over {epochs} steps")
    return head, trace


# -- seam metrics ------------------------------------------------------------------


@dataclass
class SeamMetrics:
    auc: Optional[float]
    ap: Optional[float]
    brier: Optional[float]
    top1_precision: Optional[float]
    top3_recall: Optional[float]

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "ap": self.ap,
            "collision_brier": self.brier,
            "top1_precision": self.top1_precision,
            "top3_recall": self.top3_recall,
        }


def roc_auc(scores, labels) -> Optional[float]:
    """Rank-statistic AUC with tied scores sharing their average rank; None for one class."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels) -> Optional[float]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if not labels.any():
        return None
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits].mean())


def seam_metrics(scores, valid, coll_probs=None, coll_labels=None, sources=None) -> SeamMetrics:
    """
    Seam discrimination summary.

    Parameters
    ----------
    scores : array_like
        Predicted compatibility per candidate.
    valid : array_like
        Validity labels.
    coll_probs, coll_labels : array_like, optional
        Collision probabilities and labels for the Brier score.
    sources : array_like, optional
        Source chart of each candidate; Top-1 precision and Top-3 recall are
        averaged over sources.

    Returns
    -------
    SeamMetrics
        Undefined entries are None.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    valid = np.asarray(valid).astype(bool).reshape(-1)
    if len(scores) == 0:
        raise DataError("no labelled seam candidates")
    if len(valid) != len(scores):
        raise DataError("scores and labels differ in length")

    brier = None
    if coll_probs is not None and coll_labels is not None:
        p = np.asarray(coll_probs, dtype=np.float64)
        y = np.asarray(coll_labels, dtype=np.float64)
        brier = float(np.mean((p - y) ** 2))

    top1 = top3 = None
    if sources is not None:
        sources = np.asarray(sources)
        precisions, recalls = [], []
        for s in np.unique(sources):
            rows = np.flatnonzero(sources == s)
            ranked = rows[np.argsort(-scores[rows], kind="stable")]
            precisions.append(float(valid[ranked[0]]))
            n_valid = int(valid[rows].sum())
            if n_valid:
                recalls.append(float(valid[ranked[:3]].sum()) / n_valid)
        top1 = float(np.mean(precisions))
        top3 = float(np.mean(recalls)) if recalls else None

    return SeamMetrics(
        auc=roc_auc(scores, valid),
        ap=average_precision(scores, valid),
        brier=brier,
        top1_precision=top1,
        top3_recall=top3,
    )
