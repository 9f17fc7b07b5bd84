"""
Structural evaluation metrics.

Every point-set metric takes a ``backend`` argument: ``"index"`` answers
nearest-neighbour queries with ``NNIndex`` and ``"brute"`` with the exhaustive
reference. The two agree bit for bit on distances.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from c2lt3d.core.geometry import _euclidean, nearest_ids, point_set_distances
from c2lt3d.utils.errors import DataError

TAU_FRACTION = 0.02
TAU_FLOOR = 1e-3
NORMAL_FLOOR = 1e-6
OVERLAP_SCALE = 0.12
BOUNDARY_SCALE = 0.15
BOUNDARY_QUANTILE = 0.9
IQ_SCALE = 0.15
BC_SCALE = 0.05
UNIT_CAP = 64
GRAPH_K = 3
FID_RIDGE = 1e-9
FEATURE_DIM = 11


def adaptive_tau(extent: float) -> float:
    """Object-adaptive threshold ``max(0.02 * extent, 1e-3)``."""
    if not extent > 0:
        raise DataError(f"extent must be > 0, got {extent}")
    return max(TAU_FRACTION * float(extent), TAU_FLOOR)


def _pts(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    return arr.reshape(-1, 3) if arr.size else np.zeros((0, 3))


def chamfer_hausdorff(a, b, backend: str = "index") -> Tuple[float, float]:
    """
    Chamfer (mean of the two directional means) and Hausdorff distance.

    Both-empty sets give ``(0, 0)``; exactly one empty set gives ``(1, 1)``.
    """
    a, b = _pts(a), _pts(b)
    if len(a) == 0 and len(b) == 0:
        return 0.0, 0.0
    if len(a) == 0 or len(b) == 0:
        return 1.0, 1.0
    ab = point_set_distances(a, b, backend)
    ba = point_set_distances(b, a, backend)
    cd = 0.5 * (float(ab.mean()) + float(ba.mean()))
    hd = max(float(ab.max()), float(ba.max()))
    return cd, hd


def separation_score(components: Sequence, tau: float, backend: str = "index") -> float:
    """
    One minus the mean symmetric fraction of points of each predicted component
    pair lying within ``tau`` of the other.

    No nonempty component gives 0; a single nonempty component gives 1.
    """
    comps = [c for c in (_pts(c) for c in components) if len(c)]
    if not comps:
        return 0.0
    if len(comps) == 1:
        return 1.0
    merged = []
    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            fi = float(np.mean(point_set_distances(comps[i], comps[j], backend) < tau))
            fj = float(np.mean(point_set_distances(comps[j], comps[i], backend) < tau))
            merged.append(0.5 * (fi + fj))
    return 1.0 - float(np.mean(merged))


def contamination_rate(predicted: Sequence, supports: Sequence, tau: float, backend: str = "index") -> float:
    """
    Fraction of predicted points that leak toward another component.

    A point predicted for component ``k`` counts when
    ``d(x, X_other) + tau < d(x, X_k)`` or when it is within ``tau`` of another
    component while farther than ``tau`` from its own.

    Parameters
    ----------
    predicted : sequence of array_like
        Predicted points per ground-truth component.
    supports : sequence of array_like
        Ground-truth support per component, nonempty.
    tau : float
        Adaptive threshold.
    backend : {"index", "brute"}

    Returns
    -------
    float
        1 with no predicted point, 0 when fewer than two components exist.
    """
    if len(predicted) != len(supports):
        raise DataError("predicted and ground-truth component counts differ")
    preds = [_pts(p) for p in predicted]
    gts = [_pts(s) for s in supports]
    total = sum(len(p) for p in preds)
    if total == 0:
        return 1.0
    if len(gts) < 2:
        return 0.0
    for k, s in enumerate(gts):
        if len(s) == 0:
            raise DataError(f"ground-truth component {k} is empty")

    flagged = 0
    for k, pts in enumerate(preds):
        if len(pts) == 0:
            continue
        d_own = point_set_distances(pts, gts[k], backend)
        d_other = np.min(
            [point_set_distances(pts, s, backend) for j, s in enumerate(gts) if j != k], axis=0
        )
        leak = (d_other + tau < d_own) | ((d_other < tau) & (d_own > tau))
        flagged += int(leak.sum())
    return flagged / total


def normal_consistency(predicted, reference) -> float:
    """Mean cosine between paired normals, norms floored at 1e-6."""
    p = np.asarray(predicted, dtype=np.float64).reshape(-1, 3)
    r = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    if len(p) != len(r):
        raise DataError("normal sets differ in length")
    if len(p) == 0:
        raise DataError("no normals to compare")
    num = np.einsum("ij,ij->i", p, r)
    den = np.maximum(_euclidean(p), NORMAL_FLOOR) * np.maximum(_euclidean(r), NORMAL_FLOOR)
    return float(np.mean(num / den))


def surface_normal_consistency(pred_points, pred_normals, ref_points, ref_normals, backend: str = "index") -> float:
    """Normal consistency with each predicted point paired to its nearest reference point."""
    pred_points = _pts(pred_points)
    if len(pred_points) == 0:
        raise DataError("no predicted points")
    _, nn = nearest_ids(pred_points, _pts(ref_points), backend)
    return normal_consistency(pred_normals, np.asarray(ref_normals, dtype=np.float64)[nn])


# -- structural features -------------------------------------------------------------


@dataclass
class StructFeatures:
    vector: np.ndarray
    iq_raw: float
    bc_raw: float
    degenerate: bool = False


def _extent(points: np.ndarray) -> float:
    return float((points.max(axis=0) - points.min(axis=0)).max())


def unit_graph(centroids: np.ndarray) -> List[Tuple[int, int]]:
    """Undirected edges of the k-NN graph over unit centroids, ``k = min(3, units - 1)``."""
    n = len(centroids)
    k = min(GRAPH_K, n - 1)
    edges = set()
    for i in range(n):
        d = _euclidean(centroids - centroids[i])
        d[i] = np.inf
        for j in np.lexsort((np.arange(n), d))[:k].tolist():
            edges.add((min(i, j), max(i, j)))
    return sorted(edges)


def _boundary(points: np.ndarray) -> np.ndarray:
    """Farthest decile of a unit's points from its centroid."""
    d = _euclidean(points - points.mean(axis=0))
    return points[d >= np.quantile(d, BOUNDARY_QUANTILE)]


def pair_terms(a: np.ndarray, b: np.ndarray, backend: str = "index") -> Tuple[float, float]:
    """Overlap ``O_ij`` and boundary clarity ``B_ij`` of two units."""
    s = max(_extent(a), _extent(b))
    if not s > 0:
        s = 1.0
    threshold = OVERLAP_SCALE * s
    overlap = 0.5 * (
        float(np.mean(point_set_distances(a, b, backend) <= threshold))
        + float(np.mean(point_set_distances(b, a, backend) <= threshold))
    )
    cd, _ = chamfer_hausdorff(_boundary(a), _boundary(b), backend)
    clarity = float(np.exp(-cd / (BOUNDARY_SCALE * s))) * (1.0 - overlap)
    return overlap, clarity


def struct_features(
    units: Sequence,
    mu_iq_ref: Optional[float] = None,
    mu_bc_ref: Optional[float] = None,
    backend: str = "index",
) -> Tuple[StructFeatures, Optional[float], Optional[float]]:
    """
    11-D structural descriptor of an object split into units.

    Parameters
    ----------
    units : sequence of array_like
        Point set of every unit (component or partition); empty units are ignored.
    mu_iq_ref, mu_bc_ref : float, optional
        Reference-set means; when given, the IQ and BC scores are returned too.
    backend : {"index", "brute"}

    Returns
    -------
    features : StructFeatures
        Half extents (3), covariance eigenvalues over their trace (3), unit count
        over 64 (1), mean unit extent and centroid spread over the object extent
        (2), then IQ_raw and BC_raw.
    iq, bc : float or None
    """
    parts = [u for u in (_pts(u) for u in units) if len(u)]
    if not parts:
        raise DataError("no nonempty units")
    points = np.concatenate(parts)
    half_extents = 0.5 * (points.max(axis=0) - points.min(axis=0))
    extent = _extent(points) or 1.0
    lam = np.sort(np.linalg.eigvalsh(np.cov(points, rowvar=False, bias=True)))[::-1]
    trace = float(lam.sum())
    lam = lam / trace if trace > 0 else np.zeros(3)
    centroids = np.stack([u.mean(axis=0) for u in parts])
    unit_extent = float(np.mean([_extent(u) for u in parts])) / extent
    spread = float(np.mean(_euclidean(centroids - centroids.mean(axis=0)))) / extent

    if len(parts) == 1:
        iq_raw, bc_raw, degenerate = 1.0, 0.0, True
    else:
        terms = [pair_terms(parts[i], parts[j], backend) for i, j in unit_graph(centroids)]
        iq_raw = 1.0 - float(np.mean([o for o, _ in terms]))
        bc_raw = float(np.mean([b for _, b in terms]))
        degenerate = False

    vector = np.concatenate(
        [half_extents, lam, [min(len(parts), UNIT_CAP) / UNIT_CAP, unit_extent, spread, iq_raw, bc_raw]]
    )
    feats = StructFeatures(vector=vector, iq_raw=iq_raw, bc_raw=bc_raw, degenerate=degenerate)
    iq, bc = quality_scores(feats, mu_iq_ref, mu_bc_ref)
    return feats, iq, bc


def quality_scores(
    feats: StructFeatures, mu_iq_ref: Optional[float], mu_bc_ref: Optional[float]
) -> Tuple[Optional[float], Optional[float]]:
    """IQ and BC of precomputed features against reference-set means."""
    iq = None if mu_iq_ref is None else float(np.exp(-abs(feats.iq_raw - mu_iq_ref) / IQ_SCALE))
    bc = None if mu_bc_ref is None else float(np.exp(-abs(feats.bc_raw - mu_bc_ref) / BC_SCALE))
    return iq, bc


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    w, v = linalg.eigh(matrix)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _gaussian(features) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(
        [f.vector if isinstance(f, StructFeatures) else f for f in features], dtype=np.float64
    )
    if x.ndim == 1:
        x = x[:, None]
    if x.size == 0:
        raise DataError("no feature vectors")
    if not np.all(np.isfinite(x)):
        raise DataError("feature vectors contain non-finite values")
    d = x.shape[1]
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1)) if len(x) > 1 else np.zeros((d, d))
    return x.mean(axis=0), cov + FID_RIDGE * np.eye(d)


def structural_fid(generated, reference) -> float:
    """
    Frechet distance between Gaussian fits of two feature sets.

    Covariances get a 1e-9 ridge; matrix square roots come from symmetric
    eigendecompositions with negative eigenvalues clamped to zero.
    """
    mu_g, cov_g = _gaussian(generated)
    mu_r, cov_r = _gaussian(reference)
    if mu_g.shape != mu_r.shape:
        raise DataError("feature dimensions differ")
    root_g = _psd_sqrt(cov_g)
    inner = root_g @ cov_r @ root_g
    inner = 0.5 * (inner + inner.T)
    w = linalg.eigvalsh(inner)
    cross = float(np.sum(np.sqrt(np.clip(w, 0.0, None))))
    diff = mu_g - mu_r
    fid = float(diff @ diff) + float(np.trace(cov_g) + np.trace(cov_r)) - 2.0 * cross
    return max(fid, 0.0)
