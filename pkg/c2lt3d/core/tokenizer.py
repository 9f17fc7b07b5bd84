"""Two-stream finite scalar quantization of chart features.

A fixed featurizer maps a canonical chart to a 6-D geometry vector and a 4-D
boundary vector, both inside [-1, 1]. Each vector is snapped per component to a
uniform 7-level grid; the slot levels pack into one integer code per stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np
from scipy.stats import entropy

from c2lt3d.utils.errors import DataError

LEVELS = 7
GEO_SLOTS = 6
BND_SLOTS = 4
GEO_CODEBOOK = LEVELS**GEO_SLOTS
BND_CODEBOOK = LEVELS**BND_SLOTS
BOUNDARY_SHELL = 0.8


def fsq_quantize(feature, slots: int, levels: int = LEVELS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Snap each component to the nearest of ``levels`` uniform values in [-1, 1].

    Inputs are clamped first; exact midpoints go to the lower level.

    Returns
    -------
    slot_levels : np.ndarray of int64
    values : np.ndarray of float64
        The dequantized grid values.
    """
    x = np.asarray(feature, dtype=np.float64).reshape(-1)
    if x.shape[0] != slots:
        raise DataError(f"feature has dimension {x.shape[0]}, expected {slots}")
    if levels < 2:
        raise DataError(f"levels must be >= 2, got {levels}")
    if not np.all(np.isfinite(x)):
        raise DataError("feature contains non-finite values")
    step = 2.0 / (levels - 1)
    x = np.clip(x, -1.0, 1.0)
    slot_levels = np.clip(np.ceil((x + 1.0) / step - 0.5), 0, levels - 1).astype(np.int64)
    return slot_levels, -1.0 + slot_levels * step


def dequantize(slot_levels, levels: int = LEVELS) -> np.ndarray:
    return -1.0 + np.asarray(slot_levels, dtype=np.float64) * (2.0 / (levels - 1))


def pack(slot_levels, levels: int = LEVELS) -> int:
    """Mixed-radix index of ``slot_levels``; the first slot is most significant."""
    lv = np.asarray(slot_levels, dtype=np.int64).reshape(-1)
    if np.any(lv < 0) or np.any(lv >= levels):
        raise DataError(f"slot levels must lie in [0, {levels})")
    return int(np.ravel_multi_index(tuple(lv), (levels,) * len(lv)))


def unpack(index: int, slots: int, levels: int = LEVELS) -> np.ndarray:
    if not 0 <= int(index) < levels**slots:
        raise DataError(f"code {index} outside codebook of size {levels ** slots}")
    return np.asarray(np.unravel_index(int(index), (levels,) * slots), dtype=np.int64)


@dataclass(frozen=True)
class CodeStats:
    perplexity: float
    utilization: float


def code_stats(codes: Iterable[int], codebook_size: int) -> CodeStats:
    """Perplexity (exp of natural-log entropy) and active-code fraction of a code multiset."""
    codes = np.asarray(list(codes), dtype=np.int64)
    if codes.size == 0:
        raise DataError("no codes to summarize")
    _, counts = np.unique(codes, return_counts=True)
    return CodeStats(
        perplexity=float(np.exp(entropy(counts))),
        utilization=float(len(counts) / codebook_size),
    )


def geometry_features(local_points: np.ndarray, local_normals: np.ndarray) -> np.ndarray:
    """Second-moment diagonal, mean tangential normal and mean |z| of a canonical chart."""
    second = np.mean(local_points**2, axis=0)
    mean_normal = np.mean(local_normals, axis=0)
    flatness = np.mean(np.abs(local_points[:, 2]))
    feat = np.concatenate([2.0 * second - 1.0, mean_normal[:2], [2.0 * flatness - 1.0]])
    return np.clip(feat, -1.0, 1.0)


def boundary_features(local_points: np.ndarray) -> np.ndarray:
    """Shell fraction, shell centroid direction (sin, cos) and shell anisotropy."""
    radius = np.linalg.norm(local_points, axis=1)
    shell = local_points[radius >= BOUNDARY_SHELL]
    fraction = len(shell) / max(len(local_points), 1)

    sin_t = cos_t = 0.0
    anisotropy = 0.0
    if len(shell):
        cx, cy = shell[:, 0].mean(), shell[:, 1].mean()
        norm = np.hypot(cx, cy)
        if norm > 1e-12:
            sin_t, cos_t = cy / norm, cx / norm
    if len(shell) >= 2:
        lam = np.linalg.eigvalsh(np.cov(shell[:, :2], rowvar=False, bias=True))
        if lam[-1] > 1e-15:
            anisotropy = 1.0 - max(lam[0], 0.0) / lam[-1]
    feat = np.array([2.0 * fraction - 1.0, sin_t, cos_t, 2.0 * anisotropy - 1.0])
    return np.clip(feat, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class TokenPair:
    """Quantized geometry and boundary codes of one chart."""

    geo_levels: Tuple[int, ...]
    bnd_levels: Tuple[int, ...]

    @property
    def geo_index(self) -> int:
        return pack(self.geo_levels)

    @property
    def bnd_index(self) -> int:
        return pack(self.bnd_levels)

    @property
    def geo_values(self) -> np.ndarray:
        return dequantize(self.geo_levels)

    @property
    def bnd_values(self) -> np.ndarray:
        return dequantize(self.bnd_levels)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, TokenPair)
            and tuple(self.geo_levels) == tuple(other.geo_levels)
            and tuple(self.bnd_levels) == tuple(other.bnd_levels)
        )

    def to_dict(self) -> dict:
        return {"geo": self.geo_index, "bnd": self.bnd_index}

    @classmethod
    def from_dict(cls, data: dict) -> "TokenPair":
        return cls(
            tuple(unpack(data["geo"], GEO_SLOTS).tolist()),
            tuple(unpack(data["bnd"], BND_SLOTS).tolist()),
        )


def tokenize(local_points: np.ndarray, local_normals: np.ndarray) -> TokenPair:
    """Featurize and quantize one canonical chart."""
    if len(local_points) == 0:
        raise DataError("empty chart")
    geo, _ = fsq_quantize(geometry_features(local_points, local_normals), GEO_SLOTS)
    bnd, _ = fsq_quantize(boundary_features(local_points), BND_SLOTS)
    return TokenPair(tuple(geo.tolist()), tuple(bnd.tolist()))
