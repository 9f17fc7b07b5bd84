"""Percentile bootstrap over objects or tasks."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from c2lt3d.utils.errors import DataError

RESAMPLES = 5000
ALPHA = 0.05


@dataclass
class BootstrapResult:
    mean: float
    ci_low: float
    ci_high: float
    win_rate: float
    n: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "ci": [self.ci_low, self.ci_high],
            "win_rate": self.win_rate,
            "n": self.n,
        }


def bootstrap_means(values, resamples: int = RESAMPLES, seed: int = 0) -> np.ndarray:
    """Means of ``resamples`` index resamples drawn with replacement."""
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(x) == 0:
        raise DataError("nothing to bootstrap")
    if resamples < 1:
        raise DataError(f"resamples must be >= 1, got {resamples}")
    idx = np.random.default_rng(seed).integers(0, len(x), size=(int(resamples), len(x)))
    return x[idx].mean(axis=1)


def bootstrap_ci(values, resamples: int = RESAMPLES, seed: int = 0, alpha: float = ALPHA):
    """Empirical ``alpha/2`` and ``1 - alpha/2`` percentiles of the resampled means."""
    means = bootstrap_means(values, resamples, seed)
    low, high = np.percentile(means, [100.0 * alpha / 2.0, 100.0 * (1.0 - alpha / 2.0)])
    return float(low), float(high)


def paired_bootstrap(improvements: Sequence[float], resamples: int = RESAMPLES, seed: int = 0) -> BootstrapResult:
    """
    Mean improvement, its 95% percentile interval and the win rate.

    Parameters
    ----------
    improvements : sequence of float
        One paired improvement per object (or task); positive is better.
    resamples : int
        Bootstrap resamples.
    seed : int
        Resampling seed.

    Returns
    -------
    BootstrapResult
    """
    x = np.asarray(improvements, dtype=np.float64).reshape(-1)
    low, high = bootstrap_ci(x, resamples, seed)
    return BootstrapResult(
        mean=float(x.mean()),
        ci_low=low,
        ci_high=high,
        win_rate=float(np.mean(x > 0)),
        n=len(x),
    )
