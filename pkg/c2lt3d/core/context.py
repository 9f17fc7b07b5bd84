"""Partition-conditioned contextualization.

Chart tokens are embedded by a fixed projection and passed through layers of
multi-head attention whose logits carry two pair biases: a scalar that depends
on whether both charts share a partition, and a small tanh network of their
relative anchor position and log scale ratio. Weights are seeded, not trained;
the backward pass is hand-derived and checked against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from c2lt3d.utils.errors import ConfigError, DataError

GEOM_INPUTS = 4
POSITION_FREQUENCIES = 4
PARTITION_EMBED = 8
GRAD_FLOOR = 1e-4


@dataclass
class ContextConfig:
    dim: int = 64
    heads: int = 4
    layers: int = 2
    same_bias: float = 0.0
    cross_bias: float = -1.0
    geom_hidden: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.heads < 1 or self.layers < 1:
            raise ConfigError("context dim, heads and layers must be positive")
        if self.dim % self.heads:
            raise ConfigError(f"context dim {self.dim} not divisible by heads {self.heads}")

    @classmethod
    def from_section(cls, section) -> "ContextConfig":
        return cls(
            dim=section.dim,
            heads=section.heads,
            layers=section.layers,
            same_bias=section.same_bias,
            cross_bias=section.cross_bias,
            geom_hidden=section.geom_hidden,
            seed=section.seed,
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def position_embedding(anchor: np.ndarray) -> np.ndarray:
    """Fixed sinusoidal embedding of an anchor in [-1, 1]^3."""
    freqs = np.pi * 2.0 ** np.arange(POSITION_FREQUENCIES)
    angles = np.outer(np.asarray(anchor, dtype=np.float64), freqs).reshape(-1)
    return np.concatenate([np.sin(angles), np.cos(angles)])


def partition_embedding(pid: int, seed: int) -> np.ndarray:
    """Fixed pseudo-random embedding of a partition id."""
    return np.random.default_rng([int(seed), int(pid)]).standard_normal(PARTITION_EMBED)


def raw_features(chart, seed: int = 0) -> np.ndarray:
    if chart.token is None:
        raise DataError(f"chart {chart.chart_id} is not tokenized")
    return np.concatenate(
        [
            chart.token.geo_values,
            chart.token.bnd_values,
            chart.pose_residual,
            [np.log(chart.scale)],
            position_embedding(chart.anchor),
            partition_embedding(chart.partition_id, seed),
        ]
    )


def projection_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """Seeded matrix with orthonormal rows (``rows <= cols``) or columns."""
    rng = np.random.default_rng([int(seed), rows, cols])
    q, _ = np.linalg.qr(rng.standard_normal((max(rows, cols), min(rows, cols))))
    return q if rows >= cols else q.T


def token_features(chart, cfg: ContextConfig) -> np.ndarray:
    """
    Project a tokenized chart to a ``cfg.dim`` vector.

    The input concatenates the dequantized geometry and boundary codes, the pose
    residual, log scale, a sinusoidal anchor embedding and a partition embedding.
    """
    raw = raw_features(chart, cfg.seed)
    return raw @ projection_matrix(len(raw), cfg.dim, cfg.seed)


class ContextModel:
    """Seeded pair-biased multi-head attention stack with an analytic backward pass."""

    def __init__(self, cfg: ContextConfig, params: Optional[Dict[str, np.ndarray]] = None) -> None:
        self.cfg = cfg
        self.head_dim = cfg.dim // cfg.heads
        self.params = params if params is not None else self._init_params()

    def _init_params(self) -> Dict[str, np.ndarray]:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        std = 1.0 / np.sqrt(cfg.dim)
        params: Dict[str, np.ndarray] = {}
        for layer in range(cfg.layers):
            for name in ("q", "k", "v", "o"):
                params[f"W{name}{layer}"] = rng.normal(0.0, std, (cfg.dim, cfg.dim))
        params["G1"] = rng.normal(0.0, 1.0 / np.sqrt(GEOM_INPUTS), (GEOM_INPUTS, cfg.geom_hidden))
        params["g1"] = np.zeros(cfg.geom_hidden)
        params["G2"] = rng.normal(0.0, 0.1 / np.sqrt(cfg.geom_hidden), (cfg.geom_hidden, cfg.heads))
        params["g2"] = np.zeros(cfg.heads)
        params["same"] = np.array([cfg.same_bias], dtype=np.float64)
        params["cross"] = np.array([cfg.cross_bias], dtype=np.float64)
        return params

    # -- flat parameter view, used by gradient checks ---------------------------------

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

    # -- forward -----------------------------------------------------------------------

    @staticmethod
    def geometry_inputs(anchors: np.ndarray, scales: np.ndarray) -> np.ndarray:
        rel = (anchors[None, :, :] - anchors[:, None, :]) / 2.0
        log_ratio = np.log(scales[:, None] / scales[None, :])
        return np.concatenate([rel, log_ratio[:, :, None]], axis=-1)

    def pair_bias(self, partitions, anchors, scales):
        """Per-head bias ``(heads, N, N)`` and the intermediates needed for backward."""
        p = self.params
        same = partitions[:, None] == partitions[None, :]
        geo_in = self.geometry_inputs(anchors, scales)
        hidden = np.tanh(geo_in @ p["G1"] + p["g1"])
        b_geom = hidden @ p["G2"] + p["g2"]
        b_part = np.where(same, p["same"][0], p["cross"][0])
        bias = b_part[None, :, :] + np.transpose(b_geom, (2, 0, 1))
        return bias, {"same": same, "geo_in": geo_in, "hidden": hidden}

    def _split(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        return x.reshape(n, self.cfg.heads, self.head_dim).transpose(1, 0, 2)

    def forward(
        self,
        tokens,
        partitions,
        anchors,
        scales,
        biased: bool = True,
    ) -> Tuple[np.ndarray, List[np.ndarray], dict]:
        """
        Run every layer.

        Returns
        -------
        outputs : np.ndarray, shape (N, dim)
        attention : list of np.ndarray, one ``(heads, N, N)`` map per layer
        cache : dict
            Intermediates for :meth:`backward`.
        """
        x = np.asarray(tokens, dtype=np.float64)
        partitions = np.asarray(partitions)
        anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 3)
        scales = np.asarray(scales, dtype=np.float64).reshape(-1)
        if x.ndim != 2 or x.shape[1] != self.cfg.dim:
            raise DataError(f"tokens must have shape (N, {self.cfg.dim}), got {x.shape}")
        n = x.shape[0]
        if n == 0:
            raise DataError("no tokens to contextualize")
        if not (len(partitions) == len(anchors) == len(scales) == n):
            raise DataError("tokens, partitions, anchors and scales differ in length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(anchors)) and np.all(np.isfinite(scales))):
            raise DataError("NaN or infinite values in attention inputs")
        if np.any(scales <= 0):
            raise DataError("chart scales must be positive")

        bias, bias_cache = self.pair_bias(partitions, anchors, scales) if biased else (None, None)
        p = self.params
        root = np.sqrt(self.head_dim)
        layers = []
        attention = []
        for layer in range(self.cfg.layers):
            q = self._split(x @ p[f"Wq{layer}"])
            k = self._split(x @ p[f"Wk{layer}"])
            v = self._split(x @ p[f"Wv{layer}"])
            logits = np.einsum("hid,hjd->hij", q, k) / root
            if biased:
                logits = logits + bias
            attn = _softmax(logits)
            heads_out = np.einsum("hij,hjd->hid", attn, v)
            concat = heads_out.transpose(1, 0, 2).reshape(n, self.cfg.dim)
            out = x + concat @ p[f"Wo{layer}"]
            layers.append({"x": x, "q": q, "k": k, "v": v, "attn": attn, "concat": concat})
            attention.append(attn)
            x = out
        cache = {"layers": layers, "bias": bias_cache, "biased": biased}
        return x, attention, cache

    # -- backward ----------------------------------------------------------------------

    def backward(self, d_out: np.ndarray, cache: dict) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        """Gradients of a scalar loss w.r.t. every parameter and the input tokens."""
        p = self.params
        cfg = self.cfg
        grads = {name: np.zeros_like(value) for name, value in p.items()}
        root = np.sqrt(self.head_dim)
        d_bias = None
        dx = np.asarray(d_out, dtype=np.float64)
        for layer in reversed(range(cfg.layers)):
            c = cache["layers"][layer]
            n = c["x"].shape[0]
            grads[f"Wo{layer}"] = c["concat"].T @ dx
            d_concat = dx @ p[f"Wo{layer}"].T
            d_heads = self._split(d_concat)
            d_attn = np.einsum("hid,hjd->hij", d_heads, c["v"])
            d_v = np.einsum("hij,hid->hjd", c["attn"], d_heads)
            attn = c["attn"]
            d_logits = attn * (d_attn - np.sum(d_attn * attn, axis=-1, keepdims=True))
            d_q = np.einsum("hij,hjd->hid", d_logits, c["k"]) / root
            d_k = np.einsum("hij,hid->hjd", d_logits, c["q"]) / root
            if cache["biased"]:
                d_bias = d_logits if d_bias is None else d_bias + d_logits

            merge = lambda t: t.transpose(1, 0, 2).reshape(n, cfg.dim)  # noqa: E731
            d_q, d_k, d_v = merge(d_q), merge(d_k), merge(d_v)
            x = c["x"]
            grads[f"Wq{layer}"] = x.T @ d_q
            grads[f"Wk{layer}"] = x.T @ d_k
            grads[f"Wv{layer}"] = x.T @ d_v
            # Residual path plus the three projections.
            dx = dx + d_q @ p[f"Wq{layer}"].T + d_k @ p[f"Wk{layer}"].T + d_v @ p[f"Wv{layer}"].T

        if d_bias is not None:
            bc = cache["bias"]
            total = d_bias.sum(axis=0)
            grads["same"][0] = total[bc["same"]].sum()
            grads["cross"][0] = total[~bc["same"]].sum()
            d_geom = np.transpose(d_bias, (1, 2, 0))
            hidden = bc["hidden"]
            grads["G2"] = np.einsum("ijk,ijh->kh", hidden, d_geom)
            grads["g2"] = d_geom.sum(axis=(0, 1))
            d_pre = (d_geom @ p["G2"].T) * (1.0 - hidden**2)
            grads["G1"] = np.einsum("ijc,ijk->ck", bc["geo_in"], d_pre)
            grads["g1"] = d_pre.sum(axis=(0, 1))
        return grads, dx

    def squared_loss(self, tokens, partitions, anchors, scales, target) -> Tuple[float, Dict[str, np.ndarray]]:
        """``0.5 * ||outputs - target||^2`` and its parameter gradients."""
        out, _, cache = self.forward(tokens, partitions, anchors, scales)
        diff = out - target
        grads, _ = self.backward(diff, cache)
        return 0.5 * float(np.sum(diff**2)), grads


def pair_biased_attention(
    tokens,
    partitions: Sequence[int],
    anchors,
    scales,
    cfg: ContextConfig,
    model: Optional[ContextModel] = None,
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Contextualize tokens with partition and geometry pair biases.

    Parameters
    ----------
    tokens : array_like, shape (N, dim)
        Token features, e.g. from :func:`token_features`.
    partitions : sequence of int
        Partition id of every token.
    anchors : array_like, shape (N, 3)
        Chart anchors.
    scales : array_like, shape (N,)
        Chart scales.
    cfg : ContextConfig
        Model configuration; weights are seeded by ``cfg.seed``.
    model : ContextModel, optional
        Reuse an existing model instead of building one from ``cfg``.

    Returns
    -------
    outputs : np.ndarray, shape (N, dim)
    attention : list of np.ndarray
        Per-layer attention maps of shape ``(heads, N, N)``; rows sum to 1.
    """
    model = model or ContextModel(cfg)
    out, attention, _ = model.forward(tokens, partitions, anchors, scales)
    return out, attention


def contextualize(charts: Sequence, cfg: ContextConfig, model: Optional[ContextModel] = None) -> np.ndarray:
    """Context tokens ``h_i`` for a list of tokenized charts."""
    if not charts:
        return np.zeros((0, cfg.dim))
    x = np.stack([token_features(c, cfg) for c in charts])
    out, _ = pair_biased_attention(
        x,
        [c.partition_id for c in charts],
        np.stack([c.anchor for c in charts]),
        np.array([c.scale for c in charts]),
        cfg,
        model,
    )
    return out


def grad_check(
    loss_and_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    theta: np.ndarray,
    h: float = 1e-4,
    n_samples: Optional[int] = None,
    seed: int = 0,
    floor: float = GRAD_FLOOR,
) -> float:
    """
    Compare an analytic gradient with central finite differences.

    Parameters
    ----------
    loss_and_grad : callable
        ``theta -> (loss, gradient)``.
    theta : np.ndarray
        Parameter vector to check at.
    h : float
        Finite-difference step.
    n_samples : int, optional
        Check a seeded random subset of coordinates instead of all of them.
    seed : int
        Seed for the coordinate subset.
    floor : float
        Lower bound on the denominator; gradients smaller than this are compared
        in absolute terms.

    Returns
    -------
    float
        Max over checked coordinates of ``|fd - an| / max(|an|, |fd|, floor)``.
    """
    theta = np.asarray(theta, dtype=np.float64).copy()
    loss, analytic = loss_and_grad(theta.copy())
    if not np.isfinite(loss):
        raise DataError("loss is not finite at the check point")
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    coords = np.arange(theta.size)
    if n_samples is not None and n_samples < theta.size:
        coords = np.sort(np.random.default_rng(seed).choice(theta.size, size=n_samples, replace=False))

    worst = 0.0
    for k in coords:
        plus, minus = theta.copy(), theta.copy()
        plus[k] += h
        minus[k] -= h
        fd = (loss_and_grad(plus)[0] - loss_and_grad(minus)[0]) / (2.0 * h)
        denom = max(abs(analytic[k]), abs(fd), floor)
        worst = max(worst, abs(fd - analytic[k]) / denom)
    return worst
