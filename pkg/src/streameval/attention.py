"""Scaled dot-product attention and a minimal pre-norm transformer layer.

Tokens are rows: scores[i, j] = <Q_i, K_j> / sqrt(d). Softmax uses
max-subtraction so large logits stay finite. The layer is
X + MHA(LN(X)) followed by + MLP(LN(.)), with channels split evenly
across heads and a ReLU two-layer MLP; no positional encoding, masking,
or dropout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class ProjectionSet:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    b_q: np.ndarray | None = None
    b_k: np.ndarray | None = None
    b_v: np.ndarray | None = None

    def __post_init__(self):
        d = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v"):
            m = getattr(self, name)
            if m.shape != (d, d):
                raise InputError(f"{name} must be square {d}x{d}, got {m.shape}")
        for name in ("b_q", "b_k", "b_v"):
            b = getattr(self, name)
            if b is not None and b.shape != (d,):
                raise InputError(f"{name} must have shape ({d},), got {b.shape}")

    @classmethod
    def identity(cls, d: int) -> "ProjectionSet":
        eye = np.eye(d)
        return cls(eye, eye.copy(), eye.copy())

    @classmethod
    def random(cls, d: int, seed: int, scale: float = 0.2) -> "ProjectionSet":
        rng = np.random.default_rng(seed)
        return cls(
            rng.standard_normal((d, d)) * scale,
            rng.standard_normal((d, d)) * scale,
            rng.standard_normal((d, d)) * scale,
            rng.standard_normal(d) * scale,
            rng.standard_normal(d) * scale,
            rng.standard_normal(d) * scale,
        )


@dataclass(frozen=True)
class LayerConfig:
    heads: int = 4
    mlp_hidden: int | None = None  # defaults to 4*d at weight construction
    layernorm_epsilon: float = 1e-5

    def __post_init__(self):
        if self.heads < 1:
            raise InputError(f"heads must be >= 1, got {self.heads}")
        if self.layernorm_epsilon <= 0:
            raise InputError("layernorm epsilon must be positive")


def project(x: np.ndarray, p: ProjectionSet):
    """Q = X W_q (+ b), likewise K and V."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.w_q.shape[0]:
        raise InputError(f"token matrix shape {x.shape} does not match d={p.w_q.shape[0]}")
    q = x @ p.w_q
    k = x @ p.w_k
    v = x @ p.w_v
    if p.b_q is not None:
        q = q + p.b_q
    if p.b_k is not None:
        k = k + p.b_k
    if p.b_v is not None:
        v = v + p.b_v
    return q, k, v


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - np.max(scores, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def attention_weights(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Row-stochastic attention matrix softmax(Q K^T / sqrt(d))."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1]:
        raise InputError(f"incompatible Q {q.shape} and K {k.shape}")
    d = q.shape[1]
    return _softmax_rows(q @ k.T / np.sqrt(d))


def scaled_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != np.asarray(k).shape[0]:
        raise InputError(f"K has {np.asarray(k).shape[0]} rows but V has {v.shape[0]}")
    if v.ndim != 2 or v.shape[1] != np.asarray(q).shape[1]:
        raise InputError("Q, K, V must share the channel dimension")
    return attention_weights(q, k) @ v


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float) -> np.ndarray:
    mean = np.mean(x, axis=1, keepdims=True)
    var = np.mean((x - mean) ** 2, axis=1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


@dataclass(frozen=True)
class TransformerLayerWeights:
    proj: ProjectionSet
    w_out: np.ndarray
    b_out: np.ndarray
    w_mlp1: np.ndarray
    b_mlp1: np.ndarray
    w_mlp2: np.ndarray
    b_mlp2: np.ndarray
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray

    @classmethod
    def zeros(cls, d: int, cfg: LayerConfig) -> "TransformerLayerWeights":
        """All linear maps zero, layer norms at identity: the layer becomes
        the identity function via its residual paths."""
        hidden = cfg.mlp_hidden if cfg.mlp_hidden is not None else 4 * d
        z = np.zeros((d, d))
        return cls(
            proj=ProjectionSet(z, z.copy(), z.copy()),
            w_out=np.zeros((d, d)),
            b_out=np.zeros(d),
            w_mlp1=np.zeros((d, hidden)),
            b_mlp1=np.zeros(hidden),
            w_mlp2=np.zeros((hidden, d)),
            b_mlp2=np.zeros(d),
            ln1_gamma=np.ones(d),
            ln1_beta=np.zeros(d),
            ln2_gamma=np.ones(d),
            ln2_beta=np.zeros(d),
        )

    @classmethod
    def random(cls, d: int, cfg: LayerConfig, seed: int, scale: float = 0.2) -> "TransformerLayerWeights":
        hidden = cfg.mlp_hidden if cfg.mlp_hidden is not None else 4 * d
        rng = np.random.default_rng(seed)
        return cls(
            proj=ProjectionSet(
                rng.standard_normal((d, d)) * scale,
                rng.standard_normal((d, d)) * scale,
                rng.standard_normal((d, d)) * scale,
            ),
            w_out=rng.standard_normal((d, d)) * scale,
            b_out=rng.standard_normal(d) * scale,
            w_mlp1=rng.standard_normal((d, hidden)) * scale,
            b_mlp1=rng.standard_normal(hidden) * scale,
            w_mlp2=rng.standard_normal((hidden, d)) * scale,
            b_mlp2=rng.standard_normal(d) * scale,
            ln1_gamma=np.ones(d),
            ln1_beta=np.zeros(d),
            ln2_gamma=np.ones(d),
            ln2_beta=np.zeros(d),
        )


def multi_head_attention(x: np.ndarray, weights: TransformerLayerWeights, heads: int) -> np.ndarray:
    n, d = x.shape
    if d % heads != 0:
        raise InputError(f"channel dimension {d} not divisible by {heads} heads")
    dh = d // heads
    q, k, v = project(x, weights.proj)
    out = np.empty((n, d), dtype=np.float64)
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        out[:, sl] = scaled_attention(q[:, sl], k[:, sl], v[:, sl])
    return out @ weights.w_out + weights.b_out


def transformer_layer(
    x: np.ndarray, weights: TransformerLayerWeights, cfg: LayerConfig
) -> np.ndarray:
    """Pre-norm residual block: X + MHA(LN(X)), then + MLP(LN(.))."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InputError(f"token matrix must be 2-D, got shape {x.shape}")
    eps = cfg.layernorm_epsilon
    h = x + multi_head_attention(
        layer_norm(x, weights.ln1_gamma, weights.ln1_beta, eps), weights, cfg.heads
    )
    normed = layer_norm(h, weights.ln2_gamma, weights.ln2_beta, eps)
    hidden = np.maximum(normed @ weights.w_mlp1 + weights.b_mlp1, 0.0)
    return h + (hidden @ weights.w_mlp2 + weights.b_mlp2)
