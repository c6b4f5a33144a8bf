"""Pre-norm ViT building blocks: config, patch embedding, attention, FFN.

Block wiring (including the optional token-analysis stage between
attention and FFN) lives in :mod:`satavit.engine`; this module only
provides the per-layer math.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .tensorops import as_matrix, gelu, layer_norm, row_softmax

__all__ = [
    "ModelConfig",
    "AttentionOutput",
    "EmbedWeights",
    "AttnWeights",
    "FfnWeights",
    "HeadWeights",
    "patch_embed",
    "mhsa",
    "ffn",
]

LN_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and token-analysis settings for one model.

    ``gamma`` is the depth fraction after which the analysis stage
    activates (blocks with index >= ceil(gamma * depth), 0-based);
    ``alpha`` scales the in-band interval around the score median.
    """

    depth: int = 8
    dim: int = 32
    heads: int = 4
    ffn_ratio: float = 4.0
    patch: int = 4
    image: int = 16
    num_classes: int = 10
    channels: int = 1
    gamma: float = 0.7
    alpha: float = 1.0
    sata_enabled: bool = True
    attention_reduce: str = "mean"
    match_metric: str = "cosine"
    moran_row_convention: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.dim < 1 or self.heads < 1 or self.dim % self.heads != 0:
            raise ValueError(
                f"dim must be a positive multiple of heads, got dim={self.dim} "
                f"heads={self.heads}"
            )
        if self.patch < 1 or self.image < 1 or self.image % self.patch != 0:
            raise ValueError(
                f"image side {self.image} must be divisible by patch side {self.patch}"
            )
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.hidden < 1:
            raise ValueError(f"ffn_ratio {self.ffn_ratio} gives an empty hidden layer")
        if self.attention_reduce not in ("mean", "max"):
            raise ValueError(f"attention_reduce must be 'mean' or 'max', got {self.attention_reduce!r}")
        if self.match_metric not in ("cosine", "dot"):
            raise ValueError(f"match_metric must be 'cosine' or 'dot', got {self.match_metric!r}")

    @property
    def hidden(self) -> int:
        return int(round(self.ffn_ratio * self.dim))

    @property
    def grid(self) -> int:
        return self.image // self.patch

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def num_tokens(self) -> int:
        """Patch tokens plus the class token."""
        return self.num_patches + 1

    @property
    def sata_start_block(self) -> int:
        """First 0-based block index the analysis stage applies to."""
        return int(np.ceil(self.gamma * self.depth))

    def with_overrides(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "dim": self.dim,
            "heads": self.heads,
            "ffn_ratio": self.ffn_ratio,
            "patch": self.patch,
            "image": self.image,
            "num_classes": self.num_classes,
            "channels": self.channels,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "sata_enabled": self.sata_enabled,
            "attention_reduce": self.attention_reduce,
            "match_metric": self.match_metric,
            "moran_row_convention": self.moran_row_convention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class EmbedWeights:
    weight: np.ndarray  # (patch*patch*channels, dim)
    bias: np.ndarray  # (dim,)
    class_token: np.ndarray  # (dim,)
    pos_embed: np.ndarray  # (num_tokens, dim)


@dataclass(frozen=True)
class AttnWeights:
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray


@dataclass(frozen=True)
class FfnWeights:
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    w1: np.ndarray  # (dim, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, dim)
    b2: np.ndarray


@dataclass(frozen=True)
class HeadWeights:
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    weight: np.ndarray  # (dim, num_classes)
    bias: np.ndarray


@dataclass(frozen=True)
class AttentionOutput:
    """Attention result: residual-added features plus the probability maps."""

    features: np.ndarray  # (num_tokens, dim), x + projected attention
    mean_attention: np.ndarray  # (num_tokens, num_tokens), head average
    per_head: Optional[np.ndarray] = None  # (heads, num_tokens, num_tokens)


def patch_embed(image, w: EmbedWeights, cfg: ModelConfig) -> np.ndarray:
    """Image -> token tensor: linear patch projection, class token, pos add.

    Patches are read in raster order; each patch block is flattened
    row-major over (row, col, channel) before the linear map.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"image must be HxW or HxWxC, got shape {img.shape}")
    h, wpx, c = img.shape
    if h != cfg.image or wpx != cfg.image or c != cfg.channels:
        raise ValueError(
            f"image shape {img.shape} does not match config "
            f"({cfg.image}x{cfg.image}x{cfg.channels})"
        )
    p = cfg.patch
    g = cfg.grid
    if w.weight.shape != (p * p * c, cfg.dim):
        raise ValueError(
            f"patch projection shape {w.weight.shape} does not match "
            f"({p * p * c}, {cfg.dim})"
        )
    # (g, p, g, p, c) -> (g, g, p, p, c) -> (g*g, p*p*c)
    blocks = img.reshape(g, p, g, p, c).transpose(0, 2, 1, 3, 4)
    flat = blocks.reshape(g * g, p * p * c)
    tokens = flat @ w.weight + w.bias
    x = np.vstack([w.class_token[None, :], tokens])
    if w.pos_embed.shape != x.shape:
        raise ValueError(
            f"position embedding shape {w.pos_embed.shape} does not match "
            f"token tensor shape {x.shape}"
        )
    return x + w.pos_embed


def mhsa(x, w: AttnWeights, heads: int) -> AttentionOutput:
    """Pre-norm multi-head self-attention with residual add.

    Per-head logits are scaled by 1/sqrt(dim/heads); the returned
    ``mean_attention`` is the head average of the post-softmax maps, and
    ``per_head`` keeps the individual maps for downstream consumers.
    """
    x = as_matrix(x)
    n, d = x.shape
    for name, mat in (("wq", w.wq), ("wk", w.wk), ("wv", w.wv), ("wo", w.wo)):
        if mat.shape != (d, d):
            raise ValueError(f"attention weight {name} has shape {mat.shape}, expected ({d}, {d})")
    if d % heads != 0:
        raise ValueError(f"dim {d} not divisible by {heads} heads")
    hd = d // heads
    scale = 1.0 / np.sqrt(hd)

    normed = layer_norm(x, w.ln_gain, w.ln_bias, eps=LN_EPS)
    q = normed @ w.wq + w.bq
    k = normed @ w.wk + w.bk
    v = normed @ w.wv + w.bv

    maps = np.empty((heads, n, n))
    attended = np.empty((n, d))
    for h in range(heads):
        sl = slice(h * hd, (h + 1) * hd)
        logits = (q[:, sl] @ k[:, sl].T) * scale
        maps[h] = row_softmax(logits)
        attended[:, sl] = maps[h] @ v[:, sl]

    features = x + (attended @ w.wo + w.bo)
    return AttentionOutput(
        features=features,
        mean_attention=maps.mean(axis=0),
        per_head=maps,
    )


def ffn(x, w: FfnWeights) -> np.ndarray:
    """Feed-forward delta: Linear -> GELU -> Linear on the layer-normed input.

    Returns only the delta; the caller owns the residual add.  An empty
    token tensor maps to an empty delta.
    """
    x = as_matrix(x)
    d = x.shape[1]
    if w.w1.shape[0] != d or w.w2.shape[1] != d or w.w1.shape[1] != w.w2.shape[0]:
        raise ValueError(
            f"ffn weight shapes {w.w1.shape} / {w.w2.shape} do not chain for dim {d}"
        )
    if x.shape[0] == 0:
        return np.zeros_like(x)
    normed = layer_norm(x, w.ln_gain, w.ln_bias, eps=LN_EPS)
    return gelu(normed @ w.w1 + w.b1) @ w.w2 + w.b2
