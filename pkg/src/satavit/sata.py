"""Token analysis stage between attention and FFN.

Given per-token spatial autocorrelation scores, tokens whose score
falls inside the closed band

    [alpha * (mean_s - |median_s|), alpha * (mean_s + |median_s|)]

pass straight to the FFN.  Out-of-band tokens are bipartite-matched
(alternating halves, one edge per source to its most similar target)
and each connected group is merged into one averaged representative
for the FFN; unconnected targets skip the FFN entirely.  After the FFN
every original token position is restored: band tokens get their own
delta, merged-group members share their group's delta, residuals pass
through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .moran import SpatialScores, spatial_scores
from .tensorops import as_matrix
from .vit import AttentionOutput, FfnWeights, ModelConfig, ffn

__all__ = [
    "SplitResult",
    "MergeGroup",
    "MergePlan",
    "BlockTrace",
    "split_tokens",
    "bipartite_match",
    "sata_stage",
    "ffn_flops",
]


@dataclass(frozen=True)
class SplitResult:
    """Partition of patch-token indices into in-band and out-of-band sets."""

    set_b: np.ndarray  # indices with lower <= s <= upper, ascending
    set_a: np.ndarray  # complement, ascending
    lower: float
    upper: float


@dataclass(frozen=True)
class MergeGroup:
    members: np.ndarray  # token indices, ascending
    representative: np.ndarray  # mean of the members' feature rows


@dataclass(frozen=True)
class MergePlan:
    """Bipartite matching outcome over the out-of-band set."""

    a1: np.ndarray  # sources: even positions of set_a
    a2: np.ndarray  # targets: odd positions of set_a
    edges: dict[int, int]  # source token index -> target token index
    groups: list[MergeGroup]
    residuals: np.ndarray  # targets with no incoming edge


@dataclass(frozen=True)
class BlockTrace:
    """Per-block record of scores, split sizes and FFN load."""

    block_index: int
    n_a: int
    n_b: int
    n_groups: int
    n_residual: int
    ffn_tokens: int
    s_snapshot: np.ndarray
    bounds: tuple[float, float]
    ffn_flops: int
    mean_s: float
    abs_median_s: float
    residual_indices: np.ndarray
    cls_attention: Optional[np.ndarray] = None
    x_pre: Optional[np.ndarray] = field(default=None, repr=False)
    x_post: Optional[np.ndarray] = field(default=None, repr=False)


def split_tokens(scores: SpatialScores, alpha: float) -> SplitResult:
    """Split token indices by the closed alpha-scaled band around the scores.

    The out-of-band set is the complement of the band (score strictly
    below the lower bound or strictly above the upper bound); bound
    hits count as in-band.
    """
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    lower = alpha * (scores.mean_s - scores.abs_median_s)
    upper = alpha * (scores.mean_s + scores.abs_median_s)
    inside = (scores.s >= lower) & (scores.s <= upper)
    return SplitResult(
        set_b=np.flatnonzero(inside),
        set_a=np.flatnonzero(~inside),
        lower=float(lower),
        upper=float(upper),
    )


def _unit_rows(f: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    return np.divide(f, norms, out=np.zeros_like(f), where=norms > 0)


def bipartite_match(set_a, features, metric: str = "cosine") -> MergePlan:
    """One-edge-per-source matching between alternating halves of set_a.

    Sources are the even positions of set_a's order, targets the odd
    positions.  Each source connects to its most similar target
    (argmax similarity, ties to the lowest token index); a target plus
    its sources merge into a group represented by the unweighted mean
    of their feature rows.  Targets without edges become residuals.
    A set with fewer than two members yields an empty plan, the lone
    member (if any) turning residual.
    """
    set_a = np.asarray(set_a, dtype=np.int64).ravel()
    features = as_matrix(features)
    if metric not in ("cosine", "dot"):
        raise ValueError(f"unknown match metric {metric!r}")

    if set_a.size <= 1:
        return MergePlan(
            a1=np.empty(0, dtype=np.int64),
            a2=set_a.copy(),
            edges={},
            groups=[],
            residuals=set_a.copy(),
        )

    a1 = set_a[0::2]
    a2 = set_a[1::2]
    f1 = features[a1]
    f2 = features[a2]
    if metric == "cosine":
        sim = _unit_rows(f1) @ _unit_rows(f2).T
        # all-zero rows have unit 0; a zero source against a zero target
        # counts as identical (similarity 1), matching the package-wide
        # cosine convention
        zero1 = np.all(f1 == 0.0, axis=1)
        zero2 = np.all(f2 == 0.0, axis=1)
        if zero1.any() and zero2.any():
            sim[np.ix_(zero1, zero2)] = 1.0
    else:
        sim = f1 @ f2.T

    # argmax returns the first maximum; a2 is ascending, so ties resolve
    # to the lowest token index
    choice = np.argmax(sim, axis=1)
    edges = {int(src): int(a2[j]) for src, j in zip(a1, choice)}

    sources_of: dict[int, list[int]] = {}
    for src, tgt in edges.items():
        sources_of.setdefault(tgt, []).append(src)

    groups = []
    residual = []
    for tgt in a2:
        tgt = int(tgt)
        if tgt in sources_of:
            members = np.sort(np.array([tgt] + sources_of[tgt], dtype=np.int64))
            groups.append(
                MergeGroup(members=members, representative=features[members].mean(axis=0))
            )
        else:
            residual.append(tgt)

    return MergePlan(
        a1=a1.copy(),
        a2=a2.copy(),
        edges=edges,
        groups=groups,
        residuals=np.array(residual, dtype=np.int64),
    )


def ffn_flops(n_tokens: int, d: int, hidden: int) -> int:
    """FLOPs of the two FFN linear layers, multiply-accumulate counted as 2.

    Biases and the GELU are excluded from the count.
    """
    if n_tokens < 0:
        raise ValueError(f"token count must be non-negative, got {n_tokens}")
    if d < 1 or hidden < 1:
        raise ValueError(f"dimensions must be positive, got d={d} hidden={hidden}")
    return 2 * n_tokens * (d * hidden + hidden * d)


def moran_weights(attn: AttentionOutput, cfg: ModelConfig) -> np.ndarray:
    """Patch-restricted closeness matrix from the attention maps."""
    if cfg.attention_reduce == "max":
        if attn.per_head is None:
            raise ValueError("per-head attention maps required for max reduction")
        full = attn.per_head.max(axis=0)
    else:
        full = attn.mean_attention
    return full[1:, 1:]


def sata_stage(
    x,
    attn: AttentionOutput,
    cfg: ModelConfig,
    ffn_weights: FfnWeights,
    block_index: int = 0,
) -> tuple[np.ndarray, BlockTrace]:
    """Score, split, merge, run the reduced FFN, and restore all positions.

    ``x`` is the post-attention residual stream with the class token in
    row 0; the class token is exempt from splitting and always routed
    to the FFN.  The output has exactly the input token count, in the
    original order.
    """
    x = as_matrix(x)
    n_all, d = x.shape
    if n_all < 2:
        raise ValueError(f"need at least one patch token besides the class token, got {n_all} rows")
    if attn.mean_attention.shape != (n_all, n_all):
        raise ValueError(
            f"attention map shape {attn.mean_attention.shape} does not match {n_all} tokens"
        )

    patches = x[1:]
    scores = spatial_scores(
        patches, moran_weights(attn, cfg), row_convention=cfg.moran_row_convention
    )
    split = split_tokens(scores, cfg.alpha)
    plan = bipartite_match(split.set_a, patches, metric=cfg.match_metric)

    reps = (
        np.stack([g.representative for g in plan.groups])
        if plan.groups
        else np.zeros((0, d))
    )
    ffn_in = np.concatenate([x[:1], patches[split.set_b], reps], axis=0)
    deltas = ffn(ffn_in, ffn_weights)

    out = x.copy()
    out[0] += deltas[0]
    out[1 + split.set_b] += deltas[1 : 1 + split.set_b.size]
    offset = 1 + split.set_b.size
    for gi, group in enumerate(plan.groups):
        out[1 + group.members] += deltas[offset + gi]
    # residual rows stay bitwise untouched

    n_tokens = ffn_in.shape[0]
    hidden = ffn_weights.w1.shape[1]
    trace = BlockTrace(
        block_index=block_index,
        n_a=int(split.set_a.size),
        n_b=int(split.set_b.size),
        n_groups=len(plan.groups),
        n_residual=int(plan.residuals.size),
        ffn_tokens=n_tokens,
        s_snapshot=scores.s.copy(),
        bounds=(split.lower, split.upper),
        ffn_flops=ffn_flops(n_tokens, d, hidden),
        mean_s=scores.mean_s,
        abs_median_s=scores.abs_median_s,
        residual_indices=plan.residuals.copy(),
        cls_attention=attn.mean_attention[0, 1:].copy(),
    )
    return out, trace
