"""Experiment harness: synthetic corruptions, stability and score reports.

The harness measures what the token-analysis stage is supposed to buy:
per-block cosine similarity between clean and corrupted runs (for both
the class-token attention row and the spatial score vector), per-block
score statistics with band bounds and FFN load, and alpha/gamma sweeps
reporting FLOPs against logit drift.

All CSV output is deterministic given seeds: UTF-8, LF line endings,
floats formatted with %.9g, integers bare.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .engine import forward
from .modelio import Model, random_init
from .moran import SpatialScores, spatial_scores
from .rng import SplitMix64
from .sata import bipartite_match, sata_stage, split_tokens
from .tensorops import cosine_similarity, row_softmax
from .vit import AttentionOutput, FfnWeights, ModelConfig, ffn

__all__ = [
    "CORRUPTION_KINDS",
    "CorruptionSpec",
    "StabilityRecord",
    "SweepRecord",
    "corrupt",
    "cosine_similarity",
    "stability_report",
    "averaged_stability_report",
    "stats_report",
    "sweep",
    "selftest",
    "random_image",
    "load_image",
    "write_raw_image",
    "write_csv",
    "render_csv",
    "STABILITY_HEADER",
    "STATS_HEADER",
    "SWEEP_HEADER",
    "SELFTEST_HEADER",
]

CORRUPTION_KINDS = ("gaussian_noise", "impulse_noise", "box_blur", "contrast")

HIST_BINS = 32
HIST_RANGE = (-5.0, 5.0)

STABILITY_HEADER = ["block", "delta_attention", "delta_sata"]
STATS_HEADER = [
    "block",
    "mean_s",
    "abs_median_s",
    "lower",
    "upper",
    "n_a",
    "n_b",
    "ffn_tokens",
    "ffn_flops",
] + [f"hist_{i}" for i in range(HIST_BINS)]
SWEEP_HEADER = ["param_value", "total_flops", "logit_drift"]
SELFTEST_HEADER = ["check", "cases", "max_abs_error", "status"]


# ---------------------------------------------------------------------------
# corruption generator


@dataclass(frozen=True)
class CorruptionSpec:
    """One synthetic corruption: kind, severity 1..5, RNG seed."""

    kind: str
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(
                f"unknown corruption kind {self.kind!r}; choices: {CORRUPTION_KINDS}"
            )
        if not 1 <= int(self.severity) <= 5:
            raise ValueError(f"severity must be in 1..5, got {self.severity}")


def corrupt(image, spec: CorruptionSpec) -> np.ndarray:
    """Apply one corruption; output has the input's shape, clamped to [0, 1].

    gaussian_noise adds N(0, (0.04 * severity)^2) per element,
    impulse_noise flips a fraction 0.01 * severity of elements to 0 or 1,
    box_blur convolves with a (2 * severity + 1) box (reflect borders),
    contrast rescales toward the global mean by 1 - 0.12 * severity.
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    work = img[:, :, None] if squeeze else img
    if work.ndim != 3:
        raise ValueError(f"image must be HxW or HxWxC, got shape {img.shape}")
    sev = int(spec.severity)
    gen = SplitMix64(spec.seed)

    if spec.kind == "gaussian_noise":
        sigma = 0.04 * sev
        out = work + sigma * gen.normal(work.size).reshape(work.shape)
    elif spec.kind == "impulse_noise":
        k = int(round(0.01 * sev * work.size))
        out = work.reshape(-1).copy()
        hit = gen.permutation(work.size)[:k]
        values = (gen.next_uint64(k) & np.uint64(1)).astype(np.float64)
        out[hit] = values
        out = out.reshape(work.shape)
    elif spec.kind == "box_blur":
        size = 2 * sev + 1
        out = uniform_filter(work, size=(size, size, 1), mode="reflect")
    else:  # contrast
        factor = 1.0 - 0.12 * sev
        mu = work.mean()
        out = mu + (work - mu) * factor

    out = np.clip(out, 0.0, 1.0)
    return out[:, :, 0] if squeeze else out


# ---------------------------------------------------------------------------
# images


def random_image(cfg: ModelConfig, seed: int) -> np.ndarray:
    """Deterministic uniform-noise image matching the config's geometry."""
    gen = SplitMix64(seed)
    n = cfg.image * cfg.image * cfg.channels
    return gen.uniform(n).reshape(cfg.image, cfg.image, cfg.channels)


def write_raw_image(image, path) -> None:
    """Raw little-endian float64 dump (shape is implied by the model config)."""
    arr = np.asarray(image, dtype="<f8")
    Path(path).write_bytes(np.ascontiguousarray(arr).tobytes())


def _read_netpbm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated netpbm header")
        return data[start:pos]

    magic = token().decode("ascii", "replace")
    if magic not in ("P2", "P3", "P5", "P6"):
        raise ValueError(f"{path}: unsupported netpbm magic {magic!r}")
    width = int(token())
    height = int(token())
    maxval = int(token())
    if maxval <= 0:
        raise ValueError(f"{path}: invalid maxval {maxval}")
    channels = 3 if magic in ("P3", "P6") else 1
    count = width * height * channels

    if magic in ("P5", "P6"):
        pos += 1  # single whitespace after maxval
        if maxval < 256:
            raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
        else:
            raw = np.frombuffer(data, dtype=">u2", count=count, offset=pos)
    else:
        values = data[pos:].split()
        if len(values) < count:
            raise ValueError(f"{path}: expected {count} samples, found {len(values)}")
        raw = np.array([int(v) for v in values[:count]], dtype=np.float64)

    img = raw.astype(np.float64).reshape(height, width, channels) / float(maxval)
    return img


def load_image(path, cfg: ModelConfig) -> np.ndarray:
    """Load a PGM/PPM or raw float64 image and validate it against the config."""
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix in (".pgm", ".ppm"):
        img = _read_netpbm(p)
    else:
        blob = p.read_bytes()
        expected = cfg.image * cfg.image * cfg.channels
        if len(blob) != expected * 8:
            raise ValueError(
                f"{p}: raw image holds {len(blob)} bytes, config expects "
                f"{expected} float64 values ({expected * 8} bytes) for a "
                f"{cfg.image}x{cfg.image}x{cfg.channels} grid"
            )
        img = np.frombuffer(blob, dtype="<f8").reshape(
            cfg.image, cfg.image, cfg.channels
        ).copy()
    if img.shape != (cfg.image, cfg.image, cfg.channels):
        raise ValueError(
            f"{p}: image shape {img.shape} does not match config "
            f"({cfg.image}, {cfg.image}, {cfg.channels})"
        )
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{p}: image contains non-finite values")
    return img


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".9g")


def render_csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_csv(header, rows))


# ---------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class StabilityRecord:
    block_index: int
    delta_attention: float
    delta_sata: float


def _stability_records(model, clean_image, corrupted_image, cfg) -> list[StabilityRecord]:
    _, clean_traces = forward(clean_image, model, cfg=cfg)
    _, corr_traces = forward(corrupted_image, model, cfg=cfg)
    records = []
    for tc, tx in zip(clean_traces, corr_traces):
        records.append(
            StabilityRecord(
                block_index=tc.block_index,
                delta_attention=cosine_similarity(tc.cls_attention, tx.cls_attention),
                delta_sata=cosine_similarity(tc.s_snapshot, tx.s_snapshot),
            )
        )
    return records


def stability_report(
    model: Model,
    image,
    spec: CorruptionSpec | None,
    cfg: ModelConfig | None = None,
    corrupted=None,
    out=None,
) -> list[StabilityRecord]:
    """Per-block clean-vs-corrupted cosine similarities.

    ``delta_attention`` compares the class-token attention row over the
    patch tokens, ``delta_sata`` the spatial score vector.  With
    neither ``spec`` nor ``corrupted`` the clean image is compared to
    itself (all deltas exactly 1).
    """
    if corrupted is None:
        corrupted = corrupt(image, spec) if spec is not None else image
    records = _stability_records(model, image, corrupted, cfg)
    if out is not None:
        write_csv(
            out,
            STABILITY_HEADER,
            [[r.block_index, r.delta_attention, r.delta_sata] for r in records],
        )
    return records


def averaged_stability_report(
    model: Model,
    image,
    seed: int,
    cfg: ModelConfig | None = None,
    out=None,
) -> list[StabilityRecord]:
    """Stability deltas averaged uniformly over every (kind, severity) pair.

    Each pair gets its own corruption seed derived from ``seed``, so
    the whole report is reproducible from one integer.
    """
    pair_seeds = SplitMix64(seed).next_uint64(len(CORRUPTION_KINDS) * 5)
    sums_att = None
    sums_sata = None
    count = 0
    for kind in CORRUPTION_KINDS:
        for severity in range(1, 6):
            spec = CorruptionSpec(kind=kind, severity=severity, seed=int(pair_seeds[count]))
            records = stability_report(model, image, spec, cfg=cfg)
            if sums_att is None:
                sums_att = np.zeros(len(records))
                sums_sata = np.zeros(len(records))
            sums_att += [r.delta_attention for r in records]
            sums_sata += [r.delta_sata for r in records]
            count += 1
    averaged = [
        StabilityRecord(i, float(sums_att[i] / count), float(sums_sata[i] / count))
        for i in range(len(sums_att))
    ]
    if out is not None:
        write_csv(
            out,
            STABILITY_HEADER,
            [[r.block_index, r.delta_attention, r.delta_sata] for r in averaged],
        )
    return averaged


# ---------------------------------------------------------------------------
# score statistics


def stats_report(model: Model, images, cfg: ModelConfig | None = None, out=None):
    """Per-block score statistics over an image batch.

    Scalar columns are averaged across the batch; the 32-bin histogram
    of s over [-5, 5] pools counts (out-of-range scores clip into the
    edge bins, so every token is counted).
    """
    images = list(images)
    if not images:
        raise ValueError("stats_report needs at least one image")
    run_cfg = cfg if cfg is not None else model.config
    depth = run_cfg.depth
    acc = {
        key: np.zeros(depth)
        for key in ("mean_s", "abs_median_s", "lower", "upper", "n_a", "n_b",
                    "ffn_tokens", "ffn_flops")
    }
    hists = np.zeros((depth, HIST_BINS), dtype=np.int64)
    for image in images:
        _, traces = forward(image, model, cfg=run_cfg)
        for b, tr in enumerate(traces):
            acc["mean_s"][b] += tr.mean_s
            acc["abs_median_s"][b] += tr.abs_median_s
            acc["lower"][b] += tr.bounds[0]
            acc["upper"][b] += tr.bounds[1]
            acc["n_a"][b] += tr.n_a
            acc["n_b"][b] += tr.n_b
            acc["ffn_tokens"][b] += tr.ffn_tokens
            acc["ffn_flops"][b] += tr.ffn_flops
            clipped = np.clip(tr.s_snapshot, HIST_RANGE[0], HIST_RANGE[1])
            counts, _ = np.histogram(clipped, bins=HIST_BINS, range=HIST_RANGE)
            hists[b] += counts
    n = len(images)
    rows = []
    for b in range(depth):
        row = [b] + [float(acc[key][b] / n) for key in
                     ("mean_s", "abs_median_s", "lower", "upper", "n_a", "n_b",
                      "ffn_tokens", "ffn_flops")]
        row += [int(c) for c in hists[b]]
        rows.append(row)
    if out is not None:
        write_csv(out, STATS_HEADER, rows)
    return rows


# ---------------------------------------------------------------------------
# parameter sweeps


@dataclass(frozen=True)
class SweepRecord:
    param: str
    value: float
    total_flops: float
    logit_drift: float
    ffn_tokens_per_block: tuple[float, ...]


def sweep(
    model: Model,
    images,
    param: str,
    values,
    cfg: ModelConfig | None = None,
    out=None,
) -> list[SweepRecord]:
    """Run the stage across a list of alpha or gamma values.

    The drift baseline is the same model with the stage disabled; FLOPs
    are the per-image mean of the summed per-block FFN FLOPs.  The
    stage is forced on for the swept runs regardless of the model's
    stored flag.
    """
    if param not in ("alpha", "gamma"):
        raise ValueError(f"sweep param must be 'alpha' or 'gamma', got {param!r}")
    images = list(images)
    if not images:
        raise ValueError("sweep needs at least one image")
    base_cfg = cfg if cfg is not None else model.config
    baseline_cfg = base_cfg.with_overrides(sata_enabled=False)
    baselines = [forward(img, model, cfg=baseline_cfg)[0] for img in images]

    records = []
    for value in values:
        run_cfg = base_cfg.with_overrides(sata_enabled=True, **{param: float(value)})
        flops_total = 0.0
        drift_total = 0.0
        tokens = np.zeros(run_cfg.depth)
        for img, base_logits in zip(images, baselines):
            logits, traces = forward(img, model, cfg=run_cfg)
            flops_total += sum(tr.ffn_flops for tr in traces)
            drift_total += float(np.linalg.norm(logits - base_logits))
            tokens += [tr.ffn_tokens for tr in traces]
        n = len(images)
        records.append(
            SweepRecord(
                param=param,
                value=float(value),
                total_flops=flops_total / n,
                logit_drift=drift_total / n,
                ffn_tokens_per_block=tuple(tokens / n),
            )
        )
    if out is not None:
        write_csv(
            out,
            SWEEP_HEADER,
            [[r.value, r.total_flops, r.logit_drift] for r in records],
        )
    return records


# ---------------------------------------------------------------------------
# selftest: built-in oracle suites


def _naive_spatial_scores(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Straight-line reference for the score pipeline (plain Python loops)."""
    n, d = x.shape
    a = [sum(float(x[i, t]) for t in range(d)) / d for i in range(n)]

    def znorm(vals):
        if all(v == vals[0] for v in vals):
            return [0.0] * len(vals)
        mu = sum(vals) / len(vals)
        var = sum((v - mu) ** 2 for v in vals) / len(vals)
        if var == 0.0:
            return [0.0] * len(vals)
        sd = var ** 0.5
        return [(v - mu) / sd for v in vals]

    z = znorm(a)
    raw = []
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += z[j] * float(w[j, i])
        raw.append(z[i] * acc)
    return np.array(znorm(raw))


def _random_attention(gen: SplitMix64, heads: int, n: int) -> AttentionOutput:
    maps = np.stack(
        [row_softmax(gen.normal(n * n).reshape(n, n)) for _ in range(heads)]
    )
    return AttentionOutput(
        features=np.zeros((n, 1)),
        mean_attention=maps.mean(axis=0),
        per_head=maps,
    )


def _random_ffn_weights(gen: SplitMix64, d: int, hidden: int) -> FfnWeights:
    scale = 1.0 / np.sqrt(d)
    return FfnWeights(
        ln_gain=np.ones(d),
        ln_bias=np.zeros(d),
        w1=gen.normal(d * hidden).reshape(d, hidden) * scale,
        b1=gen.normal(hidden) * scale,
        w2=gen.normal(hidden * d).reshape(hidden, d) * scale,
        b2=gen.normal(d) * scale,
    )


def _check_moran_oracle(gen: SplitMix64, cases: int) -> float:
    worst = 0.0
    for _ in range(cases):
        n = 2 + int(gen.integers(1, 15)[0])
        d = 1 + int(gen.integers(1, 8)[0])
        x = gen.normal(n * d).reshape(n, d)
        w = gen.normal(n * n).reshape(n, n)
        got = spatial_scores(x, w).s
        want = _naive_spatial_scores(x, w)
        worst = max(worst, float(np.max(np.abs(got - want))))
    return worst


def _check_split_partition(gen: SplitMix64, cases: int) -> float:
    violations = 0
    for _ in range(cases):
        n = 1 + int(gen.integers(1, 32)[0])
        s = SpatialScores.from_values(gen.normal(n) * (1.0 + gen.uniform(1)[0] * 4.0))
        alpha = float(gen.uniform(1)[0] * 2.0 + 0.05)
        res = split_tokens(s, alpha)
        merged = np.sort(np.concatenate([res.set_a, res.set_b]))
        if not np.array_equal(merged, np.arange(n)):
            violations += 1
            continue
        inside = (s.s >= res.lower) & (s.s <= res.upper)
        if not (np.all(inside[res.set_b]) and not np.any(inside[res.set_a])):
            violations += 1
    return float(violations)


def _check_merge_plans(gen: SplitMix64, cases: int) -> float:
    worst = 0.0
    for _ in range(cases):
        n = 2 + int(gen.integers(1, 20)[0])
        d = 2 + int(gen.integers(1, 6)[0])
        feats = gen.normal(n * d).reshape(n, d)
        size = int(gen.integers(1, n + 1)[0])
        set_a = np.sort(gen.permutation(n)[:size])
        plan = bipartite_match(set_a, feats)
        again = bipartite_match(set_a, feats)
        if plan.edges != again.edges:
            return float("inf")
        covered = list(plan.residuals)
        for g in plan.groups:
            covered.extend(g.members)
            worst = max(
                worst,
                float(np.max(np.abs(g.representative - feats[g.members].mean(axis=0)))),
            )
        if sorted(covered) != sorted(set_a.tolist()):
            return float("inf")
    return worst


def _check_noop_equivalence(gen: SplitMix64, cases: int) -> float:
    worst = 0.0
    cfg = ModelConfig(depth=1, dim=8, heads=2, patch=2, image=8, alpha=1e9)
    for _ in range(cases):
        n = cfg.num_tokens
        x = gen.normal(n * cfg.dim).reshape(n, cfg.dim)
        attn = _random_attention(gen, cfg.heads, n)
        fw = _random_ffn_weights(gen, cfg.dim, cfg.hidden)
        merged, trace = sata_stage(x, attn, cfg, fw)
        if trace.n_a != 0:
            continue  # band did not cover (|median| == 0); vacuous case
        vanilla = x + ffn(x, fw)
        worst = max(worst, float(np.max(np.abs(merged - vanilla))))
    return worst


def _check_restoration(gen: SplitMix64, cases: int) -> float:
    violations = 0
    cfg = ModelConfig(depth=3, dim=8, heads=2, patch=2, image=8, gamma=0.5, alpha=1.0)
    for _ in range(cases):
        model = random_init(cfg, seed=int(gen.next_uint64(1)[0]))
        image = random_image(cfg, seed=int(gen.next_uint64(1)[0]))
        _, traces = forward(image, model, capture_streams=True)
        for tr in traces:
            if tr.x_post.shape != tr.x_pre.shape:
                violations += 1
            for idx in tr.residual_indices:
                if not np.array_equal(tr.x_post[1 + idx], tr.x_pre[1 + idx]):
                    violations += 1
    return float(violations)


def _check_permutation(gen: SplitMix64, cases: int) -> float:
    worst = 0.0
    for _ in range(cases):
        n = 3 + int(gen.integers(1, 12)[0])
        d = 2 + int(gen.integers(1, 6)[0])
        x = gen.normal(n * d).reshape(n, d)
        w = gen.normal(n * n).reshape(n, n)
        perm = gen.permutation(n)
        s = spatial_scores(x, w).s
        s_p = spatial_scores(x[perm], w[np.ix_(perm, perm)]).s
        worst = max(worst, float(np.max(np.abs(s_p - s[perm]))))
    return worst


_SELFTEST_CHECKS = [
    ("moran_oracle", _check_moran_oracle, 100, 1e-9),
    ("split_partition", _check_split_partition, 1000, 0.0),
    ("merge_plans", _check_merge_plans, 200, 1e-12),
    ("noop_equivalence", _check_noop_equivalence, 25, 1e-12),
    ("restoration", _check_restoration, 10, 0.0),
    ("permutation_equivariance", _check_permutation, 50, 1e-12),
]


def selftest(seed: int = 0, out=None) -> tuple[list[list], bool]:
    """Run the built-in oracle suites; returns (rows, all_passed)."""
    rows = []
    all_ok = True
    for i, (name, fn, cases, tol) in enumerate(_SELFTEST_CHECKS):
        gen = SplitMix64(seed).spawn(i)
        err = fn(gen, cases)
        ok = err <= tol
        all_ok &= ok
        rows.append([name, cases, err, "pass" if ok else "fail"])
    if out is not None:
        write_csv(out, SELFTEST_HEADER, rows)
    return rows, all_ok
