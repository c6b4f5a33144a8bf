"""Model persistence and seeded initialization.

On disk a model is two files sharing a stem: ``<name>.manifest.json``
(config, tensor table, checksum) and ``<name>.weights.bin`` (the raw
tensors as little-endian float64, concatenated in manifest order).
The checksum is a 64-bit BLAKE2b digest of the blob bytes, stored as
16 hex characters; it is verified on load.

Random initialization draws every tensor from the package's fixed
splitmix64 stream (see :mod:`satavit.rng`), so a seed produces the
same model on every platform.  Non-norm tensors get i.i.d. normal
entries scaled by 1/sqrt(dim); layer-norm affines start at identity
(gain 1, bias 0).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import SplitMix64
from .vit import AttnWeights, EmbedWeights, FfnWeights, HeadWeights, ModelConfig

__all__ = [
    "Model",
    "ChecksumError",
    "SchemaError",
    "tensor_schema",
    "random_init",
    "save_model",
    "load_model",
    "model_checksum",
]

MANIFEST_FORMAT = "satavit-weights-v1"


class ChecksumError(ValueError):
    """Blob bytes do not match the manifest checksum."""


class SchemaError(ValueError):
    """Manifest tensor table does not match what the config requires."""


@dataclass(frozen=True)
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray]

    def tensor(self, name: str) -> np.ndarray:
        try:
            return self.params[name]
        except KeyError:
            raise SchemaError(f"model has no tensor named {name!r}") from None


def tensor_schema(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) list for every tensor a config requires."""
    d, h = cfg.dim, cfg.hidden
    schema: list[tuple[str, tuple[int, ...]]] = [
        ("patch_embed.weight", (cfg.patch * cfg.patch * cfg.channels, d)),
        ("patch_embed.bias", (d,)),
        ("class_token", (d,)),
        ("pos_embed", (cfg.num_tokens, d)),
    ]
    for i in range(cfg.depth):
        b = f"block{i}"
        schema += [
            (f"{b}.ln1.gain", (d,)),
            (f"{b}.ln1.bias", (d,)),
            (f"{b}.attn.wq", (d, d)),
            (f"{b}.attn.bq", (d,)),
            (f"{b}.attn.wk", (d, d)),
            (f"{b}.attn.bk", (d,)),
            (f"{b}.attn.wv", (d, d)),
            (f"{b}.attn.bv", (d,)),
            (f"{b}.attn.wo", (d, d)),
            (f"{b}.attn.bo", (d,)),
            (f"{b}.ln2.gain", (d,)),
            (f"{b}.ln2.bias", (d,)),
            (f"{b}.ffn.w1", (d, h)),
            (f"{b}.ffn.b1", (h,)),
            (f"{b}.ffn.w2", (h, d)),
            (f"{b}.ffn.b2", (d,)),
        ]
    schema += [
        ("final_norm.gain", (d,)),
        ("final_norm.bias", (d,)),
        ("head.weight", (d, cfg.num_classes)),
        ("head.bias", (cfg.num_classes,)),
    ]
    return schema


def _is_norm_param(name: str) -> bool:
    return ".ln1." in name or ".ln2." in name or name.startswith("final_norm.")


def random_init(cfg: ModelConfig, seed: int) -> Model:
    """Deterministic scaled-normal weights from the fixed splitmix64 stream."""
    gen = SplitMix64(seed)
    scale = 1.0 / np.sqrt(cfg.dim)
    params: dict[str, np.ndarray] = {}
    for name, shape in tensor_schema(cfg):
        if _is_norm_param(name):
            fill = 1.0 if name.endswith(".gain") else 0.0
            params[name] = np.full(shape, fill)
        else:
            n = int(np.prod(shape))
            params[name] = (gen.normal(n) * scale).reshape(shape)
    return Model(config=cfg, params=params)


def _blob_bytes(model: Model) -> tuple[bytes, list[dict]]:
    chunks = []
    table = []
    offset = 0
    for name, shape in tensor_schema(model.config):
        arr = model.tensor(name)
        if tuple(arr.shape) != shape:
            raise SchemaError(
                f"tensor {name!r} has shape {tuple(arr.shape)}, schema requires {shape}"
            )
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        table.append({"name": name, "shape": list(shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    return b"".join(chunks), table


def model_checksum(model: Model) -> str:
    blob, _ = _blob_bytes(model)
    return hashlib.blake2b(blob, digest_size=8).hexdigest()


def _resolve_stem(path) -> Path:
    p = Path(path)
    name = p.name
    for suffix in (".manifest.json", ".weights.bin"):
        if name.endswith(suffix):
            return p.with_name(name[: -len(suffix)])
    return p


def save_model(model: Model, path) -> None:
    """Write ``<stem>.manifest.json`` and ``<stem>.weights.bin``."""
    stem = _resolve_stem(path)
    blob, table = _blob_bytes(model)
    manifest = {
        "format": MANIFEST_FORMAT,
        "config": model.config.to_dict(),
        "checksum": hashlib.blake2b(blob, digest_size=8).hexdigest(),
        "tensors": table,
    }
    try:
        stem.with_name(stem.name + ".weights.bin").write_bytes(blob)
        stem.with_name(stem.name + ".manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise OSError(f"failed to save model at {stem}: {exc}") from exc


def load_model(path) -> Model:
    """Load a manifest/blob pair; verifies checksum and tensor table."""
    stem = _resolve_stem(path)
    manifest_path = stem.with_name(stem.name + ".manifest.json")
    blob_path = stem.with_name(stem.name + ".weights.bin")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        blob = blob_path.read_bytes()
    except OSError as exc:
        raise OSError(f"failed to load model at {stem}: {exc}") from exc

    if manifest.get("format") != MANIFEST_FORMAT:
        raise SchemaError(
            f"{manifest_path}: unsupported manifest format {manifest.get('format')!r}"
        )
    cfg = ModelConfig.from_dict(manifest["config"])

    digest = hashlib.blake2b(blob, digest_size=8).hexdigest()
    if digest != manifest.get("checksum"):
        raise ChecksumError(
            f"{blob_path}: checksum mismatch (blob {digest}, manifest "
            f"{manifest.get('checksum')}); the weight file is corrupt or truncated"
        )

    entries = {e["name"]: e for e in manifest.get("tensors", [])}
    if len(entries) != len(manifest.get("tensors", [])):
        raise SchemaError(f"{manifest_path}: duplicate tensor entries")

    params: dict[str, np.ndarray] = {}
    spans = []
    for name, shape in tensor_schema(cfg):
        if name not in entries:
            raise SchemaError(f"{manifest_path}: manifest is missing tensor {name!r}")
        entry = entries.pop(name)
        if tuple(entry["shape"]) != shape:
            raise SchemaError(
                f"{manifest_path}: tensor {name!r} has shape {entry['shape']}, "
                f"config requires {list(shape)}"
            )
        count = int(np.prod(shape))
        start = int(entry["offset"])
        end = start + count * 8
        if start < 0 or end > len(blob):
            raise SchemaError(
                f"{manifest_path}: tensor {name!r} spans bytes [{start}, {end}) "
                f"outside the {len(blob)}-byte blob"
            )
        spans.append((start, end, name))
        params[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=start).reshape(
            shape
        ).copy()
    if entries:
        raise SchemaError(
            f"{manifest_path}: manifest lists unknown tensors {sorted(entries)}"
        )
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise SchemaError(
                f"{manifest_path}: tensors {n0!r} and {n1!r} overlap in the blob"
            )
    return Model(config=cfg, params=params)


def embed_view(model: Model) -> EmbedWeights:
    return EmbedWeights(
        weight=model.tensor("patch_embed.weight"),
        bias=model.tensor("patch_embed.bias"),
        class_token=model.tensor("class_token"),
        pos_embed=model.tensor("pos_embed"),
    )


def attn_view(model: Model, i: int) -> AttnWeights:
    b = f"block{i}"
    return AttnWeights(
        ln_gain=model.tensor(f"{b}.ln1.gain"),
        ln_bias=model.tensor(f"{b}.ln1.bias"),
        wq=model.tensor(f"{b}.attn.wq"),
        bq=model.tensor(f"{b}.attn.bq"),
        wk=model.tensor(f"{b}.attn.wk"),
        bk=model.tensor(f"{b}.attn.bk"),
        wv=model.tensor(f"{b}.attn.wv"),
        bv=model.tensor(f"{b}.attn.bv"),
        wo=model.tensor(f"{b}.attn.wo"),
        bo=model.tensor(f"{b}.attn.bo"),
    )


def ffn_view(model: Model, i: int) -> FfnWeights:
    b = f"block{i}"
    return FfnWeights(
        ln_gain=model.tensor(f"{b}.ln2.gain"),
        ln_bias=model.tensor(f"{b}.ln2.bias"),
        w1=model.tensor(f"{b}.ffn.w1"),
        b1=model.tensor(f"{b}.ffn.b1"),
        w2=model.tensor(f"{b}.ffn.w2"),
        b2=model.tensor(f"{b}.ffn.b2"),
    )


def head_view(model: Model) -> HeadWeights:
    return HeadWeights(
        ln_gain=model.tensor("final_norm.gain"),
        ln_bias=model.tensor("final_norm.bias"),
        weight=model.tensor("head.weight"),
        bias=model.tensor("head.bias"),
    )
