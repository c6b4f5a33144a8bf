#!/usr/bin/env python3
"""Compare how attention rows and spatial scores survive input corruption.

For one image and each corruption kind, prints the per-block cosine
similarity between the clean run and the corrupted run: once for the
class-token attention row, once for the spatial score vector.
"""

from satavit import (
    CORRUPTION_KINDS,
    CorruptionSpec,
    ModelConfig,
    random_image,
    random_init,
    stability_report,
)

cfg = ModelConfig(depth=8, dim=32, heads=4, patch=4, image=16, num_classes=10)
model = random_init(cfg, seed=11)
image = random_image(cfg, seed=4)

for kind in CORRUPTION_KINDS:
    spec = CorruptionSpec(kind=kind, severity=3, seed=21)
    records = stability_report(model, image, spec)
    print(f"\n{kind} (severity 3)")
    print("block  delta_attention  delta_scores")
    for r in records:
        print(f"{r.block_index:>5} {r.delta_attention:>16.4f} {r.delta_sata:>13.4f}")

print()
print("A delta of 1.0 means the corrupted run saw the same map as the clean")
print("run; with pretrained weights the score deltas stay high in the later")
print("blocks while the attention deltas fall, which is the effect the stage")
print("exploits. Random desk-scale weights only demonstrate the measurement.")
