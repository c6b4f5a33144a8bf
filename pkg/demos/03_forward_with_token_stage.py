#!/usr/bin/env python3
"""Run a full forward pass and read the per-block traces.

Initializes a seeded random 8-block model, pushes one synthetic image
through it with the token stage on and off, and tabulates where tokens
were split, merged, or skipped, plus the FFN FLOPs saved.
"""

import numpy as np

from satavit import ModelConfig, forward, random_image, random_init

cfg = ModelConfig(depth=8, dim=32, heads=4, patch=4, image=16, num_classes=10,
                  gamma=0.7, alpha=1.0)
model = random_init(cfg, seed=7)
image = random_image(cfg, seed=3)

logits, traces = forward(image, model)
base_logits, base_traces = forward(image, model, cfg=cfg.with_overrides(sata_enabled=False))

print(f"model: {cfg.depth} blocks, dim {cfg.dim}, {cfg.num_tokens} tokens, "
      f"stage active from block {cfg.sata_start_block}")
print()
print("block   |A|  |B|  groups  resid  ffn_tokens  ffn_flops")
for tr in traces:
    print(f"{tr.block_index:>5} {tr.n_a:>5} {tr.n_b:>4} {tr.n_groups:>7} "
          f"{tr.n_residual:>6} {tr.ffn_tokens:>11} {tr.ffn_flops:>10}")

total = sum(tr.ffn_flops for tr in traces)
vanilla = sum(tr.ffn_flops for tr in base_traces)
print()
print(f"ffn flops with stage    : {total}")
print(f"ffn flops vanilla       : {vanilla}")
print(f"ratio                   : {total / vanilla:.4f}")
print(f"prediction (stage on)   : class {int(np.argmax(logits))}")
print(f"prediction (stage off)  : class {int(np.argmax(base_logits))}")
print(f"logit drift ||dl||2     : {np.linalg.norm(logits - base_logits):.6f}")
