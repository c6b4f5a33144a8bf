#!/usr/bin/env python3
"""Walk through the spatial autocorrelation score pipeline on a toy grid.

Builds a small token field with an obvious "object" region, uses a
row-stochastic closeness matrix as the spatial weights, and prints each
stage: attribute, z-scores, raw local Moran values, final scores.
"""

import numpy as np

from satavit import global_attribute, local_moran, spatial_scores, z_normalize
from satavit.tensorops import row_softmax

rng = np.random.default_rng(0)

# 9 tokens of dimension 4: tokens 0..3 form a bright coherent patch,
# the rest are dim background noise
x = np.vstack([
    1.0 + 0.05 * rng.normal(size=(4, 4)),
    0.1 * rng.normal(size=(5, 4)),
])

# closeness weights: neighbors in index space attend to each other
dist = np.abs(np.subtract.outer(np.arange(9), np.arange(9)))
w = row_softmax(-dist.astype(float))

a = global_attribute(x)
z = z_normalize(a)
raw = local_moran(z, w)
scores = spatial_scores(x, w)

print("token attribute (feature mean) :", np.round(a, 3))
print("z-normalized attribute         :", np.round(z, 3))
print("raw local Moran values         :", np.round(raw, 3))
print("final scores s                 :", np.round(scores.s, 3))
print()
print(f"mean(s)      = {scores.mean_s:+.2e}  (zero by construction)")
print(f"|median(s)|  = {scores.abs_median_s:.4f}  (sets the band half-width)")
print()
print("Tokens in the bright patch agree with their neighbors, so they carry")
print("large positive scores; isolated background tokens sit near zero or")
print("below. The band around the median separates the two regimes.")
