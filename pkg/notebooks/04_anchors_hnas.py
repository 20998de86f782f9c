"""
Anchors and hard negative sampling
==================================

Lay the default anchor grid over a small image, label every anchor against a
pair of overlapping chromosomes, and draw one 512-anchor batch. The hard
negatives are the anchors that cover part of a chromosome.
"""

import numpy as np

from chromodet import Box, LabeledBox
from chromodet.anchors import AnchorConfig, generate_anchors, hnas_sample, label_anchors

cfg = AnchorConfig(width=400, height=300, stride=8)
anchors = generate_anchors(cfg)
print(f"{cfg.grid_shape[0]}x{cfg.grid_shape[1]} locations x {cfg.per_location} shapes = {len(anchors)} anchors")

gts = [
    LabeledBox(Box(120, 80, 160, 200), 0),
    LabeledBox(Box(100, 130, 230, 165), 1),
]

#%%
# v1 treats 0.3 <= IoU < 0.7 as hard; v2 widens the hard band down to 0.1 and
# drops 0.5..0.7 from sampling altogether.
for crit in ("v1", "v2"):
    labels = label_anchors(anchors, gts, crit)
    print(crit, labels.counts())

#%%
batch = hnas_sample(labels, rng_seed=0)
print("batch (positive, hard, easy):", batch.sizes, "shortfall", batch.shortfall)
hard = labels.max_iou[batch.hard_negative]
print(f"hard negatives: IoU from {hard.min():.2f} to {hard.max():.2f}, median {np.median(hard):.2f}")
