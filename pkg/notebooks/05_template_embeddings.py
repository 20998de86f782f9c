"""
Template masks and grouping losses
==================================

The five 7x7 masks pick out diagonal, anti-diagonal, horizontal, vertical and
ring-shaped patterns in a pooled proposal feature. An embedding head turns a
masked feature map into one scalar, and the pull/push losses train those
scalars to cluster per chromosome.
"""

import numpy as np

from chromodet import Box, LabeledBox
from chromodet.template import EmbeddingHead, GroupedEmbeddings, embed, pull_loss, push_loss, template_masks

np.set_printoptions(precision=2, suppress=True)
masks = template_masks()
for kind in ("D", "C"):
    print(kind)
    print(masks[kind])

#%%
# A diagonal stripe in every channel lights up the D mask much more than TD.
tile = np.zeros((7, 7, 256))
tile[np.arange(7), np.arange(7), :] = 1.0
print("D response", (tile[..., 0] * masks["D"]).sum(), "TD response", (tile[..., 0] * masks["TD"]).sum())

head = EmbeddingHead.random(seed=0)
print("embedding of the stripe:", embed(tile, head))

#%%
# Two touching chromosomes: tight clusters far apart cost nothing; clusters
# closer than the margin pay the push hinge.
gts = [LabeledBox(Box(0, 0, 10, 30), 0), LabeledBox(Box(5, 0, 15, 30), 1)]
good = GroupedEmbeddings([[0.0, 0.02, -0.01], [1.5, 1.48]])
bad = GroupedEmbeddings([[0.0, 0.4, -0.3], [0.3, 0.6]])
for name, g in (("separated", good), ("mixed", bad)):
    print(f"{name:>9s}: pull {pull_loss(g):.4f}  push {push_loss(g, gts):.4f}")
