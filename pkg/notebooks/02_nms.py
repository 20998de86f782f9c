"""
Three ways to suppress duplicates
=================================

Two chromosomes cross, so their correct boxes overlap heavily. Hard NMS
deletes one of them, Gaussian Soft-NMS keeps it at a reduced score, and
Embedding-Guided NMS decays it less because its embedding says it belongs to
a different object.
"""

from chromodet import Box, Detection, NmsConfig, iou
from chromodet.nms import eg_decayed_score, embedding_guided_nms, nms_hard, soft_nms

a = Box(0, 0, 40, 40)
b = Box(12, 0, 52, 40)  # second chromosome, IoU with a is about 0.54
dup = Box(1, 1, 41, 41)  # duplicate of a

dets = [
    Detection(a, 0.95, embedding=0.0),
    Detection(b, 0.85, embedding=1.2),  # different object: distant embedding
    Detection(dup, 0.80, embedding=0.05),  # same object: nearby embedding
]
print(f"IoU(a, b) = {iou(a, b):.3f}, IoU(a, dup) = {iou(a, dup):.3f}")

#%%
cfg = NmsConfig(sigma=0.5, delta=0.3)
for name, fn in (("hard", nms_hard), ("soft", soft_nms), ("eg", embedding_guided_nms)):
    kept = fn(dets, cfg)
    print(f"{name:>4s}:", ", ".join(f"{d.box.x1:.0f}->{d.score:.3f}" for d in kept))

#%%
# The decay as a function of embedding distance at a fixed overlap: the
# sigmoid switches from the sharper to the milder exponent around delta.
for d in (0.0, 0.15, 0.3, 0.6, 1.0, 2.0):
    print(f"d={d:<4}  score 0.8 -> {eg_decayed_score(0.8, 1 / 3, d):.4f}")
