"""
Scoring detections
==================

Build a tiny two-image corpus by hand, match it, and read off the counting
and ranking metrics, including the report restricted to overlapping
chromosomes.
"""

from chromodet import Box, Detection, LabeledBox
from chromodet.metrics import evaluate, match_image, overlap_subset

# two chromosomes that overlap, plus one standing alone
gts = [
    [LabeledBox(Box(10, 10, 40, 60), 0), LabeledBox(Box(20, 15, 50, 65), 1)],
    [LabeledBox(Box(100, 100, 130, 150), 0)],
]
dets = [
    [
        Detection(Box(11, 9, 41, 61), 0.95),
        Detection(Box(19, 16, 51, 64), 0.80),
        Detection(Box(12, 12, 38, 58), 0.40),  # duplicate of the first
    ],
    [Detection(Box(300, 300, 320, 330), 0.30)],  # pure false positive, GT missed
]

#%%
# Per-image matching: each GT keeps its best-scoring overlapping detection.
for k in range(2):
    ev = match_image(dets[k], gts[k])
    print(f"image {k}: tp={ev.tp} fp={ev.fp} fn={ev.fn} pairs={ev.matches}")

#%%
# Corpus-level report. Neither image is perfect, so WCR is 0.
report = evaluate(dets, gts)
for name in ("wcr", "aer", "acc", "f1", "ap", "mr2"):
    print(f"{name:>4s} = {getattr(report, name):.4f}")

#%%
# The two overlapping GTs form the overlapping subset (tau = 0.5).
print("subset of image 0:", sorted(overlap_subset(gts[0])))
sub = report.overlap
print(f"{sub.n_subset}/{sub.n_gt} GTs overlap; precision {sub.precision:.3f}, recall {sub.recall:.3f}")

#%%
# A confidence cut only affects the counting metrics; AP still ranks everything.
cut = evaluate(dets, gts, score_thresh=0.5)
print("with score >= 0.5: AER", round(cut.aer, 4), "AP", round(cut.ap, 4))
