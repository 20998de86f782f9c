"""
Post-processing, losses and evaluation for crowded chromosome detection.

Modules: ``geometry`` (box algebra), ``metrics`` (matching, WCR/AER/Acc/F1,
AP, log-average miss rate), ``anchors`` (anchor grid and HNAS), ``template``
(template masks, embedding head, pull/push losses), ``losses`` (repulsion
losses), ``nms`` (hard, soft and embedding-guided NMS), ``synth`` (synthetic
scenarios) and ``oracles`` (naive reference implementations).
"""

from .geometry import Box, LabeledBox, area, iog, iou, repulsion_gt
from .metrics import Detection, ImageEval, MetricReport, evaluate, match_image
from .nms import NmsConfig, embedding_guided_nms, nms_hard, soft_nms

__version__ = "0.1.0"

__all__ = [
    "Box",
    "LabeledBox",
    "Detection",
    "ImageEval",
    "MetricReport",
    "NmsConfig",
    "area",
    "iou",
    "iog",
    "repulsion_gt",
    "match_image",
    "evaluate",
    "nms_hard",
    "soft_nms",
    "embedding_guided_nms",
]
