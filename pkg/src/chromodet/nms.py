"""
Hard NMS, Gaussian Soft-NMS and Embedding-Guided NMS.

Embedding-Guided NMS is Soft-NMS whose Gaussian exponent depends on how far
apart two detections' embeddings are::

    S(d) = 1 / (1 + exp(-2 (d - delta)))
    s_i <- s_i * exp(-iou(b_max, b_i) ** (1.5 + S(d)) / sigma)

Since IoU lies in [0, 1], a larger embedding distance gives a larger power,
a smaller ``iou ** p`` and therefore a milder decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .geometry import as_array, iou_matrix
from .metrics import Detection

ALGORITHMS = ("hard", "soft", "eg")


class MissingEmbeddingError(ValueError):
    pass


@dataclass
class NmsConfig:
    sigma: float = 0.5
    delta: float = 0.3
    hard_iou_thresh: float = 0.5
    score_floor: float = 0.001
    top_k: int = 100

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.top_k <= 0:
            raise ValueError(f"top_k must be positive, got {self.top_k}")


def sigmoid_decay(d, delta: float = 0.3):
    return 1.0 / (1.0 + np.exp(-2.0 * (np.asarray(d, dtype=float) - delta)))


def _pick(scores: np.ndarray, alive: np.ndarray) -> int:
    # argmax returns the first maximum, i.e. the lowest input index on ties
    return int(np.argmax(np.where(alive, scores, -np.inf)))


def hard_nms_indices(boxes: np.ndarray, scores: np.ndarray, iou_thresh: float = 0.5) -> List[int]:
    """Indices kept by greedy NMS, in pick order."""
    n = len(boxes)
    ious = iou_matrix(boxes, boxes)
    alive = np.ones(n, dtype=bool)
    keep = []
    while alive.any():
        i = _pick(scores, alive)
        keep.append(i)
        alive[i] = False
        alive &= ious[i] < iou_thresh
    return keep


def soft_decay_trace(
    boxes: np.ndarray,
    scores: np.ndarray,
    sigma: float = 0.5,
    power=2.0,
) -> Tuple[List[int], np.ndarray]:
    """
    Run the Soft-NMS loop without pruning.

    ``power`` is either a scalar exponent on the IoU or a callable
    ``power(i_max, k) -> float`` giving the exponent for candidate ``k``.

    The decay itself is evaluated with :mod:`math` on Python floats so the
    result is bit-for-bit reproducible independent of numpy's SIMD kernels.

    Returns:
        (pick order, scores at pick time indexed like the input)
    """
    n = len(boxes)
    s = [float(v) for v in scores]
    ious = iou_matrix(boxes, boxes).tolist()
    alive = np.ones(n, dtype=bool)
    order = []
    while alive.any():
        i = _pick(np.asarray(s), alive)
        order.append(i)
        alive[i] = False
        row = ious[i]
        for k in np.flatnonzero(alive).tolist():
            p = power(i, k) if callable(power) else power
            s[k] = s[k] * math.exp(-(row[k] ** p) / sigma)
    return order, np.array(s)


def _prune(dets: Sequence[Detection], order: Sequence[int], scores: np.ndarray, cfg: NmsConfig) -> List[Detection]:
    out = [dets[i].with_score(scores[i]) for i in order if scores[i] >= cfg.score_floor]
    out.sort(key=lambda d: -d.score)  # stable: ties stay in pick order
    return out[: cfg.top_k]


def nms_hard(dets: Sequence[Detection], cfg: NmsConfig = None) -> List[Detection]:
    cfg = cfg or NmsConfig()
    if not dets:
        return []
    keep = hard_nms_indices(as_array(dets), np.array([d.score for d in dets]), cfg.hard_iou_thresh)
    return [dets[i] for i in keep][: cfg.top_k]


def soft_nms(dets: Sequence[Detection], cfg: NmsConfig = None) -> List[Detection]:
    """Gaussian Soft-NMS: ``s <- s * exp(-iou^2 / sigma)`` against each pick."""
    cfg = cfg or NmsConfig()
    if not dets:
        return []
    order, s = soft_decay_trace(as_array(dets), np.array([d.score for d in dets]), cfg.sigma, 2.0)
    return _prune(dets, order, s, cfg)


def eg_nms_trace(
    boxes: np.ndarray,
    scores: np.ndarray,
    embeddings: np.ndarray,
    sigma: float = 0.5,
    delta: float = 0.3,
) -> Tuple[List[int], np.ndarray]:
    """Embedding-Guided NMS loop: pick order and the score of each box when picked."""
    e = [float(v) for v in embeddings]

    def power(i, k):
        return 1.5 + 1.0 / (1.0 + math.exp(-2.0 * (abs(e[i] - e[k]) - delta)))

    return soft_decay_trace(boxes, scores, sigma, power)


def embedding_guided_nms(dets: Sequence[Detection], cfg: NmsConfig = None, prune: bool = True) -> List[Detection]:
    """
    Embedding-Guided NMS over detections that all carry an embedding.

    Returns detections in pick order with decayed scores. With ``prune`` the
    score floor and ``top_k`` are applied after the loop.
    """
    cfg = cfg or NmsConfig()
    if not dets:
        return []
    missing = [k for k, d in enumerate(dets) if d.embedding is None]
    if missing:
        raise MissingEmbeddingError(f"{len(missing)} detection(s) lack an embedding, first at index {missing[0]}")
    order, s = eg_nms_trace(
        as_array(dets),
        np.array([d.score for d in dets]),
        np.array([d.embedding for d in dets]),
        cfg.sigma,
        cfg.delta,
    )
    if not prune:
        return [dets[i].with_score(s[i]) for i in order]
    return _prune(dets, order, s, cfg)


def run_nms(dets: Sequence[Detection], algo: str, cfg: NmsConfig = None) -> List[Detection]:
    """Dispatch by name: "hard", "soft" or "eg"."""
    if algo == "hard":
        return nms_hard(dets, cfg)
    if algo == "soft":
        return soft_nms(dets, cfg)
    if algo == "eg":
        return embedding_guided_nms(dets, cfg)
    raise ValueError(f"unknown NMS algorithm {algo!r}; expected one of {ALGORITHMS}")


def eg_decayed_score(score: float, iou: float, d: float, sigma: float = 0.5, delta: float = 0.3) -> float:
    """One Embedding-Guided decay step for a single pair."""
    p = 1.5 + 1.0 / (1.0 + math.exp(-2.0 * (d - delta)))
    return score * math.exp(-(iou**p) / sigma)
