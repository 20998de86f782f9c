"""
Repulsion-style box losses and the weighted training-loss combiner.

``repulsion_loss`` penalizes ``Smooth_ln(IoG(B, R))``: how much of the
repulsion ground truth ``R`` the predicted box ``B`` covers. ``tnrl`` first
subtracts the part of ``R`` already covered by the attracting ground truth
``G`` and renormalizes, so a box sitting exactly on ``G`` costs nothing and one
sitting exactly on ``R`` reads 1 before smoothing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .geometry import Box, area, as_array, iog, iou_matrix

LOG_CLAMP = 1.0 - 1e-9


def smooth_ln(x, sigma: float = 0.5):
    """
    ``-ln(1 - x)`` below ``sigma``, continued linearly above it.

    Accepts scalars or arrays with values in [0, 1).
    """
    if not 0.0 <= sigma < 1.0:
        raise ValueError(f"sigma must lie in [0, 1), got {sigma}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr >= 1.0) or np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("smooth_ln input must lie in [0, 1)")
    lin = (arr - sigma) / (1.0 - sigma) - math.log(1.0 - sigma)
    with np.errstate(divide="ignore"):
        out = np.where(arr <= sigma, -np.log1p(-np.minimum(arr, sigma)), lin)
    return float(out) if out.ndim == 0 else out


def smooth_ln_grad(x, sigma: float = 0.5):
    arr = np.asarray(x, dtype=float)
    out = np.where(arr <= sigma, 1.0 / (1.0 - np.minimum(arr, sigma)), 1.0 / (1.0 - sigma))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ProposalTriple:
    predicted: Box
    attract: Box
    repulse: Optional[Box] = None


@dataclass
class LossWeights:
    alpha: float = 0.1
    beta: float = 0.1
    gamma: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and nonnegative, got {v}")


def normalized_iog(b: Box, r: Box, g: Box) -> float:
    """
    ``(IoG(B, R) - IoG(G, R)) / (1 - IoG(G, R))`` without clamping.

    Returns 0 when ``R`` lies entirely inside ``G``.
    """
    c = iog(g, r)
    if c >= 1.0:
        return 0.0
    return (iog(b, r) - c) / (1.0 - c)


def tnrl_value(t: ProposalTriple) -> float:
    """Per-triple value fed to Smooth_ln, in [0, 1]; 0 without a repulsion box."""
    if t.repulse is None:
        return 0.0
    return min(max(normalized_iog(t.predicted, t.repulse, t.attract), 0.0), 1.0)


def rl_value(t: ProposalTriple) -> float:
    if t.repulse is None:
        return 0.0
    return iog(t.predicted, t.repulse)


def _mean_smoothed(values: Sequence[float], sigma: float) -> float:
    if len(values) == 0:
        raise ValueError("loss needs at least one proposal")
    v = np.minimum(np.asarray(values, dtype=float), LOG_CLAMP)
    return float(np.sum(smooth_ln(v, sigma)) / len(values))


def repulsion_loss(triples: Sequence[ProposalTriple], sigma: float = 0.5) -> float:
    """Mean of ``Smooth_ln(IoG(B, R))`` over all triples; triples without ``R`` add 0."""
    return _mean_smoothed([rl_value(t) for t in triples], sigma)


def tnrl(triples: Sequence[ProposalTriple], sigma: float = 0.5) -> float:
    """Truncated normalized repulsion loss over all triples."""
    return _mean_smoothed([tnrl_value(t) for t in triples], sigma)


def _intersection_grad(b: Box, r: Box) -> np.ndarray:
    """d area(B ∩ R) / d (bx1, by1, bx2, by2)."""
    w = min(b.x2, r.x2) - max(b.x1, r.x1)
    h = min(b.y2, r.y2) - max(b.y1, r.y1)
    if w <= 0 or h <= 0:
        return np.zeros(4)
    return np.array([
        -h if b.x1 > r.x1 else 0.0,
        -w if b.y1 > r.y1 else 0.0,
        h if b.x2 < r.x2 else 0.0,
        w if b.y2 < r.y2 else 0.0,
    ])


def normalized_iog_grad(b: Box, r: Box, g: Box) -> np.ndarray:
    """Gradient of :func:`normalized_iog` with respect to B's four coordinates."""
    c = iog(g, r)
    if c >= 1.0:
        return np.zeros(4)
    return _intersection_grad(b, r) / (area(r) * (1.0 - c))


def tnrl_term_grad(t: ProposalTriple, sigma: float = 0.5) -> np.ndarray:
    """Gradient of one triple's smoothed TNRL term with respect to the predicted box."""
    if t.repulse is None:
        return np.zeros(4)
    v = normalized_iog(t.predicted, t.repulse, t.attract)
    if v <= 0.0 or v >= LOG_CLAMP:
        return np.zeros(4)
    return smooth_ln_grad(v, sigma) * normalized_iog_grad(t.predicted, t.repulse, t.attract)


def tnrl_term(t: ProposalTriple, sigma: float = 0.5) -> float:
    return smooth_ln(min(tnrl_value(t), LOG_CLAMP), sigma)


def build_triples(pred_boxes, gts, proposals=None, pos_iou: float = 0.5) -> List[ProposalTriple]:
    """
    Pair each positive proposal with its attracting and repulsion ground truths.

    ``G`` is the ground truth with the highest IoU to the proposal and ``R`` the
    highest among the rest (absent when the proposal touches no other). A
    proposal is positive when its best IoU reaches ``pos_iou``. Proposal boxes
    default to the predicted boxes.
    """
    pred = as_array(pred_boxes)
    props = pred if proposals is None else as_array(proposals)
    gt_boxes = as_array(gts)
    if len(pred) == 0 or len(gt_boxes) == 0:
        return []
    m = iou_matrix(props, gt_boxes)
    out = []
    for k in range(len(pred)):
        order = np.argsort(-m[k], kind="stable")
        gi = order[0]
        if m[k, gi] < pos_iou:
            continue
        rep = None
        if len(order) > 1 and m[k, order[1]] > 0:
            rep = Box.from_seq(gt_boxes[order[1]])
        out.append(ProposalTriple(Box.from_seq(pred[k]), Box.from_seq(gt_boxes[gi]), rep))
    return out


def combine(det_loss: float, pull: float, push: float, tnrep: float, w: LossWeights = None) -> float:
    """``det + alpha * pull + beta * push + gamma * tnrep``."""
    w = w or LossWeights()
    for name, v in (("det_loss", det_loss), ("pull", pull), ("push", push), ("tnrep", tnrep)):
        if not math.isfinite(v):
            raise ValueError(f"{name} is not finite: {v}")
    return det_loss + w.alpha * pull + w.beta * push + w.gamma * tnrep


# -- shift curves -------------------------------------------------------------

@dataclass
class ShiftCurve:
    overlap_iou: float
    shift: np.ndarray
    rl_iog: np.ndarray  # IoG(B, R)
    tnrl_iog: np.ndarray  # clamped normalized IoG
    rl: np.ndarray
    tnrl: np.ndarray

    def rows(self) -> Iterable[tuple]:
        return zip(self.shift.tolist(), self.rl.tolist(), self.tnrl.tolist())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["shift", "rl", "tnrl"])
            for s, a, b in self.rows():
                w.writerow([f"{s:.6f}", f"{a:.9f}", f"{b:.9f}"])


def shift_boxes(overlap_iou: float):
    """
    Two unit squares G and R offset horizontally so that IoU(G, R) = overlap_iou.

    Returns (G, R, offset).
    """
    if not 0.0 < overlap_iou < 1.0:
        raise ValueError(f"overlap_iou must lie in (0, 1), got {overlap_iou}")
    # IoU of unit squares offset by o is (1 - o) / (1 + o)
    o = (1.0 - overlap_iou) / (1.0 + overlap_iou)
    return Box(0.0, 0.0, 1.0, 1.0), Box(o, 0.0, 1.0 + o, 1.0), o


def shift_curve(overlap_iou: float, steps: int = 100, sigma: float = 0.5) -> ShiftCurve:
    """
    Slide B in a straight line from G (shift 0) to R (shift 1) and record both losses.
    """
    if steps <= 0:
        raise ValueError("steps must be positive")
    g, r, o = shift_boxes(overlap_iou)
    shifts = np.linspace(0.0, 1.0, steps + 1)
    raw, norm = [], []
    for t in shifts:
        tri = ProposalTriple(g.translate(t * o, 0.0), g, r)
        raw.append(rl_value(tri))
        norm.append(tnrl_value(tri))
    raw = np.array(raw)
    norm = np.array(norm)
    return ShiftCurve(
        overlap_iou=overlap_iou,
        shift=shifts,
        rl_iog=raw,
        tnrl_iog=norm,
        rl=smooth_ln(np.minimum(raw, LOG_CLAMP), sigma),
        tnrl=smooth_ln(np.minimum(norm, LOG_CLAMP), sigma),
    )
