"""
Single-level anchor grid, IoU labeling and Hard Negative Anchor Sampling (HNAS).

Two partition criteria are supported:

=========  ===========  ===============  =============  ============
criterion  positive     ignore           hard negative  easy negative
=========  ===========  ===============  =============  ============
v1         IoU >= 0.7   --               [0.3, 0.7)     < 0.3
v2         IoU >= 0.7   [0.5, 0.7)       [0.1, 0.5)     < 0.1
=========  ===========  ===============  =============  ============

In both, the best-overlapping anchor of every ground truth is positive too.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Box, as_array, iou_matrix

DEFAULT_AREAS = (32.0**2, 64.0**2, 96.0**2, 128.0**2)
DEFAULT_RATIOS = (1 / 5, 1 / 4, 1 / 3, 1 / 2, 1.0, 2.0, 3.0, 4.0, 5.0)
POSITIVE_IOU = 0.7


class Stratum(enum.IntEnum):
    POSITIVE = 0
    HARD_NEGATIVE = 1
    EASY_NEGATIVE = 2
    IGNORE = 3

    @property
    def label(self) -> str:
        return self.name.lower()


# (hard lower bound, hard upper bound / ignore lower bound)
CRITERIA = {
    "v1": (0.3, 0.7),
    "v2": (0.1, 0.5),
}


@dataclass
class AnchorConfig:
    """
    Anchor layout on one feature level.

    Widths are ``sqrt(area * ratio)`` and heights ``sqrt(area / ratio)``, so a
    ratio is width over height.
    """

    width: int = 1600
    height: int = 1200
    stride: int = 8
    areas: Sequence[float] = DEFAULT_AREAS
    aspect_ratios: Sequence[float] = DEFAULT_RATIOS

    def __post_init__(self):
        if not self.areas or not self.aspect_ratios:
            raise ValueError("anchor config needs at least one area and one aspect ratio")
        if self.stride <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("stride, width and height must be positive")
        if any(a <= 0 for a in self.areas) or any(r <= 0 for r in self.aspect_ratios):
            raise ValueError("areas and aspect ratios must be positive")

    @property
    def per_location(self) -> int:
        return len(self.areas) * len(self.aspect_ratios)

    @property
    def grid_shape(self) -> tuple:
        return (math.ceil(self.height / self.stride), math.ceil(self.width / self.stride))


def base_shapes(cfg: AnchorConfig) -> np.ndarray:
    """(A, 2) array of anchor (width, height), area-major then ratio."""
    shapes = [
        (math.sqrt(a * r), math.sqrt(a / r)) for a in cfg.areas for r in cfg.aspect_ratios
    ]
    return np.array(shapes, dtype=float)


def generate_anchors(cfg: AnchorConfig) -> np.ndarray:
    """
    Anchors centred at ``stride * (i + 0.5)`` over the image grid.

    Anchors are not clipped to the image. Rows are ordered by grid row, grid
    column, area, then aspect ratio.

    Returns:
        (H * W * A, 4) boxes in (x1, y1, x2, y2)
    """
    rows, cols = cfg.grid_shape
    cy = cfg.stride * (np.arange(rows) + 0.5)
    cx = cfg.stride * (np.arange(cols) + 0.5)
    wh = base_shapes(cfg)
    half = np.concatenate([-wh / 2, wh / 2], axis=1)  # (A, 4)
    centers = np.stack(np.meshgrid(cx, cy), axis=-1).reshape(-1, 2)
    centers = np.tile(centers, 2)  # (HW, 4): cx, cy, cx, cy
    return (centers[:, None, :] + half[None, :, :]).reshape(-1, 4)


@dataclass(frozen=True)
class AnchorRecord:
    box: Box
    max_iou: float
    best_gt: Optional[int]
    stratum: Stratum


@dataclass
class AnchorLabels:
    """Array-backed labeling of an anchor set; indexing yields :class:`AnchorRecord`."""

    boxes: np.ndarray
    max_iou: np.ndarray
    best_gt: np.ndarray  # -1 when the anchor touches no ground truth
    stratum: np.ndarray  # Stratum codes
    criterion: str = "v2"

    def __len__(self):
        return len(self.boxes)

    def __getitem__(self, i: int) -> AnchorRecord:
        g = int(self.best_gt[i])
        return AnchorRecord(
            box=Box.from_seq(self.boxes[i]),
            max_iou=float(self.max_iou[i]),
            best_gt=None if g < 0 else g,
            stratum=Stratum(int(self.stratum[i])),
        )

    def indices(self, stratum: Stratum) -> np.ndarray:
        return np.flatnonzero(self.stratum == stratum)

    def counts(self) -> dict:
        return {s.label: int(np.count_nonzero(self.stratum == s)) for s in Stratum}


def stratify(max_iou: np.ndarray, criterion: str = "v2") -> np.ndarray:
    """Stratum codes from max IoU alone (before the per-GT best-anchor rule)."""
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; expected one of {sorted(CRITERIA)}")
    lo, hi = CRITERIA[criterion]
    out = np.full(max_iou.shape, Stratum.IGNORE, dtype=np.int8)
    out[max_iou < lo] = Stratum.EASY_NEGATIVE
    out[(max_iou >= lo) & (max_iou < hi)] = Stratum.HARD_NEGATIVE
    out[max_iou >= POSITIVE_IOU] = Stratum.POSITIVE
    return out


def label_anchors(anchors, gts: Sequence, criterion: str = "v2", chunk: int = 200_000) -> AnchorLabels:
    """
    Label every anchor by its best IoU with the ground truths.

    Args:
        anchors: (N, 4) array or sequence of boxes
        gts: ground-truth boxes (nonempty)
        criterion: "v1" or "v2"
        chunk: anchors per IoU block, bounds peak memory

    Returns:
        AnchorLabels
    """
    anchors = as_array(anchors)
    gt_boxes = as_array(gts)
    if len(gt_boxes) == 0:
        raise ValueError("label_anchors needs at least one ground truth")
    n = len(anchors)
    max_iou = np.zeros(n)
    best_gt = np.full(n, -1, dtype=int)
    # per-GT best anchor, tracked across chunks
    gt_best_iou = np.full(len(gt_boxes), -1.0)
    gt_best_idx = np.zeros(len(gt_boxes), dtype=int)
    for start in range(0, n, chunk):
        m = iou_matrix(anchors[start:start + chunk], gt_boxes)
        arg = np.argmax(m, axis=1)
        top = m[np.arange(len(m)), arg]
        max_iou[start:start + chunk] = top
        best_gt[start:start + chunk] = np.where(top > 0, arg, -1)
        col_arg = np.argmax(m, axis=0)
        col_top = m[col_arg, np.arange(m.shape[1])]
        better = col_top > gt_best_iou
        gt_best_iou[better] = col_top[better]
        gt_best_idx[better] = col_arg[better] + start

    stratum = stratify(max_iou, criterion)
    forced = gt_best_idx[gt_best_iou > 0]
    stratum[forced] = Stratum.POSITIVE
    return AnchorLabels(anchors, max_iou, best_gt, stratum, criterion)


@dataclass
class SampledBatch:
    positive: np.ndarray
    hard_negative: np.ndarray
    easy_negative: np.ndarray
    batch_size: int = 512
    shortfall: int = 0
    available: dict = field(default_factory=dict)

    @property
    def sizes(self) -> tuple:
        return (len(self.positive), len(self.hard_negative), len(self.easy_negative))

    def all_indices(self) -> np.ndarray:
        return np.concatenate([self.positive, self.hard_negative, self.easy_negative])


def hnas_targets(batch_size: int = 512) -> tuple:
    """(positive, hard, easy) quotas: 25% / 37.5% / 37.5%."""
    if batch_size <= 0 or batch_size % 8:
        raise ValueError(f"batch_size must be a positive multiple of 8, got {batch_size}")
    return batch_size // 4, 3 * batch_size // 8, 3 * batch_size // 8


def hnas_counts(n_pos: int, n_hard: int, n_easy: int, batch_size: int = 512) -> tuple:
    """
    Per-stratum draw counts given stratum availability.

    Shortfalls in positives or hard negatives are filled from easy negatives
    first, then from any hard negatives left over.
    """
    t_pos, t_hard, t_easy = hnas_targets(batch_size)
    pos = min(t_pos, n_pos)
    hard = min(t_hard, n_hard)
    deficit = (t_pos - pos) + (t_hard - hard)
    easy = min(t_easy + deficit, n_easy)
    deficit = batch_size - pos - hard - easy
    extra = min(deficit, n_hard - hard)
    hard += extra
    return pos, hard, easy


def hnas_sample(labels: AnchorLabels, rng_seed, batch_size: int = 512) -> SampledBatch:
    """
    Draw one RPN mini-batch by stratified uniform sampling without replacement.

    ``shortfall`` reports how many slots could not be filled when the anchor
    population is smaller than ``batch_size``.
    """
    pos_idx = labels.indices(Stratum.POSITIVE)
    hard_idx = labels.indices(Stratum.HARD_NEGATIVE)
    easy_idx = labels.indices(Stratum.EASY_NEGATIVE)
    n_pos, n_hard, n_easy = hnas_counts(len(pos_idx), len(hard_idx), len(easy_idx), batch_size)
    rng = np.random.default_rng(rng_seed)
    pos = rng.choice(pos_idx, n_pos, replace=False) if n_pos else pos_idx[:0]
    hard = rng.choice(hard_idx, n_hard, replace=False) if n_hard else hard_idx[:0]
    easy = rng.choice(easy_idx, n_easy, replace=False) if n_easy else easy_idx[:0]
    return SampledBatch(
        positive=np.sort(pos),
        hard_negative=np.sort(hard),
        easy_negative=np.sort(easy),
        batch_size=batch_size,
        shortfall=batch_size - (n_pos + n_hard + n_easy),
        available={"positive": len(pos_idx), "hard_negative": len(hard_idx), "easy_negative": len(easy_idx)},
    )
