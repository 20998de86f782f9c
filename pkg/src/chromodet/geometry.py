"""
Axis-aligned box algebra.

Boxes use continuous pixel coordinates ``(x1, y1, x2, y2)`` with no ``+1``
convention, so ``area([0, 0, 1, 1]) == 1``. Scalar helpers take :class:`Box`
objects; the ``*_matrix`` helpers take ``(N, 4)`` arrays and are what the
hot paths (matching, anchor labeling, NMS) use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np


class InvalidBoxError(ValueError):
    """Raised for boxes with non-finite coordinates or non-positive extent."""


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidBoxError(f"non-finite box coordinates {coords}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise InvalidBoxError(f"degenerate box {coords}: need x2 > x1 and y2 > y1")

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> "Box":
        if len(seq) != 4:
            raise InvalidBoxError(f"box needs 4 coordinates, got {len(seq)}")
        return cls(*(float(v) for v in seq))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def translate(self, dx: float, dy: float) -> "Box":
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=float)

    def as_list(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class LabeledBox:
    """A ground-truth box with an identity unique within its image."""

    box: Box
    id: int


def area(b: Box) -> float:
    return (b.x2 - b.x1) * (b.y2 - b.y1)


def intersection(a: Box, b: Box) -> float:
    """Area of ``a ∩ b``; exactly 0.0 when the boxes do not overlap."""
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    inter = intersection(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (area(a) + area(b) - inter)


def iog(a: Box, g: Box) -> float:
    """Intersection over the area of ``g`` (asymmetric)."""
    inter = intersection(a, g)
    if inter == 0.0:
        return 0.0
    return inter / area(g)


def _unwrap(item) -> Box:
    # LabeledBox and Detection both expose ``.box``
    return item.box if hasattr(item, "box") else item


def as_array(boxes: Iterable) -> np.ndarray:
    """Stack boxes (``Box``, ``LabeledBox``, ``Detection`` or 4-sequences) to ``(N, 4)``."""
    if isinstance(boxes, np.ndarray):
        arr = np.asarray(boxes, dtype=float)
        return arr.reshape(-1, 4)
    rows = []
    for item in boxes:
        item = _unwrap(item)
        if isinstance(item, Box):
            rows.append((item.x1, item.y1, item.x2, item.y2))
        else:
            rows.append(tuple(float(v) for v in item))
    if not rows:
        return np.zeros((0, 4), dtype=float)
    return np.array(rows, dtype=float)


def _intersection_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    h = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    return np.clip(w, 0.0, None) * np.clip(h, 0.0, None)


def areas(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    return (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])


def iou_matrix(a, b) -> np.ndarray:
    """
    Pairwise IoU.

    Args:
        a: (N, 4) boxes or a sequence of box-like items
        b: (M, 4) boxes or a sequence of box-like items

    Returns:
        (N, M) IoU matrix
    """
    a = as_array(a)
    b = as_array(b)
    inter = _intersection_matrix(a, b)
    union = areas(a)[:, None] + areas(b)[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0)
    return out


def iog_matrix(a, g) -> np.ndarray:
    """Pairwise ``area(a_i ∩ g_j) / area(g_j)``, shape (N, M)."""
    a = as_array(a)
    g = as_array(g)
    inter = _intersection_matrix(a, g)
    return inter / areas(g)[None, :]


def repulsion_gt(i: int, gts: Sequence) -> Optional[int]:
    """
    Index of the ground truth overlapping ``gts[i]`` most (by IoU), excluding ``i``.

    Returns None when ``gts[i]`` touches no other ground truth. Equal IoUs
    resolve to the lowest index.
    """
    n = len(gts)
    if not 0 <= i < n:
        raise IndexError(f"ground-truth index {i} out of range for {n} boxes")
    target = _unwrap(gts[i])
    best, best_iou = None, 0.0
    for j in range(n):
        if j == i:
            continue
        v = iou(target, _unwrap(gts[j]))
        if v > best_iou:
            best, best_iou = j, v
    return best


def repulsion_partners(gts: Sequence) -> list:
    """:func:`repulsion_gt` for every ground truth, computed from one IoU matrix."""
    n = len(gts)
    if n == 0:
        return []
    m = iou_matrix(gts, gts)
    np.fill_diagonal(m, -1.0)
    best = np.argmax(m, axis=1)
    return [int(j) if m[i, j] > 0.0 else None for i, j in enumerate(best)]
