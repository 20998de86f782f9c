"""
Detection-to-ground-truth matching and corpus-level detection metrics.

Matching follows the per-ground-truth rule: every detection is assigned to the
ground truth it overlaps most (if that IoU clears the threshold), and among the
detections assigned to one ground truth only the highest-scoring one counts as
a true positive. A COCO-style greedy matcher is available with ``greedy=True``.

Counting metrics (WCR, AER, Acc, F1) reduce a list of :class:`ImageEval`;
ranking metrics (AP, log-average miss rate) sweep the corpus-wide score order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Box, as_array, iog_matrix, iou_matrix

# FPPI operating points for the log-average miss rate: 10^-2 ... 10^0
MR_FPPI_POINTS = tuple(10.0 ** (-2 + 0.25 * k) for k in range(9))
MR_FLOOR = 1e-10


class MetricsError(ValueError):
    """A metric is undefined for the given corpus (e.g. no ground truths)."""


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    embedding: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite detection score {self.score}")
        if self.embedding is not None and not math.isfinite(self.embedding):
            raise ValueError(f"non-finite embedding {self.embedding}")

    def with_score(self, score: float) -> "Detection":
        return Detection(self.box, float(score), self.embedding)


@dataclass(frozen=True)
class ImageEval:
    tp: int
    fp: int
    fn: int
    matches: Tuple[Tuple[int, int], ...] = ()

    @property
    def perfect(self) -> bool:
        return self.fp == 0 and self.fn == 0


def _scores(dets: Sequence[Detection]) -> np.ndarray:
    return np.array([d.score for d in dets], dtype=float)


def tp_flags(
    boxes: np.ndarray,
    scores: np.ndarray,
    gt_boxes: np.ndarray,
    iou_thresh: float = 0.5,
    greedy: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-detection true-positive flags for one image.

    Returns:
        (flags, matched_gt): bool array and int array (``-1`` when unmatched),
        both in input order.
    """
    n = len(boxes)
    flags = np.zeros(n, dtype=bool)
    matched = np.full(n, -1, dtype=int)
    if n == 0 or len(gt_boxes) == 0:
        return flags, matched
    ious = iou_matrix(boxes, gt_boxes)
    # stable sort: equal scores keep input order
    order = np.argsort(-scores, kind="stable")
    claimed = np.zeros(len(gt_boxes), dtype=bool)
    if greedy:
        for k in order:
            cand = np.where(claimed, -1.0, ious[k])
            j = int(np.argmax(cand))
            if cand[j] >= iou_thresh:
                claimed[j] = True
                flags[k] = True
                matched[k] = j
        return flags, matched
    best = np.argmax(ious, axis=1)
    best_iou = ious[np.arange(n), best]
    for k in order:
        j = best[k]
        if best_iou[k] >= iou_thresh and not claimed[j]:
            claimed[j] = True
            flags[k] = True
            matched[k] = j
    return flags, matched


def match_image(
    dets: Sequence[Detection],
    gts: Sequence,
    iou_thresh: float = 0.5,
    greedy: bool = False,
) -> ImageEval:
    """Count TP/FP/FN for one image; see the module docstring for the rule."""
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou_thresh must lie in (0, 1), got {iou_thresh}")
    flags, matched = tp_flags(as_array(dets), _scores(dets), as_array(gts), iou_thresh, greedy)
    tp = int(flags.sum())
    pairs = tuple((int(k), int(matched[k])) for k in np.flatnonzero(flags))
    return ImageEval(tp=tp, fp=len(dets) - tp, fn=len(gts) - tp, matches=pairs)


# -- counting metrics ---------------------------------------------------------

def _totals(evals: Sequence[ImageEval]) -> Tuple[int, int, int]:
    return (
        sum(e.tp for e in evals),
        sum(e.fp for e in evals),
        sum(e.fn for e in evals),
    )


def aer(evals: Sequence[ImageEval]) -> float:
    """Average error ratio: ΣFP+FN over the number of ground truths. May exceed 1."""
    tp, fp, fn = _totals(evals)
    if tp + fn == 0:
        raise MetricsError("AER undefined: corpus has no ground truths")
    return (fp + fn) / (tp + fn)


def wcr(evals: Sequence[ImageEval]) -> float:
    """Whole correct ratio: fraction of images with no FP and no FN."""
    if len(evals) == 0:
        raise MetricsError("WCR undefined for an empty corpus")
    return sum(1 for e in evals if e.perfect) / len(evals)


def acc(evals: Sequence[ImageEval]) -> float:
    tp, fp, fn = _totals(evals)
    if tp + fp + fn == 0:
        raise MetricsError("Acc undefined: no detections and no ground truths")
    return tp / (tp + fp + fn)


def precision(evals: Sequence[ImageEval]) -> float:
    tp, fp, _ = _totals(evals)
    if tp + fp == 0:
        raise MetricsError("precision undefined: no detections")
    return tp / (tp + fp)


def recall(evals: Sequence[ImageEval]) -> float:
    tp, _, fn = _totals(evals)
    if tp + fn == 0:
        raise MetricsError("recall undefined: no ground truths")
    return tp / (tp + fn)


def f1(evals: Sequence[ImageEval]) -> float:
    """F1 from corpus precision and recall; 0 when there are no true positives."""
    tp, fp, fn = _totals(evals)
    if tp + fp + fn == 0:
        raise MetricsError("F1 undefined: no detections and no ground truths")
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 2 * p * r / (p + r)


# -- ranking metrics ----------------------------------------------------------

@dataclass
class PRSweep:
    """Cumulative counts at every distinct score threshold, highest first."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    n_gt: int
    n_images: int

    @property
    def recall(self) -> np.ndarray:
        return self.tp / self.n_gt

    @property
    def precision(self) -> np.ndarray:
        return self.tp / (self.tp + self.fp)

    @property
    def fppi(self) -> np.ndarray:
        return self.fp / self.n_images


def pr_sweep(
    dets_per_image: Sequence[Sequence[Detection]],
    gts_per_image: Sequence[Sequence],
    iou_thresh: float = 0.5,
    greedy: bool = False,
) -> PRSweep:
    """
    Sweep the corpus-wide score order and accumulate TP/FP counts.

    Detections with equal scores enter together: one point is emitted per
    distinct score, so the curve does not depend on input order.
    """
    if len(dets_per_image) != len(gts_per_image):
        raise ValueError("dets_per_image and gts_per_image differ in length")
    n_gt = sum(len(g) for g in gts_per_image)
    if n_gt == 0:
        raise MetricsError("corpus has no ground truths")
    all_scores, all_flags = [], []
    for dets, gts in zip(dets_per_image, gts_per_image):
        scores = _scores(dets)
        flags, _ = tp_flags(as_array(dets), scores, as_array(gts), iou_thresh, greedy)
        all_scores.append(scores)
        all_flags.append(flags)
    scores = np.concatenate(all_scores) if all_scores else np.zeros(0)
    flags = np.concatenate(all_flags) if all_flags else np.zeros(0, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    f = flags[order]
    ctp = np.cumsum(f)
    cfp = np.cumsum(~f)
    last = np.r_[s[1:] != s[:-1], True] if len(s) else np.zeros(0, dtype=bool)
    return PRSweep(s[last], ctp[last], cfp[last], n_gt, len(gts_per_image))


def _envelope_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    if len(recall) == 0:
        return 0.0
    env = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * env))


def _eleven_point_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    total = 0.0
    for t in np.linspace(0.0, 1.0, 11):
        mask = recall >= t
        total += precision[mask].max() if mask.any() else 0.0
    return total / 11.0


def average_precision(
    dets_per_image: Sequence[Sequence[Detection]],
    gts_per_image: Sequence[Sequence],
    iou_thresh: float = 0.5,
    eleven_point: bool = False,
    greedy: bool = False,
) -> float:
    """
    Area under the precision envelope of the corpus PR curve.

    ``eleven_point=True`` switches to the VOC2007 11-point interpolation.
    """
    sweep = pr_sweep(dets_per_image, gts_per_image, iou_thresh, greedy)
    if eleven_point:
        return _eleven_point_ap(sweep.recall, sweep.precision)
    return _envelope_ap(sweep.recall, sweep.precision)


def miss_rate_at_fppi(sweep: PRSweep, targets: Sequence[float] = MR_FPPI_POINTS) -> np.ndarray:
    """
    Miss rate (1 - recall) of the best operating point with FPPI <= each target.

    The empty operating point (threshold above every score) has FPPI 0 and
    miss rate 1, so a target with no admissible detection point reads 1.0.
    """
    fppi = np.r_[0.0, sweep.fppi]
    mr = np.r_[1.0, 1.0 - sweep.recall]
    idx = np.searchsorted(fppi, np.asarray(targets, dtype=float), side="right") - 1
    return mr[idx]


def log_average_miss_rate(
    dets_per_image: Sequence[Sequence[Detection]],
    gts_per_image: Sequence[Sequence],
    iou_thresh: float = 0.5,
    greedy: bool = False,
) -> float:
    """Geometric mean of the miss rate at nine log-spaced FPPI points in [1e-2, 1]."""
    if len(gts_per_image) == 0:
        raise MetricsError("log-average miss rate undefined for an empty corpus")
    sweep = pr_sweep(dets_per_image, gts_per_image, iou_thresh, greedy)
    mr = np.maximum(miss_rate_at_fppi(sweep), MR_FLOOR)
    return float(np.exp(np.mean(np.log(mr))))


# -- overlapping subset -------------------------------------------------------

def overlap_subset(gts: Sequence, tau: float = 0.5) -> frozenset:
    """
    Positions of ground truths whose area is covered by the others by at least ``tau``.

    Coverage is the sum over ``j != i`` of ``IoG(G_j, G_i)``.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if len(gts) < 2:
        return frozenset()
    m = iog_matrix(gts, gts)  # m[j, i] = IoG(G_j, G_i)
    np.fill_diagonal(m, 0.0)
    cover = m.sum(axis=0)
    return frozenset(int(i) for i in np.flatnonzero(cover >= tau))


@dataclass
class SubsetReport:
    """Counting metrics restricted to the overlapping subset of ground truths."""

    n_gt: int
    n_subset: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    acc: float
    f1: float


def _safe_ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def subset_report(
    dets_per_image: Sequence[Sequence[Detection]],
    gts_per_image: Sequence[Sequence],
    iou_thresh: float = 0.5,
    tau: float = 0.5,
    greedy: bool = False,
) -> SubsetReport:
    """
    TP/FP/FN on the overlapping subset.

    A detection belongs to the subset when the ground truth it overlaps most
    lies in the subset. It is a TP there if it was matched, else an FP.
    """
    tp = fp = fn = n_sub = n_gt = 0
    for dets, gts in zip(dets_per_image, gts_per_image):
        n_gt += len(gts)
        subset = overlap_subset(gts, tau)
        n_sub += len(subset)
        if not subset:
            continue
        boxes = as_array(dets)
        gt_boxes = as_array(gts)
        flags, _ = tp_flags(boxes, _scores(dets), gt_boxes, iou_thresh, greedy)
        hit = 0
        if len(dets):
            ious = iou_matrix(boxes, gt_boxes)
            best = np.argmax(ious, axis=1)
            touches = ious[np.arange(len(dets)), best] > 0
            for k in range(len(dets)):
                if touches[k] and int(best[k]) in subset:
                    if flags[k]:
                        hit += 1
                    else:
                        fp += 1
        tp += hit
        fn += len(subset) - hit
    p = _safe_ratio(tp, tp + fp)
    r = _safe_ratio(tp, tp + fn)
    return SubsetReport(
        n_gt=n_gt,
        n_subset=n_sub,
        tp=tp,
        fp=fp,
        fn=fn,
        precision=p,
        recall=r,
        acc=_safe_ratio(tp, tp + fp + fn),
        f1=_safe_ratio(2 * p * r, p + r),
    )


# -- full report --------------------------------------------------------------

@dataclass
class MetricReport:
    wcr: float
    aer: float
    acc: float
    f1: float
    precision: float
    recall: float
    ap: float
    mr2: float
    images: List[ImageEval] = field(default_factory=list)
    overlap: Optional[SubsetReport] = None

    def to_dict(self, image_ids: Optional[Sequence[str]] = None, digits: int = 6) -> dict:
        def r(v):
            return round(float(v), digits)

        out = {k: r(getattr(self, k)) for k in ("wcr", "aer", "acc", "f1", "precision", "recall", "ap", "mr2")}
        ids = list(image_ids) if image_ids is not None else [str(i) for i in range(len(self.images))]
        out["images"] = [
            {"image_id": i, "tp": e.tp, "fp": e.fp, "fn": e.fn} for i, e in zip(ids, self.images)
        ]
        if self.overlap is not None:
            out["overlap_subset"] = {
                k: (r(v) if isinstance(v, float) else v) for k, v in asdict(self.overlap).items()
            }
        return out


def evaluate(
    dets_per_image: Sequence[Sequence[Detection]],
    gts_per_image: Sequence[Sequence],
    iou_thresh: float = 0.5,
    tau: float = 0.5,
    score_thresh: float = 0.0,
    greedy: bool = False,
    workers: int = 1,
) -> MetricReport:
    """
    Compute every metric on a corpus.

    ``score_thresh`` filters detections for the counting metrics only (WCR,
    AER, Acc, F1 and the overlap subset); AP and MR use all detections.
    """
    if len(dets_per_image) != len(gts_per_image):
        raise ValueError("dets_per_image and gts_per_image differ in length")
    kept = [[d for d in dets if d.score >= score_thresh] for dets in dets_per_image]

    def one(pair):
        return match_image(pair[0], pair[1], iou_thresh, greedy)

    pairs = list(zip(kept, gts_per_image))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            evals = list(pool.map(one, pairs))
    else:
        evals = [one(p) for p in pairs]

    tp, fp, fn = _totals(evals)
    return MetricReport(
        wcr=wcr(evals),
        aer=aer(evals),
        acc=acc(evals),
        f1=f1(evals),
        precision=_safe_ratio(tp, tp + fp),
        recall=recall(evals),
        ap=average_precision(dets_per_image, gts_per_image, iou_thresh, greedy=greedy),
        mr2=log_average_miss_rate(dets_per_image, gts_per_image, iou_thresh, greedy=greedy),
        images=evals,
        overlap=subset_report(kept, gts_per_image, iou_thresh, tau, greedy),
    )
