"""AP and log-average miss rate by re-matching the corpus at every score threshold."""

import math

from ._boxes import box_iou, coords

MAX_DETECTIONS = 50


class OracleTooLarge(ValueError):
    pass


def _flatten(dets_per_image):
    out = []
    for img, dets in enumerate(dets_per_image):
        for d in dets:
            out.append((img, coords(d), float(d.score)))
    if len(out) > MAX_DETECTIONS:
        raise OracleTooLarge(f"oracle accepts at most {MAX_DETECTIONS} detections, got {len(out)}")
    return out


def _count_at(threshold, flat, gts, iou_thresh):
    """Match every detection scoring >= threshold; return (tp, fp)."""
    tp = fp = 0
    for img, img_gts in enumerate(gts):
        kept = [(box, score) for (i, box, score) in flat if i == img and score >= threshold]
        # each detection goes to its highest-IoU ground truth (first on ties)
        per_gt = {}
        for box, score in kept:
            best_j, best = None, -1.0
            for j, g in enumerate(img_gts):
                v = box_iou(box, g)
                if v > best:
                    best_j, best = j, v
            if best_j is not None and best >= iou_thresh:
                per_gt.setdefault(best_j, []).append(score)
            else:
                fp += 1
        for scores in per_gt.values():
            tp += 1
            fp += len(scores) - 1
    return tp, fp


def _operating_points(dets_per_image, gts_per_image, iou_thresh):
    flat = _flatten(dets_per_image)
    gts = [[coords(g) for g in img] for img in gts_per_image]
    n_gt = sum(len(g) for g in gts)
    if n_gt == 0:
        raise ValueError("corpus has no ground truths")
    points = []
    for t in sorted({s for _, _, s in flat}, reverse=True):
        tp, fp = _count_at(t, flat, gts, iou_thresh)
        points.append((tp, fp))
    return points, n_gt


def oracle_ap(dets_per_image, gts_per_image, iou_thresh=0.5):
    """All-point AP: integrate, over recall, the best precision reachable at that recall or more."""
    points, n_gt = _operating_points(dets_per_image, gts_per_image, iou_thresh)
    pr = [(tp / n_gt, tp / (tp + fp)) for tp, fp in points]
    recalls = sorted({r for r, _ in pr})
    ap, prev = 0.0, 0.0
    for r in recalls:
        best = max(p for rr, p in pr if rr >= r)
        ap += (r - prev) * best
        prev = r
    return ap


def oracle_mr(dets_per_image, gts_per_image, iou_thresh=0.5, floor=1e-10):
    points, n_gt = _operating_points(dets_per_image, gts_per_image, iou_thresh)
    n_img = len(gts_per_image)
    logs = []
    for k in range(9):
        target = 10.0 ** (-2 + 0.25 * k)
        recalls = [tp / n_gt for tp, fp in points if fp / n_img <= target]
        miss = 1.0 - max(recalls) if recalls else 1.0
        logs.append(math.log(max(miss, floor)))
    return math.exp(sum(logs) / len(logs))
