"""
Seedable synthetic metaphase-like scenarios.

Each image holds slender strip-shaped ground truths (aspect ratios drawn from
the anchor range 1:5 .. 5:1). ``overlap`` is the probability that a new
ground truth is dropped on top of an existing one instead of into free space,
which controls how many end up in the overlapping subset. Detections are
noisy copies of the ground truths plus optional duplicates and spurious boxes,
each carrying a scalar embedding: ground truths that touch are given base
embeddings at least ``push_delta`` apart.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .geometry import Box, LabeledBox, as_array, iou_matrix
from .metrics import Detection, overlap_subset


class InfeasibleConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    seed: int = 0
    n_images: int = 1
    width: int = 1600
    height: int = 1200
    n_gts: int = 46
    overlap: float = 0.0
    jitter: float = 0.0
    fn_rate: float = 0.0
    fp_rate: float = 0.0
    duplicate_rate: float = 0.0
    embedding_noise: float = 0.0
    push_delta: float = 1.0
    min_side: float = 12.0
    area_range: tuple = (40.0**2, 110.0**2)
    max_aspect: float = 5.0

    def __post_init__(self):
        for name in ("overlap", "fn_rate", "fp_rate", "duplicate_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InfeasibleConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("jitter", "embedding_noise"):
            if getattr(self, name) < 0:
                raise InfeasibleConfigError(f"{name} must be nonnegative")
        if self.n_images <= 0 or self.n_gts < 0 or self.width <= 0 or self.height <= 0:
            raise InfeasibleConfigError("n_images, width and height must be positive and n_gts nonnegative")
        lo, hi = self.area_range
        if not 0 < lo <= hi or hi >= self.width * self.height:
            raise InfeasibleConfigError(f"bad area_range {self.area_range}")


@dataclass
class SyntheticImage:
    image_id: str
    width: int
    height: int
    gts: List[LabeledBox]
    dets: List[Detection]
    det_truth: List[Optional[int]]  # GT position each detection was generated from; None for spurious

    @property
    def overlap_fraction(self) -> float:
        return len(overlap_subset(self.gts)) / len(self.gts) if self.gts else 0.0


@dataclass
class Scenario:
    config: ScenarioConfig
    images: List[SyntheticImage] = field(default_factory=list)

    @property
    def gts_per_image(self) -> List[List[LabeledBox]]:
        return [im.gts for im in self.images]

    @property
    def dets_per_image(self) -> List[List[Detection]]:
        return [im.dets for im in self.images]

    @property
    def achieved_overlap(self) -> float:
        """Fraction of all ground truths in the overlapping subset (tau = 0.5)."""
        total = sum(len(im.gts) for im in self.images)
        if total == 0:
            return 0.0
        return sum(len(overlap_subset(im.gts)) for im in self.images) / total


def _strip(rng: np.random.Generator, cfg: ScenarioConfig) -> tuple:
    a = rng.uniform(*cfg.area_range)
    r = math.exp(rng.uniform(-math.log(cfg.max_aspect), math.log(cfg.max_aspect)))
    w = min(max(math.sqrt(a * r), cfg.min_side), cfg.width)
    h = min(max(math.sqrt(a / r), cfg.min_side), cfg.height)
    return w, h


def _clip_xy(cx, cy, w, h, cfg):
    x1 = min(max(cx - w / 2, 0.0), cfg.width - w)
    y1 = min(max(cy - h / 2, 0.0), cfg.height - h)
    return np.array([x1, y1, x1 + w, y1 + h])


def _place_gts(rng: np.random.Generator, cfg: ScenarioConfig, tries: int = 200) -> np.ndarray:
    boxes = np.zeros((0, 4))
    for k in range(cfg.n_gts):
        w, h = _strip(rng, cfg)
        if k > 0 and rng.random() < cfg.overlap:
            host = boxes[rng.integers(len(boxes))]
            cx = rng.uniform(host[0], host[2])
            cy = rng.uniform(host[1], host[3])
            box = _clip_xy(cx, cy, w, h, cfg)
        else:
            # rejection-sample a spot clear of every placed box, best effort
            cand = np.column_stack([
                rng.uniform(0, cfg.width - w, tries),
                rng.uniform(0, cfg.height - h, tries),
            ])
            cand = np.column_stack([cand, cand + [w, h]])
            if len(boxes):
                clear = ~(iou_matrix(cand, boxes) > 0).any(axis=1)
                box = cand[np.argmax(clear)] if clear.any() else cand[0]
            else:
                box = cand[0]
        boxes = np.vstack([boxes, box])
    return boxes


def _color(boxes: np.ndarray) -> np.ndarray:
    """Greedy graph coloring where touching boxes must differ."""
    n = len(boxes)
    touch = iou_matrix(boxes, boxes) > 0 if n else np.zeros((0, 0), dtype=bool)
    colors = np.full(n, -1, dtype=int)
    for i in range(n):
        used = set(colors[touch[i] & (colors >= 0)].tolist())
        c = 0
        while c in used:
            c += 1
        colors[i] = c
    return colors


def _jitter(rng: np.random.Generator, box: np.ndarray, std: float, cfg: ScenarioConfig) -> np.ndarray:
    if std == 0:
        return box.copy()
    for _ in range(1000):
        out = box + rng.normal(0.0, std, 4)
        out[[0, 2]] = np.clip(out[[0, 2]], 0.0, cfg.width)
        out[[1, 3]] = np.clip(out[[1, 3]], 0.0, cfg.height)
        if out[2] - out[0] > 1.0 and out[3] - out[1] > 1.0:
            return out
    return box.copy()


def _spurious(rng: np.random.Generator, gt_boxes: np.ndarray, cfg: ScenarioConfig, tries: int = 100) -> np.ndarray:
    w, h = _strip(rng, cfg)
    cand = np.column_stack([rng.uniform(0, cfg.width - w, tries), rng.uniform(0, cfg.height - h, tries)])
    cand = np.column_stack([cand, cand + [w, h]])
    if len(gt_boxes) == 0:
        return cand[0]
    worst = iou_matrix(cand, gt_boxes).max(axis=1)
    ok = worst < 0.3
    return cand[np.argmax(ok)] if ok.any() else cand[np.argmin(worst)]


def _box(arr) -> Box:
    return Box(*(float(v) for v in arr))


def generate_image(rng: np.random.Generator, cfg: ScenarioConfig, image_id: str) -> SyntheticImage:
    gt_boxes = _place_gts(rng, cfg)
    base = _color(gt_boxes) * cfg.push_delta
    gts = [LabeledBox(_box(b), i) for i, b in enumerate(gt_boxes)]

    boxes, scores, embs, truth = [], [], [], []
    for i, g in enumerate(gt_boxes):
        if rng.random() < cfg.fn_rate:
            continue
        s = rng.uniform(0.5, 1.0)
        boxes.append(_jitter(rng, g, cfg.jitter, cfg))
        scores.append(s)
        embs.append(base[i] + rng.normal(0.0, cfg.embedding_noise))
        truth.append(i)
        if rng.random() < cfg.duplicate_rate:
            boxes.append(_jitter(rng, g, cfg.jitter, cfg))
            scores.append(s * rng.uniform(0.3, 0.9))
            embs.append(base[i] + rng.normal(0.0, cfg.embedding_noise))
            truth.append(i)
    lo = float(base.min()) - cfg.push_delta if len(base) else 0.0
    hi = float(base.max()) + cfg.push_delta if len(base) else 1.0
    for _ in range(rng.binomial(cfg.n_gts, cfg.fp_rate)):
        boxes.append(_spurious(rng, gt_boxes, cfg))
        scores.append(rng.uniform(0.0, 0.8))
        embs.append(rng.uniform(lo, hi))
        truth.append(None)

    perm = rng.permutation(len(boxes))
    dets = [Detection(_box(boxes[k]), float(scores[k]), float(embs[k])) for k in perm]
    return SyntheticImage(image_id, cfg.width, cfg.height, gts, dets, [truth[k] for k in perm])


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    rng = np.random.default_rng(cfg.seed)
    images = [generate_image(rng, cfg, f"synth-{cfg.seed}-{k:04d}") for k in range(cfg.n_images)]
    return Scenario(cfg, images)


def overlap_fraction(intensity: float, seeds: Sequence[int], **overrides) -> np.ndarray:
    """Overlapping-subset fraction for each seed at one overlap intensity."""
    out = []
    for seed in seeds:
        cfg = ScenarioConfig(seed=seed, overlap=intensity, **overrides)
        out.append(generate_scenario(cfg).achieved_overlap)
    return np.array(out)


def calibrate_overlap(
    target: float = 0.10,
    seeds: Sequence[int] = range(50),
    iters: int = 12,
    **overrides,
) -> float:
    """
    Bisect the overlap intensity whose mean subset fraction over ``seeds`` hits ``target``.

    Raises InfeasibleConfigError when the target lies outside what intensities
    0 and 1 achieve.
    """
    lo, hi = 0.0, 1.0
    f_lo = overlap_fraction(lo, seeds, **overrides).mean()
    f_hi = overlap_fraction(hi, seeds, **overrides).mean()
    if not f_lo <= target <= f_hi:
        raise InfeasibleConfigError(
            f"target fraction {target} outside achievable range [{f_lo:.3f}, {f_hi:.3f}]"
        )
    for _ in range(iters):
        mid = (lo + hi) / 2
        if overlap_fraction(mid, seeds, **overrides).mean() < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def config_dict(cfg: ScenarioConfig) -> dict:
    d = asdict(cfg)
    d["area_range"] = list(d["area_range"])
    return d
