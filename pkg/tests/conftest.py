import numpy as np
import pytest

from chromodet.geometry import Box, LabeledBox
from chromodet.metrics import Detection


def det(box, score, embedding=None):
    return Detection(Box.from_seq(box), score, embedding)


def gt_list(*rows):
    return [LabeledBox(Box.from_seq(r), i) for i, r in enumerate(rows)]


def random_corpus(rng, max_dets=50, max_gts=20, max_images=4, size=100.0):
    """Small random corpus: boxes scattered so some detections land on ground truths."""
    n_img = int(rng.integers(1, max_images + 1))
    dets_left = int(rng.integers(1, max_dets + 1))
    dets_per_image, gts_per_image = [], []
    for k in range(n_img):
        n_gt = int(rng.integers(0, max_gts // n_img + 1))
        xy = rng.uniform(0, size, (n_gt, 2))
        wh = rng.uniform(5, 30, (n_gt, 2))
        g = np.c_[xy, xy + wh]
        gts_per_image.append(gt_list(*g.tolist()))
        n_det = dets_left if k == n_img - 1 else int(rng.integers(0, dets_left + 1))
        dets_left -= n_det
        rows = []
        for _ in range(n_det):
            if n_gt and rng.random() < 0.7:
                base = g[rng.integers(n_gt)]
                rows.append(base + rng.normal(0, 3, 4))
            else:
                p = rng.uniform(0, size, 2)
                rows.append(np.r_[p, p + rng.uniform(5, 30, 2)])
        dets = []
        for r in rows:
            if r[2] - r[0] < 0.5:
                r[2] = r[0] + 0.5
            if r[3] - r[1] < 0.5:
                r[3] = r[1] + 0.5
            dets.append(det(r.tolist(), float(rng.uniform())))
        dets_per_image.append(dets)
    if sum(len(g) for g in gts_per_image) == 0:
        gts_per_image[0] = gt_list([0, 0, 10, 10])
    return dets_per_image, gts_per_image


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
