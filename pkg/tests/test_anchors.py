import numpy as np
import pytest

from conftest import gt_list
from chromodet.anchors import (
    AnchorConfig,
    AnchorLabels,
    Stratum,
    base_shapes,
    generate_anchors,
    hnas_counts,
    hnas_sample,
    label_anchors,
    stratify,
)


def test_single_shapes():
    cfg = AnchorConfig(width=8, height=8, stride=8, areas=[32.0**2], aspect_ratios=[1.0])
    a = generate_anchors(cfg)
    assert a.shape == (1, 4)
    assert np.allclose(a[0], [4 - 16, 4 - 16, 4 + 16, 4 + 16])

    cfg = AnchorConfig(width=8, height=8, stride=8, areas=[64.0**2], aspect_ratios=[4.0])
    w, h = base_shapes(cfg)[0]
    assert (w, h) == pytest.approx((128.0, 32.0))


def test_default_count():
    cfg = AnchorConfig()
    assert cfg.per_location == 36
    assert cfg.grid_shape == (150, 200)
    assert len(generate_anchors(cfg)) == 200 * 150 * 36


def test_shapes_match_config():
    cfg = AnchorConfig(width=64, height=48)
    a = generate_anchors(cfg).reshape(-1, cfg.per_location, 4)
    w = a[..., 2] - a[..., 0]
    h = a[..., 3] - a[..., 1]
    expected = [(ar, r) for ar in cfg.areas for r in cfg.aspect_ratios]
    for k, (ar, r) in enumerate(expected):
        assert np.all(np.abs(w[:, k] * h[:, k] / ar - 1) < 1e-9)
        assert np.all(np.abs((w[:, k] / h[:, k]) / r - 1) < 1e-9)
    # centres on stride * (i + 0.5)
    cx = (a[..., 0] + a[..., 2]) / 2
    assert np.allclose(np.unique(np.round(cx, 9)), 8 * (np.arange(8) + 0.5))


def test_empty_config_rejected():
    with pytest.raises(ValueError):
        AnchorConfig(areas=[])
    with pytest.raises(ValueError):
        AnchorConfig(aspect_ratios=[])


@pytest.mark.parametrize(
    "iou, v1, v2",
    [
        (0.05, Stratum.EASY_NEGATIVE, Stratum.EASY_NEGATIVE),
        (0.1, Stratum.EASY_NEGATIVE, Stratum.HARD_NEGATIVE),
        (0.3, Stratum.HARD_NEGATIVE, Stratum.HARD_NEGATIVE),
        (0.5, Stratum.HARD_NEGATIVE, Stratum.IGNORE),
        (0.6, Stratum.HARD_NEGATIVE, Stratum.IGNORE),
        (0.7, Stratum.POSITIVE, Stratum.POSITIVE),
        (0.95, Stratum.POSITIVE, Stratum.POSITIVE),
    ],
)
def test_interval_labels(iou, v1, v2):
    assert stratify(np.array([iou]), "v1")[0] == v1
    assert stratify(np.array([iou]), "v2")[0] == v2


def _unit_anchors_with_iou(values):
    """Anchors [0,0,w,1] against GT [0,0,1,1]: IoU = w for w <= 1."""
    return np.array([[0.0, 0.0, v, 1.0] for v in values])


def test_label_anchors_per_gt_best_positive():
    anchors = _unit_anchors_with_iou([0.05, 0.3, 0.6])
    labels = label_anchors(anchors, gt_list([0, 0, 1, 1]), "v2")
    assert labels.max_iou == pytest.approx([0.05, 0.3, 0.6])
    # no anchor reaches 0.7 so the best one (0.6) is forced positive
    assert [Stratum(s) for s in labels.stratum] == [Stratum.EASY_NEGATIVE, Stratum.HARD_NEGATIVE, Stratum.POSITIVE]
    rec = labels[2]
    assert rec.stratum is Stratum.POSITIVE and rec.best_gt == 0


def test_label_anchors_partition_and_every_gt_positive():
    rng = np.random.default_rng(3)
    cfg = AnchorConfig(width=320, height=240, stride=16)
    anchors = generate_anchors(cfg)
    xy = rng.uniform(0, 200, (6, 2))
    gts = gt_list(*np.c_[xy, xy + rng.uniform(10, 90, (6, 2))].tolist())
    for crit in ("v1", "v2"):
        labels = label_anchors(anchors, gts, crit, chunk=997)
        assert sum(labels.counts().values()) == len(anchors)
        pos = labels.stratum == Stratum.POSITIVE
        assert set(labels.best_gt[pos]) >= set(range(6))


def test_label_anchors_needs_gt():
    with pytest.raises(ValueError):
        label_anchors(np.zeros((1, 4)) + [0, 0, 1, 1], [])


def _population(n_pos, n_hard, n_easy, n_ignore=0):
    codes = [Stratum.POSITIVE] * n_pos + [Stratum.HARD_NEGATIVE] * n_hard
    codes += [Stratum.EASY_NEGATIVE] * n_easy + [Stratum.IGNORE] * n_ignore
    n = len(codes)
    boxes = np.tile([0.0, 0.0, 1.0, 1.0], (n, 1))
    return AnchorLabels(boxes, np.zeros(n), np.full(n, -1), np.array(codes, dtype=np.int8))


def test_hnas_ample():
    b = hnas_sample(_population(500, 800, 3000, 50), rng_seed=0)
    assert b.sizes == (128, 192, 192)
    assert b.shortfall == 0
    assert len(set(b.all_indices().tolist())) == 512


def test_hnas_deficit_filled_from_easy():
    assert hnas_counts(40, 1000, 1000) == (40, 192, 280)
    b = hnas_sample(_population(40, 800, 3000), rng_seed=1)
    assert b.sizes == (40, 192, 280)


def test_hnas_easy_short_then_hard():
    # 40 pos, hard plenty, only 100 easy: 512 - 40 - 100 = 372 hard
    assert hnas_counts(40, 1000, 100) == (40, 372, 100)
    assert hnas_counts(0, 50, 100) == (0, 50, 100)


def test_hnas_shortfall_reported():
    b = hnas_sample(_population(10, 20, 30), rng_seed=0)
    assert b.sizes == (10, 20, 30)
    assert b.shortfall == 512 - 60


def test_hnas_deterministic():
    pop = _population(500, 800, 3000)
    a = hnas_sample(pop, 42)
    b = hnas_sample(pop, 42)
    for x, y in zip((a.positive, a.hard_negative, a.easy_negative), (b.positive, b.hard_negative, b.easy_negative)):
        assert np.array_equal(x, y)
    assert not np.array_equal(a.easy_negative, hnas_sample(pop, 43).easy_negative)


def test_hnas_batch_size_validation():
    with pytest.raises(ValueError):
        hnas_sample(_population(5, 5, 5), 0, batch_size=100)


def test_hnas_uniform_within_stratum():
    from scipy.stats import chisquare

    pop = _population(200, 300, 1000)
    counts = np.zeros(200)
    for seed in range(80):
        counts += np.bincount(hnas_sample(pop, seed).positive, minlength=200)[:200]
    assert counts.sum() == 80 * 128 >= 1e4
    assert chisquare(counts).pvalue > 0.01
