"""
Acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible in ``pytest -v``
output) before asserting, so the summary survives even when an assertion
fails. Run alone with::

    pytest tests/test_acceptance.py -v
"""

import math
import time
import warnings

import numpy as np
import pytest
from scipy.stats import chisquare, spearmanr

from conftest import det, gt_list, random_corpus
from chromodet.anchors import AnchorLabels, Stratum, hnas_sample, stratify
from chromodet.geometry import Box, iou
from chromodet.losses import (
    ProposalTriple,
    normalized_iog,
    shift_curve,
    tnrl_term,
    tnrl_term_grad,
    tnrl_value,
)
from chromodet.metrics import average_precision, evaluate, log_average_miss_rate
from chromodet.nms import eg_decayed_score, eg_nms_trace, embedding_guided_nms
from chromodet.oracles import oracle_ap, oracle_eg_nms, oracle_mr
from chromodet.synth import ScenarioConfig, calibrate_overlap, generate_scenario, overlap_fraction
from chromodet.template import (
    AllIsolatedWarning,
    GroupedEmbeddings,
    pull_loss,
    pull_loss_grad,
    push_loss,
    push_loss_grad_embeddings,
    template_masks,
)


@pytest.fixture
def say(capsys):
    def _say(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")
        return ok

    return _say


# 1 ---------------------------------------------------------------------------

def test_c1_metric_oracles(say):
    t0 = time.perf_counter()
    worst_ap = worst_mr = 0.0
    for seed in range(1000):
        dets, gts = random_corpus(np.random.default_rng(seed), max_dets=50, max_gts=20)
        worst_ap = max(worst_ap, abs(average_precision(dets, gts) - oracle_ap(dets, gts)))
        worst_mr = max(worst_mr, abs(log_average_miss_rate(dets, gts) - oracle_mr(dets, gts)))
    elapsed = time.perf_counter() - t0
    ok = worst_ap < 1e-9 and worst_mr < 1e-9 and elapsed < 30
    say(1, ok, f"1000 corpora, max |dAP|={worst_ap:.1e}, max |dMR|={worst_mr:.1e}, {elapsed:.1f}s (< 30s)")
    assert ok


# 2 ---------------------------------------------------------------------------

def _eg_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 41))
    xy = rng.uniform(0, 80, (n, 2))
    boxes = np.c_[xy, xy + rng.uniform(3, 40, (n, 2))]
    return boxes, rng.uniform(size=n), rng.normal(0, 1, n)


def test_c2_eg_nms_fidelity(say):
    mismatches = 0
    for seed in range(1000):
        boxes, scores, emb = _eg_instance(seed)
        order, s = eg_nms_trace(boxes, scores, emb)
        d_ref, s_ref = oracle_eg_nms(boxes.tolist(), scores.tolist(), emb.tolist())
        mismatches += order != d_ref or [s[i] for i in order] != s_ref
    worked = []
    for d, expected in ((0.0, 0.616357016905265), (2.0, 0.700418377254419)):
        out = embedding_guided_nms([det([0, 0, 10, 10], 0.9, 0.0), det([5, 0, 15, 10], 0.8, d)], prune=False)
        worked.append(abs(out[1].score - expected))
    ok = mismatches == 0 and max(worked) < 1e-6
    say(2, ok, f"{mismatches}/1000 instances differ from the transcription; worked trace error {max(worked):.1e}")
    assert ok


# 3 ---------------------------------------------------------------------------

def test_c3_eg_monotone_in_distance(say):
    rng = np.random.default_rng(3)
    violations = 0
    for _ in range(10_000):
        xy = rng.uniform(0, 20, (2, 2))
        b1, b2 = (Box(x, y, x + rng.uniform(2, 20), y + rng.uniform(2, 20)) for x, y in xy)
        o, s = iou(b1, b2), rng.uniform(0.01, 1)
        d1, d2 = np.sort(rng.uniform(0, 4, 2))
        violations += eg_decayed_score(s, o, d1) > eg_decayed_score(s, o, d2)
    ok = violations == 0
    say(3, ok, f"{violations} decreasing pairs in 10^4 samples")
    assert ok


# 4 ---------------------------------------------------------------------------

def _tnrl_bounds():
    rng = np.random.default_rng(4)
    g, r = Box(0, 0, 10, 10), Box(5, 0, 15, 10)
    in_range = True
    for _ in range(2000):
        x, y = rng.uniform(-20, 20, 2)
        v = tnrl_value(ProposalTriple(Box(x, y, x + rng.uniform(1, 30), y + rng.uniform(1, 30)), g, r))
        in_range &= 0.0 <= v <= 1.0
    at_g = tnrl_value(ProposalTriple(g, g, r))
    at_r = tnrl_value(ProposalTriple(r, g, r))
    nested = tnrl_value(ProposalTriple(Box(3, 3, 9, 9), Box(0, 0, 20, 20), Box(5, 5, 8, 8)))
    return in_range, at_g, at_r, nested


def test_c4a_tnrl_bounds(say):
    t0 = time.perf_counter()
    in_range, at_g, at_r, nested = _tnrl_bounds()
    for o in (0.3, 0.5, 0.7):
        shift_curve(o)
    elapsed = time.perf_counter() - t0
    ok = in_range and at_g == 0.0 and at_r == 1.0 and nested == 0.0 and elapsed < 1.0
    say("4a", ok, f"value in [0,1]: {in_range}; B=G -> {at_g}; B=R -> {at_r}; R inside G -> {nested}; {elapsed:.2f}s")
    assert ok


def test_c4b_tnrl_above_rl_on_shift_curve(say):
    # Checked exactly as stated. The normalized IoG is (x - c) / (1 - c) with
    # c = IoG(G, R) >= 0, which never exceeds x = IoG(B, R) for x <= 1, so this
    # cannot hold on any interior shift whenever G and R overlap.
    worst = []
    for o in (0.3, 0.5, 0.7):
        c = shift_curve(o, steps=100)
        inner = slice(1, -1)
        worst.append(float(np.min(c.tnrl[inner] - c.rl[inner])))
    ok = all(w >= 0 for w in worst)
    say("4b", ok, "TNRL >= RL on shift in (0,1): min(TNRL - RL) = " + ", ".join(f"{w:.3f}" for w in worst)
        + " at overlap 0.3/0.5/0.7")
    assert ok


def test_c4c_tnrl_wider_range_on_shift_curve(say):
    spans = []
    for o in (0.3, 0.5, 0.7):
        c = shift_curve(o)
        spans.append((np.ptp(c.rl), np.ptp(c.tnrl)))
    ok = all(t > r for r, t in spans)
    say("4c", ok, "TNRL spans more than RL along the shift: "
        + ", ".join(f"RL {r:.3f} vs TNRL {t:.3f}" for r, t in spans))
    assert ok


# 5 ---------------------------------------------------------------------------

def _fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def _rel(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale < 1e-12 else np.linalg.norm(a - b) / scale


def _grouped_instance(rng):
    n_gt = int(rng.integers(2, 6))
    xy = np.c_[np.arange(n_gt) * 6.0, np.zeros(n_gt)]
    gts = gt_list(*np.c_[xy, xy + [10, 10]].tolist())  # a chain of overlapping boxes
    sizes = rng.integers(1, 5, n_gt)
    flat = rng.uniform(0, 1.5, sizes.sum())
    return gts, sizes, flat, rng.uniform(0.1, 1), rng.uniform(0.5, 3)


def _split(x, sizes):
    return [a.copy() for a in np.split(x, np.cumsum(sizes)[:-1])]


def _active_triple(rng):
    while True:
        g = np.r_[0, 0, rng.uniform(5, 15, 2)]
        r = np.r_[rng.uniform(0, g[2] - 1), rng.uniform(-3, 3), 0, 0]
        r[2:] = r[:2] + rng.uniform(4, 15, 2)
        b = np.r_[rng.uniform(-2, r[2] - 1), rng.uniform(-4, 4), 0, 0]
        b[2:] = b[:2] + rng.uniform(3, 15, 2)
        tri = ProposalTriple(Box.from_seq(b), Box.from_seq(g), Box.from_seq(r))
        v = normalized_iog(tri.predicted, tri.repulse, tri.attract)
        if 0.02 < v < 0.98 and abs(v - 0.5) > 1e-3:
            return tri


def test_c5_gradients(say):
    rng = np.random.default_rng(5)
    pull_err = push_err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AllIsolatedWarning)
        for _ in range(100):
            gts, sizes, flat, theta, lam = _grouped_instance(rng)
            ana = np.concatenate(pull_loss_grad(GroupedEmbeddings(_split(flat, sizes)), theta, lam))
            num = _fd(lambda x: pull_loss(GroupedEmbeddings(_split(x, sizes)), theta, lam), flat)
            pull_err = max(pull_err, _rel(ana, num))
            ana = np.concatenate(push_loss_grad_embeddings(GroupedEmbeddings(_split(flat, sizes)), gts))
            num = _fd(lambda x: push_loss(GroupedEmbeddings(_split(x, sizes)), gts), flat)
            push_err = max(push_err, _rel(ana, num))
    tnrl_err = 0.0
    for _ in range(100):
        tri = _active_triple(rng)
        c = tri.predicted.as_array()

        def f(x):
            return tnrl_term(ProposalTriple(Box.from_seq(x), tri.attract, tri.repulse))

        tnrl_err = max(tnrl_err, _rel(tnrl_term_grad(tri), _fd(f, c)))
    ok = pull_err < 1e-5 and push_err < 1e-5 and tnrl_err < 1e-4
    say(5, ok, f"max rel err pull {pull_err:.1e}, push {push_err:.1e} (< 1e-5); TNRL {tnrl_err:.1e} (< 1e-4)")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_c6_masks(say):
    m = template_masks()
    closed = {
        "D": lambda x, y: math.exp(-((x - y) ** 2) / 3),
        "TD": lambda x, y: math.exp(-((x + y) ** 2) / 3),
        "H": lambda x, y: math.exp(-(y**2) / 3),
        "V": lambda x, y: math.exp(-(x**2) / 3),
        "C": lambda x, y: math.exp(-abs(x**2 + y**2 - 5) / 3),
    }
    err = max(abs(m[k][r, c] - f(r - 3, c - 3)) for k, f in closed.items() for r in range(7) for c in range(7))
    anchors = (
        m["TD"][3, 3] == 1.0
        and abs(m["H"][3, 0] - math.exp(-3)) <= 1e-12
        and abs(m["C"][3, 3] - math.exp(-5 / 3)) <= 1e-12
    )
    sym = (
        np.array_equal(m["D"], m["D"].T)
        and np.array_equal(m["TD"], np.fliplr(m["D"]))
        and np.array_equal(m["TD"], np.flipud(m["D"]))
        and np.array_equal(m["V"], m["H"].T)
        and np.array_equal(m["H"], np.fliplr(m["H"]))
        and np.array_equal(m["C"], m["C"].T)
        and np.array_equal(m["C"], np.fliplr(m["C"]))
    )
    ok = err <= 1e-12 and anchors and sym
    say(6, ok, f"max closed-form error {err:.1e}; spot values {anchors}; symmetries {sym}")
    assert ok


# 7 ---------------------------------------------------------------------------

def _population(n_pos, n_hard, n_easy):
    codes = np.r_[
        np.full(n_pos, Stratum.POSITIVE), np.full(n_hard, Stratum.HARD_NEGATIVE), np.full(n_easy, Stratum.EASY_NEGATIVE)
    ].astype(np.int8)
    n = codes.size
    return AnchorLabels(np.tile([0.0, 0.0, 1.0, 1.0], (n, 1)), np.zeros(n), np.full(n, -1), codes)


def test_c7_hnas(say):
    pop = _population(600, 900, 5000)
    sizes = {hnas_sample(pop, seed).sizes for seed in range(50)}
    v1 = Stratum(stratify(np.array([0.6]), "v1")[0])
    v2 = Stratum(stratify(np.array([0.6]), "v2")[0])
    # uniformity of the positive draw: 80 batches x 128 = 10240 draws over 600 anchors
    counts = np.zeros(600)
    for seed in range(80):
        counts += np.bincount(hnas_sample(pop, 1000 + seed).positive, minlength=600)
    p = chisquare(counts).pvalue
    ok = sizes == {(128, 192, 192)} and v1 is Stratum.HARD_NEGATIVE and v2 is Stratum.IGNORE and p > 0.01
    say(7, ok, f"batch sizes {sorted(sizes)}; IoU 0.6 -> {v1.label} (v1), {v2.label} (v2); "
        f"chi-square p = {p:.3f} over {int(counts.sum())} draws")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_c8_closed_loop(say):
    perfect = []
    for seed in range(10):
        scn = generate_scenario(ScenarioConfig(seed=seed, n_images=2, overlap=0.3))
        rep = evaluate(scn.dets_per_image, scn.gts_per_image)
        perfect.append(rep.wcr == 1.0 and rep.aer == 0.0 and rep.ap == 1.0)
    recalls = []
    for seed in range(10):
        scn = generate_scenario(ScenarioConfig(seed=seed, n_images=2, fn_rate=1.0, fp_rate=0.2))
        recalls.append(evaluate(scn.dets_per_image, scn.gts_per_image).recall)
    ok = all(perfect) and max(recalls) == 0.0
    say(8, ok, f"{sum(perfect)}/10 clean scenarios exactly perfect; fn_rate=1 max recall {max(recalls)}")
    assert ok


# 9 ---------------------------------------------------------------------------

def test_c9_overlap_subset(say):
    seeds = range(50)
    grid = [0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0]
    xs, ys, means = [], [], []
    for g in grid:
        f = overlap_fraction(g, seeds)
        xs += [g] * len(f)
        ys += f.tolist()
        means.append(f.mean())
    rho = spearmanr(xs, ys).statistic
    monotone = all(np.diff(means) > 0)
    intensity = calibrate_overlap(0.10, seeds)
    calibrated = overlap_fraction(intensity, seeds).mean()
    ok = rho > 0.9 and monotone and 0.08 <= calibrated <= 0.12
    say(9, ok, f"Spearman rho {rho:.3f} over {len(xs)} (intensity, fraction) pairs; "
        f"calibrated intensity {intensity:.4f} gives mean fraction {calibrated:.4f}")
    assert ok
