"""
Command-line entry point: ``chromodet <command> ...`` or ``python -m chromodet``.

Exit codes: 0 ok, 2 schema violation, 3 image-id mismatch, 4 missing
embeddings, 5 infeasible configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import anchors as anc
from . import io
from .geometry import Box, as_array, iou_matrix
from .losses import LossWeights, ProposalTriple, build_triples, combine, repulsion_loss, shift_curve, tnrl
from .metrics import evaluate
from .nms import ALGORITHMS, MissingEmbeddingError, NmsConfig, run_nms
from .synth import InfeasibleConfigError, ScenarioConfig, generate_scenario
from .template import MASK_KINDS, GroupedEmbeddings, pull_loss, push_terms, template_masks

log = logging.getLogger("chromodet")

EXIT_OK, EXIT_SCHEMA, EXIT_IDS, EXIT_EMBEDDING, EXIT_CONFIG = 0, 2, 3, 4, 5
WORKERS_ENV = "CHROMODET_WORKERS"


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _workers(flag) -> int:
    if flag is not None:
        return flag
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _override(settings: io.Settings, args, *names):
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            setattr(settings, name, v)
    return settings


# -- commands -----------------------------------------------------------------

def cmd_evaluate(args) -> int:
    s = _override(io.load_settings(args.config), args, "iou_thresh", "tau", "score_thresh")
    gt = io.load_corpus(args.gt_path, require="gt_boxes")
    det = io.load_corpus(args.det_path, require="detections")
    ids, gts, dets = io.align(gt, det)
    report = evaluate(
        dets, gts, s.iou_thresh, s.tau, s.score_thresh, greedy=args.greedy, workers=_workers(args.workers)
    )
    doc = report.to_dict(ids)
    doc["settings"] = {"iou_thresh": s.iou_thresh, "tau": s.tau, "score_thresh": s.score_thresh}
    if args.report == "json":
        _emit(io.dumps(doc), args.out)
    else:
        lines = [f"{k:>10s}  {doc[k]:.6f}" for k in ("wcr", "aer", "acc", "f1", "precision", "recall", "ap", "mr2")]
        sub = doc["overlap_subset"]
        lines.append(f"overlapping subset: {sub['n_subset']}/{sub['n_gt']} ground truths")
        lines += [f"{k:>10s}  {sub[k]:.6f}" for k in ("precision", "recall", "acc", "f1")]
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_nms_run(args) -> int:
    s = _override(io.load_settings(args.config), args, "sigma", "delta", "top_k", "hard_iou_thresh", "score_floor")
    cfg = NmsConfig(s.sigma, s.delta, s.hard_iou_thresh, s.score_floor, s.top_k)
    corpus = io.load_corpus(args.det_path, require="detections")
    out = []
    for im in corpus.images:
        kept = run_nms(im.detections, args.algo, cfg)
        out.append(io.CorpusImage(im.image_id, im.width, im.height, None, kept))
    _emit(io.dumps(io.corpus_dict(out)), args.out)
    return EXIT_OK


def cmd_synth_gen(args) -> int:
    s = io.load_settings(args.config_path)
    params = dict(s.scenario)
    params["seed"] = args.seed
    params.setdefault("push_delta", s.push_delta)
    try:
        cfg = ScenarioConfig(**params)
    except TypeError as exc:
        raise io.ConfigError(f"bad [scenario] table: {exc}") from None
    scen = generate_scenario(cfg)
    gt_images = [io.CorpusImage(im.image_id, im.width, im.height, im.gts, None) for im in scen.images]
    det_doc = {"images": []}
    for im in scen.images:
        det_doc["images"].append({
            "image_id": im.image_id,
            "width": im.width,
            "height": im.height,
            "detections": [
                io.detection_dict(d, {"gt_index": t}) for d, t in zip(im.dets, im.det_truth)
            ],
        })
    io.write_json(args.out_gt, io.corpus_dict(gt_images))
    io.write_json(args.out_det, det_doc)
    log.info("achieved overlap fraction %.4f", scen.achieved_overlap)
    return EXIT_OK


def cmd_sample_anchors(args) -> int:
    s = io.load_settings(args.config_path)
    corpus = io.load_corpus(args.gt_path, require="gt_boxes")
    summary = []
    for k, im in enumerate(corpus.images):
        acfg = dict(s.anchors)
        acfg.setdefault("width", im.width)
        acfg.setdefault("height", im.height)
        try:
            cfg = anc.AnchorConfig(**acfg)
        except TypeError as exc:
            raise io.ConfigError(f"bad [anchors] table: {exc}") from None
        if not im.gt_boxes:
            summary.append({"image_id": im.image_id, "skipped": "no ground truths"})
            continue
        labels = anc.label_anchors(anc.generate_anchors(cfg), im.gt_boxes, args.criterion)
        batch = anc.hnas_sample(labels, [args.seed, k], s.batch)
        pos, hard, easy = batch.sizes
        summary.append({
            "image_id": im.image_id,
            "n_anchors": len(labels),
            "available": labels.counts(),
            "sampled": {"positive": pos, "hard_negative": hard, "easy_negative": easy},
            "shortfall": batch.shortfall,
        })
    doc = {"criterion": args.criterion, "batch": s.batch, "seed": args.seed, "images": summary}
    _emit(io.dumps(doc), args.out)
    return EXIT_OK


def _image_losses(gts, dets, s: io.Settings):
    """Triples plus grouping-loss pieces for one image's positive detections."""
    gt_boxes = as_array(gts)
    triples = build_triples(dets, gts, pos_iou=s.iou_thresh)
    if not dets or not len(gt_boxes):
        return triples, [], np.zeros(0)
    m = iou_matrix(dets, gt_boxes)
    best = np.argmax(m, axis=1)
    pos = m[np.arange(len(dets)), best] >= s.iou_thresh
    with_emb = np.array([d.embedding is not None for d in dets])
    keep = pos & with_emb
    emb = np.array([d.embedding if d.embedding is not None else 0.0 for d in dets])
    groups = GroupedEmbeddings.from_assignment(emb[keep], best[keep], len(gts))
    terms = push_terms(groups, gts, s.push_delta, skip_empty=True)
    return triples, groups.groups, terms


def cmd_loss_eval(args) -> int:
    s = io.load_settings(args.config)
    if args.triples:
        doc = json.loads(Path(args.triples).read_text(encoding="utf-8"), parse_constant=io._reject_constant)
        try:
            triples = [
                ProposalTriple(
                    Box.from_seq(t["predicted"]),
                    Box.from_seq(t["attract"]),
                    None if t.get("repulse") is None else Box.from_seq(t["repulse"]),
                )
                for t in doc["triples"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise io.SchemaError(f"bad triple file: {exc}", "$.triples") from None
        out = {
            "n_triples": len(triples),
            "rl": repulsion_loss(triples, s.smooth_sigma) if triples else 0.0,
            "tnrl": tnrl(triples, s.smooth_sigma) if triples else 0.0,
        }
        _emit(io.dumps(out), args.out)
        return EXIT_OK

    if not (args.gt_path and args.det_path):
        raise io.SchemaError("loss-eval needs GT and detection files, or --triples")
    gt = io.load_corpus(args.gt_path, require="gt_boxes")
    det = io.load_corpus(args.det_path, require="detections")
    _, gts_per_image, dets_per_image = io.align(gt, det)
    triples, groups, terms = [], [], []
    for gts, dets in zip(gts_per_image, dets_per_image):
        t, g, p = _image_losses(gts, dets, s)
        triples += t
        groups += g
        terms.append(p)
    terms = np.concatenate(terms) if terms else np.zeros(0)
    grouped = GroupedEmbeddings(groups)
    out = {
        "n_positive": len(triples),
        "rl": repulsion_loss(triples, s.smooth_sigma) if triples else 0.0,
        "tnrl": tnrl(triples, s.smooth_sigma) if triples else 0.0,
        "pull": pull_loss(grouped, s.theta, s.lam) if grouped.n_total else 0.0,
        "push": float(terms.mean()) if terms.size else 0.0,
        "n_push_pairs": int(terms.size),
    }
    out["total"] = combine(
        args.det_loss, out["pull"], out["push"], out["tnrl"], LossWeights(s.alpha, s.beta, s.gamma)
    )
    _emit(io.dumps(out), args.out)
    return EXIT_OK


def cmd_masks_dump(args) -> int:
    masks = template_masks()
    doc = {"order": list(MASK_KINDS), "masks": {k: masks[k].reshape(-1).tolist() for k in MASK_KINDS}}
    io.write_json(args.out_path, doc)
    return EXIT_OK


def cmd_shift_curve(args) -> int:
    s = io.load_settings(args.config)
    shift_curve(args.overlap, args.steps, s.smooth_sigma).to_csv(args.out_csv)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chromodet", description="Chromosome-detection post-processing, losses and metrics.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("evaluate", help="score detections against ground truth")
    e.add_argument("gt_path")
    e.add_argument("det_path")
    e.add_argument("--iou-thresh", type=float, dest="iou_thresh")
    e.add_argument("--tau", type=float)
    e.add_argument("--score-thresh", type=float, dest="score_thresh",
                   help="confidence cut for the counting metrics (default 0)")
    e.add_argument("--greedy", action="store_true", help="COCO-style greedy matching instead of per-GT best score")
    e.add_argument("--report", choices=("json", "text"), default="json")
    e.add_argument("--workers", type=int, help=f"matching threads (default ${WORKERS_ENV} or 1)")
    e.add_argument("--config")
    e.add_argument("-o", "--out")
    e.set_defaults(func=cmd_evaluate)

    n = sub.add_parser("nms-run", help="post-process a detection file")
    n.add_argument("det_path")
    n.add_argument("--algo", choices=ALGORITHMS, required=True)
    n.add_argument("--sigma", type=float)
    n.add_argument("--delta", type=float)
    n.add_argument("--top-k", type=int, dest="top_k")
    n.add_argument("--iou-thresh", type=float, dest="hard_iou_thresh")
    n.add_argument("--score-floor", type=float, dest="score_floor")
    n.add_argument("--config")
    n.add_argument("-o", "--out")
    n.set_defaults(func=cmd_nms_run)

    g = sub.add_parser("synth-gen", help="write a synthetic ground-truth/detection pair")
    g.add_argument("config_path")
    g.add_argument("out_gt")
    g.add_argument("out_det")
    g.add_argument("--seed", type=int, required=True)
    g.set_defaults(func=cmd_synth_gen)

    a = sub.add_parser("sample-anchors", help="label anchors and draw one HNAS batch per image")
    a.add_argument("config_path")
    a.add_argument("gt_path")
    a.add_argument("--criterion", choices=sorted(anc.CRITERIA), default="v2")
    a.add_argument("--seed", type=int, required=True)
    a.add_argument("-o", "--out")
    a.set_defaults(func=cmd_sample_anchors)

    l = sub.add_parser("loss-eval", help="repulsion and grouping losses for a detection set")
    l.add_argument("gt_path", nargs="?")
    l.add_argument("det_path", nargs="?")
    l.add_argument("--triples", help="JSON file of {predicted, attract, repulse} triples")
    l.add_argument("--det-loss", type=float, default=0.0, dest="det_loss")
    l.add_argument("--config")
    l.add_argument("-o", "--out")
    l.set_defaults(func=cmd_loss_eval)

    m = sub.add_parser("masks-dump", help="write the five template masks")
    m.add_argument("out_path")
    m.set_defaults(func=cmd_masks_dump)

    c = sub.add_parser("shift-curve", help="RL vs TNRL as a box slides between two ground truths")
    c.add_argument("--overlap", type=float, required=True, help="IoU between the two ground truths")
    c.add_argument("out_csv")
    c.add_argument("--steps", type=int, default=100)
    c.add_argument("--config")
    c.set_defaults(func=cmd_shift_curve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except io.SchemaError as exc:
        log.error("schema error: %s", exc)
        return EXIT_SCHEMA
    except io.IdMismatchError as exc:
        log.error("%s", exc)
        return EXIT_IDS
    except MissingEmbeddingError as exc:
        log.error("%s", exc)
        return EXIT_EMBEDDING
    except (io.ConfigError, InfeasibleConfigError, ValueError) as exc:
        log.error("infeasible configuration: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
