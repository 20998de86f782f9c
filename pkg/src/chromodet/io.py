"""
JSON corpus files and the key=value configuration file.

Corpus layout::

    {"images": [{"image_id": "a", "width": 1600, "height": 1200,
                 "gt_boxes": [[x1, y1, x2, y2], ...],
                 "detections": [{"bbox": [x1, y1, x2, y2], "score": 0.9,
                                 "embedding": 1.2}, ...]}]}

Ground-truth files need ``gt_boxes``; detection files need ``detections``.
Output is UTF-8 with sorted keys and no NaN/Inf literals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence

import jsonschema

from .geometry import Box, InvalidBoxError, LabeledBox
from .metrics import Detection

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

_BOX = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}
_DET = {
    "type": "object",
    "required": ["bbox", "score"],
    "properties": {
        "bbox": _BOX,
        "score": {"type": "number"},
        "embedding": {"type": ["number", "null"]},
    },
}
CORPUS_SCHEMA = {
    "type": "object",
    "required": ["images"],
    "properties": {
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["image_id", "width", "height"],
                "properties": {
                    "image_id": {"type": "string"},
                    "width": {"type": "integer", "exclusiveMinimum": 0},
                    "height": {"type": "integer", "exclusiveMinimum": 0},
                    "gt_boxes": {"type": "array", "items": _BOX},
                    "detections": {"type": "array", "items": _DET},
                },
            },
        }
    },
}


class SchemaError(ValueError):
    """File does not match the corpus schema; ``where`` is a JSON path."""

    def __init__(self, message: str, where: str = "$"):
        super().__init__(f"{where}: {message}")
        self.where = where


class IdMismatchError(ValueError):
    pass


@dataclass
class CorpusImage:
    image_id: str
    width: int
    height: int
    gt_boxes: Optional[List[LabeledBox]] = field(default_factory=list)
    detections: Optional[List[Detection]] = None


@dataclass
class Corpus:
    images: List[CorpusImage]

    @property
    def ids(self) -> List[str]:
        return [im.image_id for im in self.images]

    def by_id(self) -> dict:
        return {im.image_id: im for im in self.images}


def _reject_constant(name):
    raise SchemaError(f"non-finite literal {name} is not allowed")


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def parse_corpus(doc, require: str = None) -> Corpus:
    """
    Validate a decoded JSON document and build a :class:`Corpus`.

    Args:
        doc: decoded JSON
        require: "gt_boxes" or "detections" to make that field mandatory
    """
    try:
        jsonschema.validate(doc, CORPUS_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(exc.message, _path(exc.absolute_path)) from None
    images, seen = [], set()
    for i, im in enumerate(doc["images"]):
        where = f"$.images[{i}]"
        if im["image_id"] in seen:
            raise SchemaError(f"duplicate image_id {im['image_id']!r}", f"{where}.image_id")
        seen.add(im["image_id"])
        if require and require not in im:
            raise SchemaError(f"missing required field {require!r}", where)
        gts = []
        for j, b in enumerate(im.get("gt_boxes", [])):
            try:
                gts.append(LabeledBox(Box.from_seq(b), j))
            except InvalidBoxError as exc:
                raise SchemaError(str(exc), f"{where}.gt_boxes[{j}]") from None
        dets = None
        if "detections" in im:
            dets = []
            for j, d in enumerate(im["detections"]):
                try:
                    emb = d.get("embedding")
                    dets.append(Detection(Box.from_seq(d["bbox"]), float(d["score"]), None if emb is None else float(emb)))
                except (InvalidBoxError, ValueError) as exc:
                    raise SchemaError(str(exc), f"{where}.detections[{j}]") from None
        images.append(CorpusImage(im["image_id"], im["width"], im["height"], gts, dets))
    return Corpus(images)


def load_corpus(path, require: str = None) -> Corpus:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"), parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    return parse_corpus(doc, require)


def detection_dict(d: Detection, extra: dict = None) -> dict:
    out = {"bbox": d.box.as_list(), "score": d.score}
    if d.embedding is not None:
        out["embedding"] = d.embedding
    if extra:
        out.update(extra)
    return out


def corpus_dict(images: Sequence[CorpusImage]) -> dict:
    out = []
    for im in images:
        entry = {"image_id": im.image_id, "width": im.width, "height": im.height}
        if im.gt_boxes is not None:
            entry["gt_boxes"] = [g.box.as_list() for g in im.gt_boxes]
        if im.detections is not None:
            entry["detections"] = [detection_dict(d) for d in im.detections]
        out.append(entry)
    return {"images": out}


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, allow_nan=False, indent=1) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def align(gt: Corpus, det: Corpus):
    """Pair ground-truth and detection images by id; both files must list the same ids."""
    gt_ids, det_ids = set(gt.ids), set(det.ids)
    if gt_ids != det_ids:
        only_gt = sorted(gt_ids - det_ids)[:3]
        only_det = sorted(det_ids - gt_ids)[:3]
        raise IdMismatchError(f"image ids differ: only in gt {only_gt}, only in detections {only_det}")
    dets = det.by_id()
    gts_per_image = [im.gt_boxes for im in gt.images]
    dets_per_image = [dets[im.image_id].detections or [] for im in gt.images]
    return gt.ids, gts_per_image, dets_per_image


# -- configuration ------------------------------------------------------------

@dataclass
class Settings:
    """Every tunable constant, with the defaults used throughout the package."""

    iou_thresh: float = 0.5
    tau: float = 0.5
    score_thresh: float = 0.0
    sigma: float = 0.5
    delta: float = 0.3
    push_delta: float = 1.0
    theta: float = 0.5
    lam: float = 2.0
    alpha: float = 0.1
    beta: float = 0.1
    gamma: float = 0.5
    smooth_sigma: float = 0.5
    batch: int = 512
    top_k: int = 100
    score_floor: float = 0.001
    hard_iou_thresh: float = 0.5
    anchors: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)


class ConfigError(ValueError):
    pass


def load_settings(path=None) -> Settings:
    """
    Read a TOML key=value file. ``lambda`` is accepted for ``lam``; the
    optional ``[anchors]`` and ``[scenario]`` tables pass through as dicts.
    """
    if path is None:
        return Settings()
    try:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if "lambda" in raw:
        raw["lam"] = raw.pop("lambda")
    known = {f.name for f in fields(Settings)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    s = Settings(**raw)
    for f in fields(Settings):
        v = getattr(s, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"config value {f.name} is not finite")
    if s.batch <= 0 or s.batch % 8:
        raise ConfigError(f"batch must be a positive multiple of 8, got {s.batch}")
    return s
