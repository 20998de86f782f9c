"""
Template masks, the scalar embedding head, and the pull/push grouping losses.

The five 7x7 masks are Gaussian profiles over centred coordinates
``x = row - 3``, ``y = col - 3``:

    D   exp(-(x - y)^2 / 3)        diagonal
    TD  exp(-(x + y)^2 / 3)        anti-diagonal
    H   exp(-y^2 / 3)              horizontal band
    V   exp(-x^2 / 3)              vertical band
    C   exp(-|x^2 + y^2 - 5| / 3)  ring
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .geometry import repulsion_partners

MASK_KINDS = ("D", "TD", "H", "V", "C")
TILE = 7
CHANNELS = 256
FEATURE_DIM = TILE * TILE * len(MASK_KINDS)  # 245


def template_masks() -> Dict[str, np.ndarray]:
    """The five masks keyed by kind, in the order D, TD, H, V, C."""
    x, y = np.meshgrid(np.arange(TILE) - 3.0, np.arange(TILE) - 3.0, indexing="ij")
    return {
        "D": np.exp(-((x - y) ** 2) / 3.0),
        "TD": np.exp(-((x + y) ** 2) / 3.0),
        "H": np.exp(-(y**2) / 3.0),
        "V": np.exp(-(x**2) / 3.0),
        "C": np.exp(-np.abs(x**2 + y**2 - 5.0) / 3.0),
    }


def mask_stack() -> np.ndarray:
    """(5, 7, 7) masks stacked in concatenation order."""
    masks = template_masks()
    return np.stack([masks[k] for k in MASK_KINDS])


_MASKS = mask_stack()


@dataclass
class EmbeddingHead:
    """
    1x1 channel fusion followed by a 245 -> 1 projection.

    Serialized as a flat vector of 503 floats: fuse weights (256), fuse bias,
    project weights (245), project bias.
    """

    fuse_weight: np.ndarray
    fuse_bias: float
    project_weight: np.ndarray
    project_bias: float

    def __post_init__(self):
        self.fuse_weight = np.asarray(self.fuse_weight, dtype=float).reshape(-1)
        self.project_weight = np.asarray(self.project_weight, dtype=float).reshape(-1)
        self.fuse_bias = float(self.fuse_bias)
        self.project_bias = float(self.project_bias)
        if self.fuse_weight.shape != (CHANNELS,):
            raise ValueError(f"fuse weights must have {CHANNELS} entries, got {self.fuse_weight.size}")
        if self.project_weight.shape != (FEATURE_DIM,):
            raise ValueError(f"project weights must have {FEATURE_DIM} entries, got {self.project_weight.size}")

    @classmethod
    def random(cls, seed, bias: bool = False) -> "EmbeddingHead":
        """He-normal initialized head."""
        rng = np.random.default_rng(seed)
        fw = rng.normal(0.0, np.sqrt(2.0 / CHANNELS), CHANNELS)
        pw = rng.normal(0.0, np.sqrt(2.0 / FEATURE_DIM), FEATURE_DIM)
        fb, pb = (rng.normal(0.0, 0.1, 2) if bias else (0.0, 0.0))
        return cls(fw, fb, pw, pb)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.fuse_weight, [self.fuse_bias], self.project_weight, [self.project_bias]])

    @classmethod
    def from_vector(cls, vec) -> "EmbeddingHead":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.size != CHANNELS + 1 + FEATURE_DIM + 1:
            raise ValueError(f"expected {CHANNELS + FEATURE_DIM + 2} values, got {vec.size}")
        return cls(vec[:CHANNELS], vec[CHANNELS], vec[CHANNELS + 1:-1], vec[-1])

    def save(self, path) -> None:
        """JSON array for ``.json`` paths, little-endian float64 otherwise."""
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(json.dumps(self.to_vector().tolist()))
        else:
            self.to_vector().astype("<f8").tofile(path)

    @classmethod
    def load(cls, path) -> "EmbeddingHead":
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_vector(json.loads(path.read_text()))
        return cls.from_vector(np.fromfile(path, dtype="<f8"))


def fuse(tile: np.ndarray, head: EmbeddingHead) -> np.ndarray:
    """Rectified 1x1 channel fusion: (..., 7, 7, 256) -> (..., 7, 7)."""
    return np.maximum(tile @ head.fuse_weight + head.fuse_bias, 0.0)


def mask_features(fused: np.ndarray) -> np.ndarray:
    """Weight a fused map by each mask and concatenate: (..., 7, 7) -> (..., 245)."""
    weighted = fused[..., None, :, :] * _MASKS
    return weighted.reshape(*fused.shape[:-2], FEATURE_DIM)


def embed(tile: np.ndarray, head: EmbeddingHead) -> float:
    tile = np.asarray(tile, dtype=float)
    if tile.shape != (TILE, TILE, CHANNELS):
        raise ValueError(f"feature tile must be {(TILE, TILE, CHANNELS)}, got {tile.shape}")
    return float(mask_features(fuse(tile, head)) @ head.project_weight + head.project_bias)


def embed_batch(tiles: np.ndarray, head: EmbeddingHead) -> np.ndarray:
    """Embeddings for an (N, 7, 7, 256) stack of tiles."""
    tiles = np.asarray(tiles, dtype=float)
    if tiles.shape[1:] != (TILE, TILE, CHANNELS):
        raise ValueError(f"feature tiles must be (N, 7, 7, 256), got {tiles.shape}")
    return mask_features(fuse(tiles, head)) @ head.project_weight + head.project_bias


# -- grouping losses ----------------------------------------------------------

class AllIsolatedWarning(UserWarning):
    """Push loss evaluated where no ground truth overlaps another."""


@dataclass
class GroupedEmbeddings:
    """Embeddings of positive proposals grouped by assigned ground truth."""

    groups: List[np.ndarray]

    def __post_init__(self):
        self.groups = [np.asarray(g, dtype=float).reshape(-1) for g in self.groups]

    @classmethod
    def from_assignment(cls, embeddings, assigned_gt, n_gt: int) -> "GroupedEmbeddings":
        embeddings = np.asarray(embeddings, dtype=float)
        assigned_gt = np.asarray(assigned_gt)
        return cls([embeddings[assigned_gt == j] for j in range(n_gt)])

    def __len__(self):
        return len(self.groups)

    @property
    def n_total(self) -> int:
        return sum(g.size for g in self.groups)

    @property
    def means(self) -> np.ndarray:
        return np.array([g.mean() if g.size else np.nan for g in self.groups])


def _residuals(g: np.ndarray) -> np.ndarray:
    # anchored on g[0] so a constant group gives exact zeros
    shifted = g - g[0]
    return shifted - shifted.mean()


def _check_pull(groups: GroupedEmbeddings) -> int:
    n = groups.n_total
    if n == 0:
        raise ValueError("pull loss needs at least one embedding")
    return n


def pull_loss(groups: GroupedEmbeddings, theta: float = 0.5, lam: float = 2.0) -> float:
    """Focal-weighted mean squared deviation from each group's mean."""
    n = _check_pull(groups)
    total = 0.0
    for g in groups.groups:
        if g.size == 0:
            continue
        dev = np.abs(_residuals(g))
        total += np.sum((theta + dev) ** lam * dev**2)
    return float(total / n)


def pull_loss_grad(groups: GroupedEmbeddings, theta: float = 0.5, lam: float = 2.0) -> List[np.ndarray]:
    """d pull_loss / d e for every embedding, shaped like ``groups.groups``."""
    n = _check_pull(groups)
    grads = []
    for g in groups.groups:
        if g.size == 0:
            grads.append(np.zeros(0))
            continue
        r = _residuals(g)
        u = np.abs(r)
        # d/du of (theta + u)^lam * u^2; zero at u = 0 whatever the sign convention
        with np.errstate(divide="ignore", invalid="ignore"):
            df = np.where(
                u > 0,
                lam * (theta + u) ** (lam - 1) * u**2 + 2 * u * (theta + u) ** lam,
                0.0,
            )
        v = df * np.sign(r)
        # r_i depends on e_k through (delta_ik - 1/n_j)
        grads.append((v - v.mean()) / n)
    return grads


def _push_pairs(groups: GroupedEmbeddings, gts: Sequence, skip_empty: bool = False):
    if len(groups) != len(gts):
        raise ValueError(f"{len(groups)} embedding groups for {len(gts)} ground truths")
    pairs = [(i, j) for i, j in enumerate(repulsion_partners(gts)) if j is not None]
    empty = [k for k in range(len(groups)) if groups.groups[k].size == 0]
    if skip_empty:
        return [(i, j) for i, j in pairs if i not in empty and j not in empty]
    for i, j in pairs:
        if i in empty or j in empty:
            raise ValueError(f"ground truth {i if i in empty else j} has no embeddings")
    return pairs


def push_terms(groups: GroupedEmbeddings, gts: Sequence, delta: float = 1.0, skip_empty: bool = False) -> np.ndarray:
    """
    Hinge term for each non-isolated ground truth.

    ``skip_empty`` drops pairs where either side has no embeddings instead
    of raising.
    """
    m = groups.means
    pairs = _push_pairs(groups, gts, skip_empty)
    return np.array([max(delta - abs(m[i] - m[j]), 0.0) for i, j in pairs])


def push_loss(groups: GroupedEmbeddings, gts: Sequence, delta: float = 1.0) -> float:
    """
    Hinge on the mean-embedding gap between each ground truth and its repulsion partner.

    Averaged over non-isolated ground truths. Returns 0 and emits
    :class:`AllIsolatedWarning` when every ground truth is isolated.
    """
    terms = push_terms(groups, gts, delta)
    if terms.size == 0:
        warnings.warn("every ground truth is isolated; push loss is 0", AllIsolatedWarning, stacklevel=2)
        return 0.0
    return float(terms.mean())


def push_loss_grad(groups: GroupedEmbeddings, gts: Sequence, delta: float = 1.0) -> np.ndarray:
    """d push_loss / d (group mean), one entry per ground truth."""
    pairs = _push_pairs(groups, gts)
    grad = np.zeros(len(groups))
    if not pairs:
        return grad
    m = groups.means
    for i, j in pairs:
        gap = m[i] - m[j]
        if delta - abs(gap) > 0:
            s = np.sign(gap)
            grad[i] -= s
            grad[j] += s
    return grad / len(pairs)


def push_loss_grad_embeddings(groups: GroupedEmbeddings, gts: Sequence, delta: float = 1.0) -> List[np.ndarray]:
    """Chain :func:`push_loss_grad` through the group means to each embedding."""
    g = push_loss_grad(groups, gts, delta)
    return [np.full(e.size, g[k] / e.size) if e.size else np.zeros(0) for k, e in enumerate(groups.groups)]

