"""Shared-space projection, joint embedding, affinity matrix and the
affinity-driven alignment loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, ShapeMismatch, ZeroNorm
from .signals import EPSILON
from .types import PROJECTION_DIM


def project(vector: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map x @ W + B into the shared space.

    The same parameters apply to HQ and LQ features of a modality.
    """

    x = np.asarray(vector, dtype=np.float64)
    if x.shape[-1] != w.shape[0]:
        raise DimMismatch(f"feature dim {x.shape[-1]} != projection input dim {w.shape[0]}")
    return x @ w + b


def average_quality(hq: np.ndarray, lq: np.ndarray) -> np.ndarray:
    """Elementwise mean of the HQ and LQ feature blocks."""

    hq = np.asarray(hq, dtype=np.float64)
    lq = np.asarray(lq, dtype=np.float64)
    if hq.shape != lq.shape:
        raise ShapeMismatch(f"shape mismatch {hq.shape} vs {lq.shape}")
    return 0.5 * (hq + lq)


@dataclass(frozen=True)
class BlockIndex:
    """Maps joint-embedding row index <-> (sample, modality slot).

    Rows are stacked sample-major: (sample 0: slot 0..m-1), (sample 1: ...).
    """

    n_samples: int
    n_modalities: int

    @property
    def n_rows(self) -> int:
        return self.n_samples * self.n_modalities

    def row_of(self, sample: int, modality: int) -> int:
        if not (0 <= sample < self.n_samples and 0 <= modality < self.n_modalities):
            raise IndexError(f"({sample}, {modality}) outside block structure")
        return sample * self.n_modalities + modality

    def pair_of(self, row: int) -> tuple[int, int]:
        if not 0 <= row < self.n_rows:
            raise IndexError(f"row {row} outside block structure")
        return divmod(row, self.n_modalities)


def build_joint_rows(*modality_blocks: np.ndarray) -> tuple[np.ndarray, BlockIndex]:
    """Row-stack per-modality B x d blocks into a (B*m) x d matrix.

    Row (b*m + i) holds modality i of sample b.
    """

    blocks = [np.asarray(m, dtype=np.float64) for m in modality_blocks]
    if not blocks:
        raise ShapeMismatch("need at least one modality block")
    b, d = blocks[0].shape
    for blk in blocks[1:]:
        if blk.shape != (b, d):
            raise ShapeMismatch(f"inconsistent block shapes {blk.shape} vs {(b, d)}")
    rows = np.stack(blocks, axis=1).reshape(b * len(blocks), d)
    return rows, BlockIndex(n_samples=b, n_modalities=len(blocks))


@dataclass
class AffinityMatrix:
    """Symmetric matrix of pairwise [0, 1] affinities with block structure."""

    scores: np.ndarray
    block: BlockIndex


def _normalize_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms <= EPSILON):
        raise ZeroNorm(f"row norm below {EPSILON} in joint embedding")
    return rows / norms[:, None], norms


def affinity(rows: np.ndarray, block: BlockIndex | None = None) -> AffinityMatrix:
    """Cosine affinity mapped to [0, 1] via (1 + c) / 2.

    This normalization keeps the matrix symmetric and positive semi-definite:
    it is the average of an all-ones matrix and a Gram matrix of unit rows.
    """

    unit, _ = _normalize_rows(rows)
    scores = 0.5 * (1.0 + unit @ unit.T)
    np.clip(scores, 0.0, 1.0, out=scores)
    scores = 0.5 * (scores + scores.T)
    np.fill_diagonal(scores, 1.0)
    if block is None:
        block = BlockIndex(n_samples=rows.shape[0], n_modalities=1)
    return AffinityMatrix(scores=scores, block=block)


def _pair_masks(block: BlockIndex) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (N, N) masks of positive / negative pairs (full symmetric)."""

    n = block.n_rows
    samples, mods = np.divmod(np.arange(n), block.n_modalities)
    same_sample = samples[:, None] == samples[None, :]
    same_mod = mods[:, None] == mods[None, :]
    off_diag = ~np.eye(n, dtype=bool)
    positive = same_sample & ~same_mod & off_diag
    negative = ~same_sample & ~same_mod
    return positive, negative


def asa_loss(aff: AffinityMatrix) -> float:
    """Affinity-driven contrastive loss.

    Same-sample cross-modality pairs are drawn toward affinity 1; cross-sample
    cross-modality pairs toward 0. Each unordered pair counts once and the sum
    is scaled by 1/B. Same-modality cross-sample pairs carry no loss, and
    labels play no role.
    """

    pos, neg = _pair_masks(aff.block)
    a = aff.scores
    b = aff.block.n_samples
    # Masks are symmetric, so halve the double-counted sums.
    pos_term = float(np.sum((1.0 - a[pos]) ** 2)) / 2.0
    neg_term = float(np.sum(a[neg] ** 2)) / 2.0
    return (pos_term + neg_term) / b


def asa_loss_grad(rows: np.ndarray, block: BlockIndex) -> tuple[float, np.ndarray]:
    """asa_loss evaluated from raw rows, plus its gradient w.r.t. the rows."""

    unit, norms = _normalize_rows(rows)
    cos = unit @ unit.T
    np.clip(cos, -1.0, 1.0, out=cos)
    a = 0.5 * (1.0 + cos)
    np.fill_diagonal(a, 1.0)
    pos, neg = _pair_masks(block)
    b = block.n_samples
    loss = (float(np.sum((1.0 - a[pos]) ** 2)) / 2.0
            + float(np.sum(a[neg] ** 2)) / 2.0) / b

    # dL/dA over the full symmetric matrix (each unordered pair appears twice,
    # already accounted for by the 1/2 in the loss above).
    g = np.zeros_like(a)
    g[pos] = -(1.0 - a[pos]) / b
    g[neg] = a[neg] / b
    # A = (1 + U Ut) / 2 with U unit rows: dL/dU = G @ U (G symmetric).
    du = g @ unit
    # Through row normalization: project out the radial component.
    radial = np.sum(du * unit, axis=1, keepdims=True)
    drows = (du - radial * unit) / norms[:, None]
    return loss, drows


def project_dim() -> int:
    return PROJECTION_DIM
