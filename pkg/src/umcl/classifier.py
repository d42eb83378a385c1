"""Concatenation fusion, the shared linear classifier head, classification
loss and total-loss composition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimMismatch, EmptyBatch, MissingModality, NonFinite
from .types import PROJECTION_DIM, Label

#: Probability clamp before logs, keeping the loss finite under saturation.
PROB_CLAMP = 1e-12

#: Loss weights for the physiological and alignment terms.
DEFAULT_ALPHA = 0.25
DEFAULT_BETA = 0.25


@dataclass
class Prediction:
    probabilities: np.ndarray
    logits: np.ndarray

    @property
    def p_real(self) -> float:
        return float(self.probabilities[int(Label.REAL)])


def fuse(z: np.ndarray | None, e: np.ndarray | None, t: np.ndarray | None,
         missing: str = "error") -> np.ndarray:
    """Order-stable concatenation of the projected modality vectors (P, L, T).

    With ``missing='zero'`` an absent modality contributes the projection of a
    zero feature (callers pass that vector); ``None`` here means truly absent,
    which is an error unless the policy tolerates it by zero-filling.
    """

    parts = []
    for name, v in (("P", z), ("L", e), ("T", t)):
        if v is None:
            if missing == "zero":
                parts.append(np.zeros(PROJECTION_DIM))
                continue
            raise MissingModality(f"modality {name} missing from fusion input")
        parts.append(np.asarray(v, dtype=np.float64).reshape(-1))
    return np.concatenate(parts)


def classify(u: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> Prediction:
    """Linear head + numerically stable softmax over {fake, real}."""

    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != w.shape[0]:
        raise DimMismatch(f"input dim {u.shape[-1]} != classifier dim {w.shape[0]}")
    logits = u @ w
    if b is not None:
        logits = logits + b
    return Prediction(probabilities=softmax(logits), logits=logits)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=-1, keepdims=True)


def bce_loss(predictions: Sequence[Prediction], labels: Sequence[int]) -> float:
    """Mean binary cross-entropy on P(real), probabilities clamped to
    [PROB_CLAMP, 1 - PROB_CLAMP]."""

    if len(predictions) == 0:
        raise EmptyBatch("bce_loss needs at least one prediction")
    if len(predictions) != len(labels):
        raise DimMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    p = np.array([pred.p_real for pred in predictions], dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def bce_from_logits_grad(logits: np.ndarray, labels: Sequence[int]
                         ) -> tuple[float, np.ndarray]:
    """Batched BCE through the softmax plus its gradient w.r.t. the logits.

    Gradient is the classic (probs - onehot) / N of 2-class cross-entropy.
    """

    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise DimMismatch(f"expected N x 2 logits, got {logits.shape}")
    n = logits.shape[0]
    if n == 0:
        raise EmptyBatch("empty logit batch")
    y = np.asarray(labels, dtype=np.int64)
    probs = softmax(logits)
    p_real = np.clip(probs[:, int(Label.REAL)], PROB_CLAMP, 1.0 - PROB_CLAMP)
    yf = y.astype(np.float64)
    loss = float(-np.mean(yf * np.log(p_real) + (1.0 - yf) * np.log(1.0 - p_real)))
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y] = 1.0
    dlogits = (probs - onehot) / n
    return loss, dlogits


def total_loss(bce: float, phy: float, aff: float,
               alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA) -> float:
    """Weighted sum of the three loss families."""

    for name, v in (("bce", bce), ("phy", phy), ("aff", aff),
                    ("alpha", alpha), ("beta", beta)):
        if not np.isfinite(v):
            raise NonFinite(f"total_loss component {name} is not finite: {v}")
    return float(bce + alpha * phy + beta * aff)
