"""Shared domain types: raw per-sample inputs and encoder outputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .errors import InvalidSpec


class Quality(Enum):
    HQ = 0
    LQ = 1


class Label(IntEnum):
    """Class index convention: 1 = real, 0 = fake, fixed everywhere."""

    FAKE = 0
    REAL = 1


class Modality(Enum):
    P = "P"  # physiological (rPPG-style) branch
    L = "L"  # facial-landmark branch
    T = "T"  # text-prompt branch


class Validity(Enum):
    VALID = "valid"
    INVALID = "invalid"


class PromptKind(Enum):
    SIMPLE = "simple"
    DESCRIPTION = "description"
    UNRELATED = "unrelated"
    OPPOSITE = "opposite"


#: Feature dimensions per modality: rPPG z, landmark e, text t.
MODALITY_DIMS = {Modality.P: 320, Modality.L: 128, Modality.T: 512}

#: Shared projection space dimensionality.
PROJECTION_DIM = 320


@dataclass
class VideoClip:
    """T x H x W x C frame stack with values in [0, 1]."""

    frames: np.ndarray
    quality: Quality
    label: Label

    def __post_init__(self) -> None:
        f = np.asarray(self.frames)
        if f.ndim != 4:
            raise InvalidSpec(f"frames must be T x H x W x C, got shape {f.shape}")
        if f.shape[0] < 8:
            raise InvalidSpec(f"clip needs at least 8 frames, got {f.shape[0]}")
        self.frames = f

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class LandmarkSequence:
    """T x L x 2 normalized coordinates paired with a clip."""

    points: np.ndarray
    quality: Quality
    label: Label

    def __post_init__(self) -> None:
        p = np.asarray(self.points)
        if p.ndim != 3 or p.shape[2] != 2:
            raise InvalidSpec(f"points must be T x L x 2, got shape {p.shape}")
        if p.shape[1] < 4:
            raise InvalidSpec(f"need at least 4 landmark points, got {p.shape[1]}")
        self.points = p

    @property
    def n_frames(self) -> int:
        return self.points.shape[0]


@dataclass
class PromptText:
    """A text prompt; validity marks whether it was drawn verbatim from the
    bank for its own label."""

    text: str
    validity: Validity
    prompt_kind: PromptKind
    label: Label


@dataclass
class ModalityFeature:
    """Encoder output vector tagged with modality, class and quality."""

    vector: np.ndarray
    modality: Modality
    quality: Quality
    label: Label

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        expected = MODALITY_DIMS[self.modality]
        if v.shape[0] != expected:
            raise InvalidSpec(
                f"{self.modality.value}-feature must have dim {expected}, got {v.shape[0]}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidSpec("feature vector contains non-finite entries")
        self.vector = v


@dataclass
class Sample:
    """One generated dataset entry: paired clip, landmarks and prompt.

    ``seed`` is the per-sample stream seed; degradation draws at evaluation
    time derive from it so reports are reproducible sample by sample.
    """

    clip: VideoClip
    landmarks: LandmarkSequence
    prompt: PromptText
    label: Label
    sample_id: str
    seed: int


@dataclass
class FeaturePair:
    """Pre-extracted features for one sample at both quality levels.

    Lets externally produced features bypass the toy encoders; only the
    projection and classifier parameters train in this mode.
    """

    sample_id: str
    label: Label
    z_hq: np.ndarray
    z_lq: np.ndarray
    e_hq: np.ndarray
    e_lq: np.ndarray
    t_hq: np.ndarray
    t_lq: np.ndarray


@dataclass
class LossBreakdown:
    """Every loss term for one training step.

    Invariant: total == bce + alpha * phy + beta * aff (within 1e-9);
    phy == hr + pull + push.
    """

    bce: float
    hr: float
    pull: float
    push: float
    phy: float
    aff: float
    total: float
    alpha: float
    beta: float

    def as_dict(self) -> dict:
        return {
            "bce": self.bce,
            "hr": self.hr,
            "pull": self.pull,
            "push": self.push,
            "phy": self.phy,
            "aff": self.aff,
            "total": self.total,
            "alpha": self.alpha,
            "beta": self.beta,
        }


def derive_rng(*keys: int) -> np.random.Generator:
    """Deterministic RNG stream derived from a tuple of integer keys.

    All randomness in the package flows through streams like this one, so
    generation order never affects content.
    """

    return np.random.default_rng(list(keys))
