"""Quality degradation operators: spatial downsampling, landmark jitter and
frame subsampling. Each preserves label and pairing identity."""

from __future__ import annotations

import math

import numpy as np

from .errors import IndivisibleShape, TooFewFrames
from .types import LandmarkSequence, Quality, VideoClip


def downsample_video(clip: VideoClip, factor: int) -> VideoClip:
    """Block-average pooling over factor x factor spatial patches.

    Frame count is unchanged; the result is tagged LQ.
    """

    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    t, h, w, c = clip.frames.shape
    if h % factor or w % factor:
        raise IndivisibleShape(f"{h}x{w} not divisible by factor {factor}")
    if factor == 1:
        return VideoClip(frames=clip.frames.copy(), quality=Quality.LQ, label=clip.label)
    blocks = clip.frames.reshape(t, h // factor, factor, w // factor, factor, c)
    pooled = blocks.mean(axis=(2, 4), dtype=np.float64)
    return VideoClip(frames=pooled.astype(clip.frames.dtype), quality=Quality.LQ,
                     label=clip.label)


def perturb_landmarks(seq: LandmarkSequence, sigma: float,
                      rng: np.random.Generator) -> LandmarkSequence:
    """Add i.i.d. Gaussian noise N(0, sigma^2) per coordinate.

    sigma=0 returns a bitwise-identical copy. Deterministic given the
    generator state.
    """

    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return LandmarkSequence(points=seq.points.copy(), quality=Quality.LQ,
                                label=seq.label)
    noise = rng.normal(0.0, sigma, size=seq.points.shape)
    return LandmarkSequence(points=seq.points + noise, quality=Quality.LQ,
                            label=seq.label)


def frame_indices(n_frames: int, ratio: float) -> np.ndarray:
    """Uniformly spaced, order-preserving subset of ceil(ratio * T) indices."""

    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    keep = math.ceil(ratio * n_frames)
    if keep < 2:
        raise TooFewFrames(f"ratio {ratio} keeps {keep} of {n_frames} frames")
    if keep == n_frames:
        return np.arange(n_frames)
    positions = np.linspace(0, n_frames - 1, keep)
    return np.unique(np.round(positions).astype(np.int64))


def sample_frames(clip: VideoClip, ratio: float) -> VideoClip:
    """Keep a uniformly spaced subset of frames; a subsequence of the input."""

    idx = frame_indices(clip.n_frames, ratio)
    return VideoClip(frames=clip.frames[idx], quality=clip.quality, label=clip.label)
