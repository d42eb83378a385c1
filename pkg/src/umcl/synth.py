"""Synthetic paired-modality dataset with a verifiable class signal.

Real samples carry one coherent periodic brightness oscillation (a heart rate
inside the physiological band) and smooth landmark trajectories; fake samples
carry an attenuated, spectrally scattered oscillation with extra temporal
jitter and discontinuous landmark motion. The separation is detectable from
the intensity trace alone, which grounds the end-to-end checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .prompts import make_prompt
from .types import (Label, LandmarkSequence, Quality, Sample, VideoClip,
                    derive_rng)

# stream tags for per-sample RNG derivation
_TAG_VIDEO = 11
_TAG_LANDMARKS = 12
_TAG_PROMPT = 13


@dataclass(frozen=True)
class SynthSpec:
    """Shape and signal parameters of the generated dataset."""

    n_per_class: int
    frames: int = 100
    height: int = 16
    width: int = 16
    channels: int = 3
    landmarks: int = 8
    fps: float = 30.0
    # physiological signal
    hr_low_hz: float = 0.9
    hr_high_hz: float = 1.8
    real_amp: tuple[float, float] = (0.08, 0.14)
    fake_attenuation: tuple[float, float] = (0.15, 0.35)
    real_temporal_noise: float = 0.01
    fake_temporal_noise: float = 0.04
    pixel_noise: float = 0.02
    spatial_pattern: float = 0.05
    # hard fakes: a fraction of fakes mimic one real cue, independently per
    # modality, so no single branch can separate everything on its own
    fake_pulse_prob: float = 0.15
    fake_pulse_scale: tuple[float, float] = (0.4, 0.6)
    fake_smooth_prob: float = 0.25
    # landmark motion: both classes move with the same per-coordinate std;
    # real motion is temporally smooth, fake motion is frame-to-frame noise
    # with occasional jumps
    motion_std: float = 0.015
    real_smooth_window: int = 9
    fake_jump_prob: float = 0.04
    fake_jump_amp: float = 0.03

    def __post_init__(self) -> None:
        if self.n_per_class < 1:
            raise InvalidSpec(f"n_per_class must be >= 1, got {self.n_per_class}")
        if self.frames < 8:
            raise InvalidSpec(f"frames must be >= 8, got {self.frames}")
        if self.height % 4 or self.width % 4:
            raise InvalidSpec("height and width must be divisible by 4")
        if self.landmarks < 4:
            raise InvalidSpec(f"landmarks must be >= 4, got {self.landmarks}")
        if not 0 < self.hr_low_hz < self.hr_high_hz < self.fps / 2:
            raise InvalidSpec("heart-rate band must sit below the Nyquist rate")


def _real_oscillation(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    times = np.arange(spec.frames) / spec.fps
    hr = rng.uniform(spec.hr_low_hz, spec.hr_high_hz)
    amp = rng.uniform(*spec.real_amp)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    signal = amp * np.sin(2.0 * np.pi * hr * times + phase)
    return signal + rng.normal(0.0, spec.real_temporal_noise, spec.frames)


def _fake_oscillation(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    times = np.arange(spec.frames) / spec.fps
    if rng.random() < spec.fake_pulse_prob:
        # hard fake: keeps a weak but coherent in-band pulse
        hr = rng.uniform(spec.hr_low_hz, spec.hr_high_hz)
        amp = rng.uniform(*spec.real_amp) * rng.uniform(*spec.fake_pulse_scale)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        signal = amp * np.sin(2.0 * np.pi * hr * times + phase)
    else:
        # energy spread over several incoherent components, some out of band
        amp = rng.uniform(*spec.real_amp) * rng.uniform(*spec.fake_attenuation)
        signal = np.zeros(spec.frames)
        for _ in range(3):
            freq = rng.uniform(0.5, min(6.0, spec.fps / 2 - 0.5))
            phase = rng.uniform(0.0, 2.0 * np.pi)
            signal += np.sin(2.0 * np.pi * freq * times + phase)
        signal *= amp / np.sqrt(3.0)
    return signal + rng.normal(0.0, spec.fake_temporal_noise, spec.frames)


def _make_video(spec: SynthSpec, label: Label, rng: np.random.Generator) -> VideoClip:
    base = rng.uniform(0.35, 0.65)
    if label == Label.REAL:
        trace = _real_oscillation(spec, rng)
    else:
        trace = _fake_oscillation(spec, rng)
    pattern = rng.normal(0.0, spec.spatial_pattern,
                         (spec.height, spec.width, spec.channels))
    noise = rng.normal(0.0, spec.pixel_noise,
                       (spec.frames, spec.height, spec.width, spec.channels))
    frames = base + trace[:, None, None, None] + pattern[None, ...] + noise
    frames = np.clip(frames, 0.0, 1.0).astype(np.float32)
    return VideoClip(frames=frames, quality=Quality.HQ, label=label)


def _make_landmarks(spec: SynthSpec, label: Label,
                    rng: np.random.Generator) -> LandmarkSequence:
    base = rng.uniform(0.25, 0.75, (spec.landmarks, 2))
    shape = (spec.frames, spec.landmarks, 2)
    if label == Label.REAL:
        # moving-average smoothing, rescaled so the per-coordinate std matches
        # the fake class: the classes differ in temporal structure, not size
        w = spec.real_smooth_window
        raw = rng.standard_normal((spec.frames + w - 1, spec.landmarks, 2))
        kernel = np.ones(w) / w
        smooth = np.apply_along_axis(
            lambda v: np.convolve(v, kernel, mode="valid"), 0, raw)
        motion = smooth * (spec.motion_std * np.sqrt(w))
    else:
        motion = rng.normal(0.0, spec.motion_std, shape)
        jumps = rng.random(spec.frames) < spec.fake_jump_prob
        shift = rng.normal(0.0, spec.fake_jump_amp, (spec.frames, 1, 2))
        motion += np.where(jumps[:, None, None], shift, 0.0)
    points = np.clip(base[None] + motion, 0.0, 1.0)
    return LandmarkSequence(points=points, quality=Quality.HQ, label=label)


def synth_sample(spec: SynthSpec, label: Label, index: int, seed: int) -> Sample:
    """Generate one sample; content depends only on (seed, index, label)."""

    label_code = int(label)
    clip = _make_video(spec, label, derive_rng(seed, index, label_code, _TAG_VIDEO))
    lmk = _make_landmarks(spec, label,
                          derive_rng(seed, index, label_code, _TAG_LANDMARKS))
    prompt_rng = derive_rng(seed, index, label_code, _TAG_PROMPT)
    prompt = make_prompt(label, prompt_rng, eval_kind="description")
    name = "real" if label == Label.REAL else "fake"
    return Sample(clip=clip, landmarks=lmk, prompt=prompt, label=label,
                  sample_id=f"s{seed}-{name}-{index:04d}", seed=seed + 104729 * index
                  + 15485863 * label_code)


def synth_dataset(n_per_class: int, spec: SynthSpec | None = None,
                  seed: int = 0) -> list[Sample]:
    """Balanced list of generated samples, interleaved real/fake.

    Fully reproducible from the seed; per-sample streams are derived from
    (seed, index, label) so generation order never affects content.
    """

    if spec is None:
        spec = SynthSpec(n_per_class=n_per_class)
    elif spec.n_per_class != n_per_class:
        raise InvalidSpec("n_per_class argument disagrees with spec")
    samples = []
    for i in range(n_per_class):
        samples.append(synth_sample(spec, Label.REAL, i, seed))
        samples.append(synth_sample(spec, Label.FAKE, i, seed))
    return samples
