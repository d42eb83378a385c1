"""Correlation losses, spectral heart-rate estimation and their composites.

Signals are plain 1-D float arrays of length K >= 2. All functions here are
pure and deterministic; the gradient companions return analytic derivatives
used by the training engine and checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBand, LengthMismatch, ZeroNorm, ZeroVariance

#: Guard added inside every variance / norm denominator.
EPSILON = 1e-8


@dataclass(frozen=True)
class SpectralConfig:
    """Sampling rate and heart-rate search band for spectral estimation.

    Defaults cover the standard physiological band (42-240 bpm) at 30 fps.
    """

    fps: float = 30.0
    band_low_hz: float = 0.7
    band_high_hz: float = 4.0

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not (0 < self.band_low_hz < self.band_high_hz < self.fps / 2):
            raise ValueError(
                f"need 0 < band_low < band_high < fps/2, got "
                f"({self.band_low_hz}, {self.band_high_hz}) at fps {self.fps}"
            )


@dataclass(frozen=True)
class HeartRateEstimate:
    bpm: float
    bin_index: int
    peak_power: float


def resampled_config(fps: float, n_frames: int, n_samples: int,
                     band_low_hz: float = 0.7, band_high_hz: float = 4.0) -> SpectralConfig:
    """Spectral config for a signal resampled from ``n_frames`` at ``fps``
    to ``n_samples`` over the same time span."""

    return SpectralConfig(fps=fps * n_samples / n_frames,
                          band_low_hz=band_low_hz, band_high_hz=band_high_hz)


def _as_signal(x, name: str = "signal") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape[0] < 2:
        raise ValueError(f"{name} needs length >= 2, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    xv = _as_signal(x, "x")
    yv = _as_signal(y, "y")
    if xv.shape[0] != yv.shape[0]:
        raise LengthMismatch(f"lengths differ: {xv.shape[0]} vs {yv.shape[0]}")
    return xv, yv


def npc_loss(x, y, strict: bool = False) -> float:
    """Negative Pearson correlation loss, 1 - r, in [0, 2].

    0 iff perfectly positively correlated, 2 iff perfectly negatively
    correlated. Denominators are guarded by EPSILON; with ``strict`` a
    near-constant input raises ZeroVariance instead.
    """

    loss, _, _ = npc_loss_grad(x, y, strict=strict)
    return loss


def npc_loss_grad(x, y, strict: bool = False) -> tuple[float, np.ndarray, np.ndarray]:
    """npc_loss plus analytic gradients with respect to both signals."""

    xv, yv = _check_pair(x, y)
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    sx = float(np.linalg.norm(xc))
    sy = float(np.linalg.norm(yc))
    if sx < EPSILON or sy < EPSILON:
        if strict:
            raise ZeroVariance(f"variance denominator below {EPSILON}")
        # Guarded flat region: correlation pinned, gradient zeroed.
        d = max(sx, EPSILON) * max(sy, EPSILON)
        r = float(np.clip(np.dot(xc, yc) / d, -1.0, 1.0))
        zero = np.zeros_like(xv)
        return 1.0 - r, zero, zero.copy()
    dot = float(np.dot(xc, yc))
    r_raw = dot / (sx * sy)
    r = float(np.clip(r_raw, -1.0, 1.0))
    if r != r_raw:
        # Clipped at exact (anti)colinearity: loss locally flat.
        zero = np.zeros_like(xv)
        return 1.0 - r, zero, zero.copy()
    # d r / d centered-x, then re-center (gradient of the mean-removal map).
    gx = yc / (sx * sy) - r * xc / (sx * sx)
    gy = xc / (sx * sy) - r * yc / (sy * sy)
    gx -= gx.mean()
    gy -= gy.mean()
    return 1.0 - r, -gx, -gy


def mpc_loss(x, y, strict: bool = False) -> float:
    """Absolute uncentered cosine similarity, in [0, 1].

    Used to push apart feature pairs regardless of sign. ZeroNorm is raised
    in strict mode when either uncentered norm falls below EPSILON.
    """

    loss, _, _ = mpc_loss_grad(x, y, strict=strict)
    return loss


def mpc_loss_grad(x, y, strict: bool = False) -> tuple[float, np.ndarray, np.ndarray]:
    """mpc_loss plus analytic gradients with respect to both signals."""

    xv, yv = _check_pair(x, y)
    nx = float(np.linalg.norm(xv))
    ny = float(np.linalg.norm(yv))
    if nx < EPSILON or ny < EPSILON:
        if strict:
            raise ZeroNorm(f"norm denominator below {EPSILON}")
        d = max(nx, EPSILON) * max(ny, EPSILON)
        s = float(np.clip(np.dot(xv, yv) / d, -1.0, 1.0))
        zero = np.zeros_like(xv)
        return abs(s), zero, zero.copy()
    s_raw = float(np.dot(xv, yv)) / (nx * ny)
    s = float(np.clip(s_raw, -1.0, 1.0))
    if s != s_raw:
        zero = np.zeros_like(xv)
        return abs(s), zero, zero.copy()
    sgn = float(np.sign(s))
    gx = sgn * (yv / (nx * ny) - s * xv / (nx * nx))
    gy = sgn * (xv / (nx * ny) - s * yv / (ny * ny))
    return abs(s), gx, gy


def power_spectral_density(x, cfg: SpectralConfig) -> np.ndarray:
    """Magnitude-squared DFT over bins 0..K//2 as an array of
    (frequency_hz, power) rows.

    Unnormalized; normalization is irrelevant to downstream peak picking.
    """

    xv = _as_signal(x)
    k = xv.shape[0]
    if k < 4:
        raise ValueError(f"need K >= 4 for a spectrum, got {k}")
    spec = np.fft.rfft(xv)
    power = np.abs(spec) ** 2
    freqs = np.arange(power.shape[0], dtype=np.float64) * (cfg.fps / k)
    return np.column_stack([freqs, power])


def estimate_heart_rate(x, cfg: SpectralConfig) -> HeartRateEstimate:
    """Peak in-band spectral bin as a heart rate in bpm.

    Ties break toward the lower frequency. DC never participates because the
    band lower edge is positive.
    """

    psd = power_spectral_density(x, cfg)
    freqs = psd[:, 0]
    power = psd[:, 1]
    in_band = (freqs >= cfg.band_low_hz) & (freqs <= cfg.band_high_hz)
    if not np.any(in_band):
        raise EmptyBand(
            f"no FFT bin inside [{cfg.band_low_hz}, {cfg.band_high_hz}] Hz "
            f"at resolution {cfg.fps / (psd.shape[0] - 1) / 2:.4g} Hz"
        )
    band_idx = np.flatnonzero(in_band)
    band_power = power[band_idx]
    if float(band_power.max()) <= EPSILON:
        raise ZeroVariance("no in-band power exceeds epsilon")
    # argmax returns the first maximum, i.e. the lower-frequency bin on ties
    peak = int(band_idx[int(np.argmax(band_power))])
    return HeartRateEstimate(
        bpm=60.0 * float(freqs[peak]),
        bin_index=peak,
        peak_power=float(power[peak]),
    )


def hr_consistency_loss(h_hq: HeartRateEstimate, h_lq: HeartRateEstimate) -> float:
    """Absolute bpm difference between the two quality levels."""

    return abs(h_hq.bpm - h_lq.bpm)


def cqsl_pull_loss(z_hq_real, z_lq_real, z_hq_fake, z_lq_fake,
                   strict: bool = False) -> float:
    """Cross-quality discrepancy: within-class NPC across quality levels."""

    return (npc_loss(z_hq_real, z_lq_real, strict=strict)
            + npc_loss(z_hq_fake, z_lq_fake, strict=strict))


def cqsl_push_loss(z_hq_real, z_lq_real, z_hq_fake, z_lq_fake,
                   strict: bool = False) -> float:
    """Inter-class similarity: MPC over the four real x fake cross pairs."""

    return (mpc_loss(z_hq_real, z_hq_fake, strict=strict)
            + mpc_loss(z_hq_real, z_lq_fake, strict=strict)
            + mpc_loss(z_lq_real, z_hq_fake, strict=strict)
            + mpc_loss(z_lq_real, z_lq_fake, strict=strict))


def _hr_term(z_hq, z_lq, cfg: SpectralConfig) -> float:
    """HQ/LQ heart-rate gap; degenerate spectra contribute zero rather than
    aborting a training step."""

    try:
        return hr_consistency_loss(estimate_heart_rate(z_hq, cfg),
                                   estimate_heart_rate(z_lq, cfg))
    except (ZeroVariance, EmptyBand):
        return 0.0


def phy_loss(z_hq_real, z_lq_real, z_hq_fake, z_lq_fake,
             cfg: SpectralConfig, strict: bool = False) -> tuple[float, dict]:
    """Combined physiological loss: heart-rate consistency + pull + push.

    Returns (total, components) with the individual terms under keys
    ``hr``, ``pull`` and ``push``.
    """

    hr = (_hr_term(z_hq_real, z_lq_real, cfg)
          + _hr_term(z_hq_fake, z_lq_fake, cfg))
    pull = cqsl_pull_loss(z_hq_real, z_lq_real, z_hq_fake, z_lq_fake, strict=strict)
    push = cqsl_push_loss(z_hq_real, z_lq_real, z_hq_fake, z_lq_fake, strict=strict)
    total = hr + pull + push
    return total, {"hr": hr, "pull": pull, "push": push}


def phy_loss_grad(z_hq_real, z_lq_real, z_hq_fake, z_lq_fake,
                  cfg: SpectralConfig) -> tuple[float, dict, tuple[np.ndarray, ...]]:
    """phy_loss plus gradients with respect to the four signals.

    The heart-rate term is piecewise constant in its inputs (spectral argmax),
    so its gradient contribution is zero almost everywhere.
    """

    pull_a, ga_hr_, ga_lr = npc_loss_grad(z_hq_real, z_lq_real)
    pull_b, gb_hf, gb_lf = npc_loss_grad(z_hq_fake, z_lq_fake)
    m1, g1_hr_, g1_hf = mpc_loss_grad(z_hq_real, z_hq_fake)
    m2, g2_hr_, g2_lf = mpc_loss_grad(z_hq_real, z_lq_fake)
    m3, g3_lr, g3_hf = mpc_loss_grad(z_lq_real, z_hq_fake)
    m4, g4_lr, g4_lf = mpc_loss_grad(z_lq_real, z_lq_fake)
    hr = (_hr_term(z_hq_real, z_lq_real, cfg)
          + _hr_term(z_hq_fake, z_lq_fake, cfg))
    pull = pull_a + pull_b
    push = m1 + m2 + m3 + m4
    d_hq_real = ga_hr_ + g1_hr_ + g2_hr_
    d_lq_real = ga_lr + g3_lr + g4_lr
    d_hq_fake = gb_hf + g1_hf + g3_hf
    d_lq_fake = gb_lf + g2_lf + g4_lf
    total = hr + pull + push
    comps = {"hr": hr, "pull": pull, "push": push}
    return total, comps, (d_hq_real, d_lq_real, d_hq_fake, d_lq_fake)
