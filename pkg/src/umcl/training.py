"""Balanced batching, learning-rate schedule, the joint optimization step and
the finite-difference gradient checker.

Every training step runs the paired HQ/LQ pipeline: classification loss on the
fused predictions of both quality branches, the physiological similarity stack
on class-paired rPPG features, and the affinity alignment loss on the batch.
Gradients are hand-derived and verified against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import encoders
from .alignment import asa_loss_grad, build_joint_rows
from .classifier import bce_from_logits_grad, total_loss
from .degrade import downsample_video, frame_indices, perturb_landmarks, sample_frames
from .errors import (ConfigError, InsufficientClassSamples, NonFiniteLoss)
from .prompts import make_prompt
from .signals import SpectralConfig, phy_loss_grad
from .types import (FeaturePair, Label, LossBreakdown, Sample, derive_rng)

# RNG stream tags
_TAG_SHUFFLE = 31
_TAG_PROMPT = 32
_TAG_LANDMARK_NOISE = 33
_TAG_INIT_P = 21
_TAG_INIT_L = 22
_TAG_INIT_PROJ = 23
_TAG_INIT_CLF = 24

ALL_MODALITIES = ("P", "L", "T")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0
    lr_init: float = 1e-3
    lr_final: float = 5e-5
    warmup_fraction: float = 0.10
    alpha: float = 0.25
    beta: float = 0.25
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    use_asa: bool = True
    use_cqsl: bool = True
    modalities: tuple[str, ...] = ALL_MODALITIES
    schedule: str = "warmup_cosine"  # or "two_phase"
    bce_mode: str = "both"  # "hq" | "lq" | "both"
    classifier_bias: bool = True
    lq_downsample: int = 4
    lq_frame_ratio: float = 0.9
    lq_landmark_sigma: float = 0.01
    fps: float = 30.0
    band_low_hz: float = 0.7
    band_high_hz: float = 4.0
    frames_hint: int = 100  # spectral mapping for feature-file datasets
    missing_modality: str = "zero"  # or "error"
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if not 0 < self.warmup_fraction < 1:
            raise ConfigError(f"warmup_fraction must be in (0, 1), got {self.warmup_fraction}")
        mods = tuple(self.modalities)
        if not mods or any(m not in ALL_MODALITIES for m in mods):
            raise ConfigError(f"modalities must be a nonempty subset of P,L,T, got {mods}")
        if tuple(sorted(set(mods))) != tuple(sorted(mods)):
            raise ConfigError(f"duplicate modalities in {mods}")
        object.__setattr__(self, "modalities",
                           tuple(m for m in ALL_MODALITIES if m in mods))
        if self.schedule not in ("warmup_cosine", "two_phase"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.bce_mode not in ("hq", "lq", "both"):
            raise ConfigError(f"unknown bce_mode {self.bce_mode!r}")
        if self.missing_modality not in ("zero", "error"):
            raise ConfigError(f"unknown missing_modality policy {self.missing_modality!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    frozen: dict[str, np.ndarray]
    m1: dict[str, np.ndarray]
    m2: dict[str, np.ndarray]
    step: int
    config: TrainConfig
    grad_seen: set[str] = field(default_factory=set)

    def copy(self) -> "TrainState":
        return TrainState(
            params={k: v.copy() for k, v in self.params.items()},
            frozen=self.frozen,  # frozen arrays are never written
            m1={k: v.copy() for k, v in self.m1.items()},
            m2={k: v.copy() for k, v in self.m2.items()},
            step=self.step,
            config=self.config,
            grad_seen=set(self.grad_seen),
        )


@dataclass
class PreparedSample:
    """Per-sample tensors the step loop actually consumes.

    The LQ intensity trace is fixed per sample (spatial downsampling plus the
    configured mild frame subsampling); LQ landmark noise and the prompt draw
    happen per step.
    """

    label: int
    sample_id: str
    seed: int
    trace_hq: np.ndarray
    trace_lq: np.ndarray
    points_hq: np.ndarray
    n_frames: int


def prepare_sample(sample: Sample, cfg: TrainConfig) -> PreparedSample:
    clip_lq = sample.clip
    if cfg.lq_frame_ratio < 1.0:
        clip_lq = sample_frames(clip_lq, cfg.lq_frame_ratio)
    if cfg.lq_downsample > 1:
        clip_lq = downsample_video(clip_lq, cfg.lq_downsample)
    return PreparedSample(
        label=int(sample.label),
        sample_id=sample.sample_id,
        seed=sample.seed,
        trace_hq=encoders.intensity_trace(sample.clip.frames),
        trace_lq=encoders.intensity_trace(clip_lq.frames),
        points_hq=np.asarray(sample.landmarks.points, dtype=np.float64),
        n_frames=sample.clip.n_frames,
    )


def is_feature_dataset(dataset) -> bool:
    return len(dataset) > 0 and isinstance(dataset[0], FeaturePair)


def init_state(cfg: TrainConfig, n_landmarks: int | None = None,
               feature_mode: bool = False) -> TrainState:
    """Fresh parameters derived from the config seed.

    The text-encoder table is frozen at construction and excluded from the
    trainable set. In feature mode only projections and the classifier train.
    """

    params: dict[str, np.ndarray] = {}
    mods = cfg.modalities
    if not feature_mode:
        if "P" in mods or cfg.use_cqsl:
            params.update(encoders.init_p_params(derive_rng(cfg.seed, _TAG_INIT_P)))
        if "L" in mods:
            if n_landmarks is None:
                raise ConfigError("n_landmarks required for the landmark encoder")
            params.update(encoders.init_l_params(derive_rng(cfg.seed, _TAG_INIT_L),
                                                 n_landmarks))
    proj = encoders.init_projection_params(derive_rng(cfg.seed, _TAG_INIT_PROJ))
    for mod in mods:
        params[f"proj.{mod}.w"] = proj[f"proj.{mod}.w"]
        params[f"proj.{mod}.b"] = proj[f"proj.{mod}.b"]
    params.update(encoders.init_classifier_params(
        derive_rng(cfg.seed, _TAG_INIT_CLF), n_modalities=len(mods),
        bias=cfg.classifier_bias))
    zeros = {k: np.zeros_like(v) for k, v in params.items()}
    return TrainState(params=params, frozen=encoders.init_t_params(),
                      m1=zeros, m2={k: np.zeros_like(v) for k, v in params.items()},
                      step=0, config=cfg)


def balanced_batches(dataset, batch_size: int, rng_seed: int) -> list[list]:
    """Deterministically shuffled batches with equal real/fake halves.

    Leftover samples that cannot fill one more balanced batch are dropped for
    that pass.
    """

    if batch_size < 2 or batch_size % 2:
        raise ConfigError(f"batch_size must be even and >= 2, got {batch_size}")
    half = batch_size // 2
    labels = [int(_label_of(s)) for s in dataset]
    real = [i for i, y in enumerate(labels) if y == int(Label.REAL)]
    fake = [i for i, y in enumerate(labels) if y == int(Label.FAKE)]
    if len(real) < half or len(fake) < half:
        raise InsufficientClassSamples(
            f"need {half} per class, have {len(real)} real / {len(fake)} fake")
    rng = derive_rng(rng_seed, _TAG_SHUFFLE)
    real = [real[i] for i in rng.permutation(len(real))]
    fake = [fake[i] for i in rng.permutation(len(fake))]
    n_batches = min(len(real), len(fake)) // half
    batches = []
    for b in range(n_batches):
        idx = real[b * half:(b + 1) * half] + fake[b * half:(b + 1) * half]
        batches.append([dataset[i] for i in idx])
    return batches


def _label_of(sample) -> int:
    return int(sample.label)


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Constant warmup at lr_init, then cosine decay to lr_final.

    The two_phase schedule instead drops straight to lr_final after warmup.
    """

    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    warmup = int(cfg.warmup_fraction * total_steps)
    if step < warmup:
        return cfg.lr_init
    if cfg.schedule == "two_phase":
        return cfg.lr_final
    denom = max(total_steps - 1 - warmup, 1)
    tau = (step - warmup) / denom
    return cfg.lr_final + (cfg.lr_init - cfg.lr_final) * 0.5 * (1.0 + math.cos(math.pi * tau))


# ---------------------------------------------------------------------------
# forward / backward over one batch


@dataclass
class BatchFeatures:
    """Encoder outputs for one batch at both quality levels, plus caches."""

    labels: np.ndarray
    z_hq: np.ndarray | None = None
    z_lq: np.ndarray | None = None
    e_hq: np.ndarray | None = None
    e_lq: np.ndarray | None = None
    t_hq: np.ndarray | None = None
    t_lq: np.ndarray | None = None
    caches: dict = field(default_factory=dict)
    n_frames: int = 100


def encode_batch(batch: list[PreparedSample], params: dict, frozen: dict,
                 cfg: TrainConfig, step: int) -> BatchFeatures:
    """Run the three encoders over the HQ and LQ variants of a batch."""

    labels = np.array([s.label for s in batch], dtype=np.int64)
    out = BatchFeatures(labels=labels, n_frames=batch[0].n_frames)
    need_p = "P" in cfg.modalities or cfg.use_cqsl
    if need_p:
        tr_hq = np.stack([s.trace_hq for s in batch])
        tr_lq = np.stack([s.trace_lq for s in batch])
        out.z_hq, cache_hq = encoders.p_forward(tr_hq, params)
        out.z_lq, cache_lq = encoders.p_forward(tr_lq, params)
        out.caches["p_hq"], out.caches["p_lq"] = cache_hq, cache_lq
    if "L" in cfg.modalities:
        pts_hq = np.stack([s.points_hq for s in batch])
        noise = np.stack([
            derive_rng(cfg.seed, step, s.seed, _TAG_LANDMARK_NOISE).normal(
                0.0, cfg.lq_landmark_sigma, s.points_hq.shape)
            for s in batch
        ]) if cfg.lq_landmark_sigma > 0 else np.zeros_like(pts_hq)
        pts_lq = pts_hq + noise
        out.e_hq, cache_hq = encoders.l_forward(pts_hq, params)
        out.e_lq, cache_lq = encoders.l_forward(pts_lq, params)
        out.caches["l_hq"], out.caches["l_lq"] = cache_hq, cache_lq
    if "T" in cfg.modalities:
        texts = []
        for s in batch:
            rng = derive_rng(cfg.seed, step, s.seed, _TAG_PROMPT)
            texts.append(make_prompt(Label(s.label), rng).text)
        t = encoders.t_forward(texts, frozen)
        out.t_hq = t
        out.t_lq = t
    return out


def features_batch(batch: list[FeaturePair], cfg: TrainConfig) -> BatchFeatures:
    """Assemble a BatchFeatures from pre-extracted feature pairs."""

    labels = np.array([int(p.label) for p in batch], dtype=np.int64)
    out = BatchFeatures(labels=labels, n_frames=cfg.frames_hint)
    out.z_hq = np.stack([p.z_hq for p in batch]).astype(np.float64)
    out.z_lq = np.stack([p.z_lq for p in batch]).astype(np.float64)
    out.e_hq = np.stack([p.e_hq for p in batch]).astype(np.float64)
    out.e_lq = np.stack([p.e_lq for p in batch]).astype(np.float64)
    out.t_hq = np.stack([p.t_hq for p in batch]).astype(np.float64)
    out.t_lq = np.stack([p.t_lq for p in batch]).astype(np.float64)
    return out


_FEATURE_KEYS = {"P": ("z_hq", "z_lq"), "L": ("e_hq", "e_lq"), "T": ("t_hq", "t_lq")}


def loss_forward_backward(bundle: BatchFeatures, params: dict, cfg: TrainConfig
                          ) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """All loss terms and d(total)/d(params) for one encoded batch.

    Also stores the gradients w.r.t. the raw encoder outputs in the returned
    dict under ``_d.<key>`` so callers can continue backprop into encoders.
    """

    mods = cfg.modalities
    grads: dict[str, np.ndarray] = {}
    # gradient accumulators on raw features
    draw: dict[str, np.ndarray] = {}

    def raw(key: str) -> np.ndarray:
        v = getattr(bundle, key)
        if v is None:
            raise NonFiniteLoss(f"feature {key} missing for configured modalities")
        return v

    def add_raw(key: str, g: np.ndarray) -> None:
        if key in draw:
            draw[key] += g
        else:
            draw[key] = g.copy()

    # projections, per enabled modality and quality
    proj: dict[str, np.ndarray] = {}
    for mod in mods:
        w = params[f"proj.{mod}.w"]
        b = params[f"proj.{mod}.b"]
        for key in _FEATURE_KEYS[mod]:
            proj[key] = raw(key) @ w + b

    def proj_backward(mod: str, key: str, dproj: np.ndarray) -> None:
        w = params[f"proj.{mod}.w"]
        x = raw(key)
        _acc(grads, f"proj.{mod}.w", x.T @ dproj)
        _acc(grads, f"proj.{mod}.b", dproj.sum(axis=0))
        add_raw(key, dproj @ w.T)

    # --- classification on fused projected features, per quality branch
    w_clf = params["clf.w"]
    b_clf = params.get("clf.b")
    branches = {"both": ("hq", "lq"), "hq": ("hq",), "lq": ("lq",)}[cfg.bce_mode]
    bce = 0.0
    for branch in branches:
        qi = 0 if branch == "hq" else 1
        u = np.concatenate([proj[_FEATURE_KEYS[mod][qi]] for mod in mods], axis=1)
        logits = u @ w_clf
        if b_clf is not None:
            logits = logits + b_clf
        branch_bce, dlogits = bce_from_logits_grad(logits, bundle.labels)
        scale = 1.0 / len(branches)
        bce += scale * branch_bce
        dlogits = dlogits * scale
        _acc(grads, "clf.w", u.T @ dlogits)
        if b_clf is not None:
            _acc(grads, "clf.b", dlogits.sum(axis=0))
        du = dlogits @ w_clf.T
        offset = 0
        for mod in mods:
            proj_backward(mod, _FEATURE_KEYS[mod][qi], du[:, offset:offset + 320])
            offset += 320

    # --- affinity alignment on quality-averaged projected features
    aff = 0.0
    if cfg.use_asa and len(mods) >= 2:
        averaged = [0.5 * (proj[_FEATURE_KEYS[mod][0]] + proj[_FEATURE_KEYS[mod][1]])
                    for mod in mods]
        rows, block = build_joint_rows(*averaged)
        aff, drows = asa_loss_grad(rows, block)
        drows = cfg.beta * drows.reshape(len(bundle.labels), len(mods), -1)
        for j, mod in enumerate(mods):
            proj_backward(mod, _FEATURE_KEYS[mod][0], 0.5 * drows[:, j])
            proj_backward(mod, _FEATURE_KEYS[mod][1], 0.5 * drows[:, j])

    # --- physiological stack on class-paired raw rPPG features
    hr = pull = push = 0.0
    if cfg.use_cqsl:
        z_hq, z_lq = raw("z_hq"), raw("z_lq")
        real_idx = [i for i, y in enumerate(bundle.labels) if y == int(Label.REAL)]
        fake_idx = [i for i, y in enumerate(bundle.labels) if y == int(Label.FAKE)]
        n_pairs = min(len(real_idx), len(fake_idx))
        if n_pairs:
            cfg_z = SpectralConfig(fps=cfg.fps * z_hq.shape[1] / bundle.n_frames,
                                   band_low_hz=cfg.band_low_hz,
                                   band_high_hz=cfg.band_high_hz)
            dz_hq = np.zeros_like(z_hq)
            dz_lq = np.zeros_like(z_lq)
            w = cfg.alpha / n_pairs
            for r, f in zip(real_idx[:n_pairs], fake_idx[:n_pairs]):
                _, comps, (g_hr_, g_lr, g_hf, g_lf) = phy_loss_grad(
                    z_hq[r], z_lq[r], z_hq[f], z_lq[f], cfg_z)
                hr += comps["hr"] / n_pairs
                pull += comps["pull"] / n_pairs
                push += comps["push"] / n_pairs
                dz_hq[r] += w * g_hr_
                dz_lq[r] += w * g_lr
                dz_hq[f] += w * g_hf
                dz_lq[f] += w * g_lf
            add_raw("z_hq", dz_hq)
            add_raw("z_lq", dz_lq)

    phy = hr + pull + push
    total = total_loss(bce, phy, aff, alpha=cfg.alpha, beta=cfg.beta)
    breakdown = LossBreakdown(bce=bce, hr=hr, pull=pull, push=push, phy=phy,
                              aff=aff, total=total, alpha=cfg.alpha, beta=cfg.beta)
    for key, g in draw.items():
        grads[f"_d.{key}"] = g
    return breakdown, grads


def _acc(store: dict[str, np.ndarray], key: str, g: np.ndarray) -> None:
    if key in store:
        store[key] += g
    else:
        store[key] = np.array(g, dtype=np.float64)


def encoder_backward(bundle: BatchFeatures, grads: dict[str, np.ndarray],
                     params: dict, cfg: TrainConfig) -> None:
    """Continue backprop from raw-feature gradients into encoder parameters.

    No-op for feature-file batches (no caches). The text encoder is frozen, so
    its gradient path ends at the projection input.
    """

    caches = bundle.caches
    if "p_hq" in caches:
        for key, cache in (("z_hq", "p_hq"), ("z_lq", "p_lq")):
            g = grads.pop(f"_d.{key}", None)
            if g is not None:
                for name, dv in encoders.p_backward(g, caches[cache], params).items():
                    _acc(grads, name, dv)
    if "l_hq" in caches:
        for key, cache in (("e_hq", "l_hq"), ("e_lq", "l_lq")):
            g = grads.pop(f"_d.{key}", None)
            if g is not None:
                for name, dv in encoders.l_backward(g, caches[cache], params).items():
                    _acc(grads, name, dv)
    # raw-feature gradients that have no parameter path (t, or feature mode)
    for key in list(grads):
        if key.startswith("_d."):
            del grads[key]


def batch_gradients(batch, state: TrainState, cfg: TrainConfig | None = None
                    ) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Loss breakdown and full parameter gradients for one batch at the
    current step's stochastic draws (prompts, landmark noise)."""

    cfg = cfg or state.config
    if isinstance(batch[0], FeaturePair):
        bundle = features_batch(batch, cfg)
    else:
        prepared = [s if isinstance(s, PreparedSample) else prepare_sample(s, cfg)
                    for s in batch]
        bundle = encode_batch(prepared, state.params, state.frozen, cfg, state.step)
    breakdown, grads = loss_forward_backward(bundle, state.params, cfg)
    encoder_backward(bundle, grads, state.params, cfg)
    return breakdown, grads


def adamw_update(state: TrainState, grads: dict[str, np.ndarray], lr: float
                 ) -> TrainState:
    """One decoupled-weight-decay adaptive-moment update; returns a new state."""

    cfg = state.config
    new = state.copy()
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for key, p in new.params.items():
        g = grads.get(key)
        if g is None:
            g = np.zeros_like(p)
        new.m1[key] = cfg.beta1 * new.m1[key] + (1.0 - cfg.beta1) * g
        new.m2[key] = cfg.beta2 * new.m2[key] + (1.0 - cfg.beta2) * g * g
        m_hat = new.m1[key] / bc1
        v_hat = new.m2[key] / bc2
        p -= lr * (m_hat / (np.sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * p)
        if np.any(g):
            new.grad_seen.add(key)
    new.step = t
    return new


def train_step(batch, state: TrainState, cfg: TrainConfig | None = None,
               lr: float | None = None) -> tuple[TrainState, LossBreakdown]:
    """Forward both quality branches, combine all losses, update parameters.

    Deterministic given (state, batch); the frozen text table is untouched.
    Raises NonFiniteLoss naming the offending term if any loss diverges.
    """

    cfg = cfg or state.config
    breakdown, grads = batch_gradients(batch, state, cfg)
    for name, value in breakdown.as_dict().items():
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss term {name!r} is not finite at step "
                                f"{state.step}: {value}")
    new = adamw_update(state, grads, cfg.lr_init if lr is None else lr)
    return new, breakdown


def fit(dataset, cfg: TrainConfig, checkpoint_dir=None
        ) -> tuple[TrainState, list[LossBreakdown]]:
    """Train over balanced batches for the configured number of epochs.

    Returns the final state and the per-step loss history. With epochs=0 the
    initial state is returned untouched.
    """

    feature_mode = is_feature_dataset(dataset)
    if feature_mode:
        prepared = list(dataset)
        n_landmarks = None
    else:
        prepared = [prepare_sample(s, cfg) for s in dataset]
        n_landmarks = dataset[0].landmarks.points.shape[1] if dataset else None
    state = init_state(cfg, n_landmarks=n_landmarks, feature_mode=feature_mode)
    history: list[LossBreakdown] = []
    if cfg.epochs == 0:
        return state, history
    per_epoch = len(balanced_batches(prepared, cfg.batch_size, cfg.seed))
    total_steps = cfg.epochs * per_epoch
    for epoch in range(cfg.epochs):
        for batch in balanced_batches(prepared, cfg.batch_size,
                                      cfg.seed + 7919 * epoch):
            lr = lr_at(state.step, total_steps, cfg)
            state, breakdown = train_step(batch, state, cfg, lr=lr)
            history.append(breakdown)
            if (cfg.checkpoint_every > 0 and checkpoint_dir is not None
                    and state.step % cfg.checkpoint_every == 0):
                from .io import save_checkpoint
                save_checkpoint(checkpoint_dir / f"step{state.step:06d}.ckpt", state)
    return state, history


def grad_check(loss_fn, params: dict[str, np.ndarray], step_size: float = 1e-5,
               n_coords: int = 200, rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_fn(params) -> (loss, grads)``; coordinates are sampled across all
    arrays. Pairs where both gradients are below 1e-10 count as exact.
    """

    rng = rng or np.random.default_rng(0)
    _, grads = loss_fn(params)
    keys = sorted(params)
    sizes = np.array([params[k].size for k in keys])
    total = int(sizes.sum())
    n = min(n_coords, total)
    flat_choices = rng.choice(total, size=n, replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for flat in flat_choices:
        ki = int(np.searchsorted(bounds, flat, side="right"))
        offset = int(flat - (bounds[ki - 1] if ki else 0))
        key = keys[ki]
        base = params[key].reshape(-1)[offset]
        probe = {k: v.copy() for k, v in params.items()}
        probe[key].reshape(-1)[offset] = base + step_size
        up, _ = loss_fn(probe)
        probe[key].reshape(-1)[offset] = base - step_size
        down, _ = loss_fn(probe)
        fd = (up - down) / (2.0 * step_size)
        an = float(grads[key].reshape(-1)[offset]) if key in grads else 0.0
        denom = max(abs(fd), abs(an))
        if denom < 1e-10:
            continue
        worst = max(worst, abs(fd - an) / denom)
    return worst
