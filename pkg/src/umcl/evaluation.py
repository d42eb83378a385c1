"""AUC/ACC metrics, single-condition evaluation, the compression ladder,
the modality-robustness grid and the four-model ablation driver."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import encoders
from .classifier import softmax
from .degrade import downsample_video, perturb_landmarks, sample_frames
from .errors import EmptyInput, MissingModality, SingleClass
from .prompts import make_prompt
from .types import Label, Sample, derive_rng
from .training import (TrainConfig, TrainState, fit, _FEATURE_KEYS)

_TAG_EVAL_SIGMA = 41
_TAG_EVAL_PROMPT = 42


def auc(scores, labels) -> float:
    """Mann-Whitney rank AUC; ties contribute one half.

    Probability that a random real sample outscores a random fake one.
    """

    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape[0] != y.shape[0]:
        raise ValueError(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    n_pos = int(np.sum(y == int(Label.REAL)))
    n_neg = int(np.sum(y == int(Label.FAKE)))
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"need both classes, have {n_pos} real / {n_neg} fake")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.shape[0], dtype=np.float64)
    ranks[order] = np.arange(1, s.shape[0] + 1)
    # average ranks over tie groups
    sorted_scores = s[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = float(ranks[y == int(Label.REAL)].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def acc(p_real, labels, threshold: float = 0.5) -> float:
    """Fraction of samples where (p_real >= threshold) matches the label."""

    p = np.asarray(p_real, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape[0] == 0:
        raise EmptyInput("acc needs at least one prediction")
    predicted = (p >= threshold).astype(np.int64)
    return float(np.mean(predicted == y))


@dataclass(frozen=True)
class EvalCondition:
    """A named stack of degradations; an empty stack is the clean condition."""

    name: str
    degradations: tuple[dict, ...] = ()


CLEAN = EvalCondition(name="clean")

#: Compression-proxy ladder: stronger spatial downsampling paired with
#: growing landmark jitter.
LADDER_CONDITIONS = (
    EvalCondition("compress-none", ({"video_downsample": 1}, {"landmark_sigma": 0.0})),
    EvalCondition("compress-mild", ({"video_downsample": 2}, {"landmark_sigma": 0.005})),
    EvalCondition("compress-heavy", ({"video_downsample": 4}, {"landmark_sigma": 0.01})),
)

ROBUSTNESS_CONDITIONS = (
    CLEAN,
    EvalCondition("ratio-0.9", ({"frame_ratio": 0.9},)),
    EvalCondition("ratio-0.7", ({"frame_ratio": 0.7},)),
    EvalCondition("ratio-0.5", ({"frame_ratio": 0.5},)),
    EvalCondition("ratio-0.3", ({"frame_ratio": 0.3},)),
    EvalCondition("sigma-0.01", ({"landmark_sigma": 0.01},)),
    EvalCondition("sigma-0.05", ({"landmark_sigma": 0.05},)),
    EvalCondition("prompt-simple", ({"prompt_kind": "simple"},)),
    EvalCondition("prompt-description", ({"prompt_kind": "description"},)),
    EvalCondition("prompt-unrelated", ({"prompt_kind": "unrelated"},)),
    EvalCondition("prompt-opposite", ({"prompt_kind": "opposite"},)),
)

#: Degraded conditions the ablation comparison is scored on: one degradation
#: per modality family, at the severities the robustness grid also uses.
ABLATION_DEGRADED = (
    EvalCondition("ratio-0.5", ({"frame_ratio": 0.5},)),
    EvalCondition("sigma-0.05", ({"landmark_sigma": 0.05},)),
    EvalCondition("compress-heavy", ({"video_downsample": 4}, {"landmark_sigma": 0.01})),
)

#: Modality and loss flags for the four ablation models.
ABLATION_MODELS = {
    "A": {"modalities": ("L",), "use_asa": False, "use_cqsl": False},
    "B": {"modalities": ("P",), "use_asa": False, "use_cqsl": True},
    "C": {"modalities": ("P", "L", "T"), "use_asa": False, "use_cqsl": True},
    "D": {"modalities": ("P", "L", "T"), "use_asa": True, "use_cqsl": True},
}


@dataclass
class ConditionResult:
    name: str
    auc: float
    acc: float
    n_samples: int


@dataclass
class MetricsReport:
    entries: list[ConditionResult] = field(default_factory=list)
    fingerprint: str = ""
    seed: int = 0

    def by_name(self, name: str) -> ConditionResult:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)


def predict_scores(state: TrainState, dataset: list[Sample],
                   condition: EvalCondition = CLEAN, seed: int = 0
                   ) -> tuple[np.ndarray, np.ndarray]:
    """P(real) for every sample after applying the condition's degradations.

    Deterministic given the seed; identity degradations reproduce the clean
    scores bit for bit.
    """

    cfg = state.config
    spec = {}
    for deg in condition.degradations:
        spec.update(deg)
    dropped = spec.get("drop_modality")
    if dropped is not None and cfg.missing_modality == "error":
        raise MissingModality(f"modality {dropped} dropped under policy 'error'")

    labels = np.array([int(s.label) for s in dataset], dtype=np.int64)
    feats: dict[str, np.ndarray] = {}

    if "P" in cfg.modalities and dropped != "P":
        traces = []
        for s in dataset:
            clip = s.clip
            factor = int(spec.get("video_downsample", 1))
            if factor > 1:
                clip = downsample_video(clip, factor)
            ratio = float(spec.get("frame_ratio", 1.0))
            if ratio < 1.0:
                clip = sample_frames(clip, ratio)
            traces.append(encoders.intensity_trace(clip.frames))
        z, _ = encoders.p_forward(np.stack(traces), state.params)
        feats["P"] = z
    if "L" in cfg.modalities and dropped != "L":
        sigma = float(spec.get("landmark_sigma", 0.0))
        pts = []
        for s in dataset:
            lmk = s.landmarks
            if sigma > 0:
                rng = derive_rng(seed, s.seed, _TAG_EVAL_SIGMA)
                lmk = perturb_landmarks(lmk, sigma, rng)
            pts.append(np.asarray(lmk.points, dtype=np.float64))
        e, _ = encoders.l_forward(np.stack(pts), state.params)
        feats["L"] = e
    if "T" in cfg.modalities and dropped != "T":
        kind = spec.get("prompt_kind")
        texts = []
        for s in dataset:
            if kind is None:
                texts.append(s.prompt.text)
            else:
                rng = derive_rng(s.seed, _TAG_EVAL_PROMPT)
                texts.append(make_prompt(s.label, rng, eval_kind=kind).text)
        feats["T"] = encoders.t_forward(texts, state.frozen)

    segments = []
    for mod in cfg.modalities:
        w = state.params[f"proj.{mod}.w"]
        b = state.params[f"proj.{mod}.b"]
        if mod in feats:
            segments.append(feats[mod] @ w + b)
        else:
            # dropped modality contributes its projected zero feature
            segments.append(np.tile(b, (len(dataset), 1)))
    u = np.concatenate(segments, axis=1)
    logits = u @ state.params["clf.w"]
    if "clf.b" in state.params:
        logits = logits + state.params["clf.b"]
    return softmax(logits)[:, int(Label.REAL)], labels


def evaluate(state: TrainState, dataset: list[Sample],
             condition: EvalCondition = CLEAN, seed: int = 0) -> ConditionResult:
    """AUC and ACC for one condition."""

    scores, labels = predict_scores(state, dataset, condition, seed)
    return ConditionResult(name=condition.name, auc=auc(scores, labels),
                           acc=acc(scores, labels), n_samples=len(dataset))


def run_conditions(state: TrainState, dataset: list[Sample],
                   conditions, seed: int = 0,
                   fingerprint: str = "") -> MetricsReport:
    report = MetricsReport(seed=seed, fingerprint=fingerprint)
    for condition in conditions:
        report.entries.append(evaluate(state, dataset, condition, seed))
    return report


def robustness_suite(state: TrainState, dataset: list[Sample], seed: int = 0,
                     fingerprint: str = "") -> MetricsReport:
    """The full degradation grid: clean, four sampling ratios, two landmark
    jitter levels and four prompt kinds."""

    return run_conditions(state, dataset, ROBUSTNESS_CONDITIONS, seed, fingerprint)


def ladder_suite(state: TrainState, dataset: list[Sample], seed: int = 0,
                 fingerprint: str = "") -> MetricsReport:
    return run_conditions(state, dataset, LADDER_CONDITIONS, seed, fingerprint)


def ablation_suite(train_dataset: list[Sample], test_dataset: list[Sample],
                   cfg: TrainConfig, seed: int = 0) -> MetricsReport:
    """Train the four flag configurations on identical data and seeds, then
    evaluate each on the clean and degraded conditions.

    Report entries are named ``<model>/<condition>``.
    """

    report = MetricsReport(seed=seed)
    for model, flags in ABLATION_MODELS.items():
        model_cfg = replace(cfg, **flags)
        state, _ = fit(train_dataset, model_cfg)
        for condition in (CLEAN,) + ABLATION_DEGRADED:
            result = evaluate(state, test_dataset, condition, seed)
            report.entries.append(ConditionResult(
                name=f"{model}/{condition.name}", auc=result.auc,
                acc=result.acc, n_samples=result.n_samples))
    return report


def worst_degraded_auc(report: MetricsReport, model: str) -> float:
    """Minimum AUC of one ablation model over the degraded conditions."""

    prefix = f"{model}/"
    values = [e.auc for e in report.entries
              if e.name.startswith(prefix) and not e.name.endswith("/clean")]
    if not values:
        raise KeyError(f"no degraded entries for model {model}")
    return min(values)
