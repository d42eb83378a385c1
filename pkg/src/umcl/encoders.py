"""Toy stand-in encoders for the three derived modalities.

The physiological encoder reduces a clip to its per-frame intensity trace and
refines it with a small temporal-convolution net; the landmark encoder is a
small recurrent net; the text encoder is a frozen hash-embedding table. Output
dimensions are 320 / 128 / 512 so everything downstream is exercised at the
real interface widths. Forward passes return caches consumed by the matching
backward passes; all parameter gradients are checked against finite
differences in the test suite.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .types import (Label, LandmarkSequence, Modality, ModalityFeature,
                    PromptText, Quality, VideoClip)

Z_DIM = 320
E_DIM = 128
T_DIM = 512

P_CHANNELS = 8
P_KERNEL = 15
L_HIDDEN = 16
T_VOCAB = 4096

#: Landmark sequences are centered per point over time (static pose carries no
#: motion information) and the residual motion is scaled into tanh range.
L_MOTION_GAIN = 25.0


# ---------------------------------------------------------------------------
# small building blocks


def conv1d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-correlation with zero 'same' padding.

    x: (B, Cin, T); w: (Cout, Cin, k) with k odd; b: (Cout,).
    """

    k = w.shape[2]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, k, axis=2)  # (B, Cin, T, k)
    return np.einsum("bctk,ock->bot", win, w, optimize=True) + b[None, :, None]


def conv1d_same_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv1d_same w.r.t. (x, w, b) given upstream dy."""

    k = w.shape[2]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, k, axis=2)
    dw = np.einsum("bot,bctk->ock", dy, win, optimize=True)
    db = dy.sum(axis=(0, 2))
    dyp = np.pad(dy, ((0, 0), (0, 0), (pad, pad)))
    dwin = sliding_window_view(dyp, k, axis=2)  # (B, Cout, T, k)
    dx = np.einsum("botk,ock->bct", dwin, w[:, :, ::-1], optimize=True)
    return dx, dw, db


_RESAMPLE_CACHE: dict[tuple[int, int], np.ndarray] = {}


def resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense linear-interpolation operator mapping length n_in -> n_out."""

    key = (n_in, n_out)
    cached = _RESAMPLE_CACHE.get(key)
    if cached is not None:
        return cached
    r = np.zeros((n_out, n_in))
    if n_out == 1:
        r[0, 0] = 1.0
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        lo = np.minimum(pos.astype(np.int64), n_in - 2)
        frac = pos - lo
        r[np.arange(n_out), lo] = 1.0 - frac
        r[np.arange(n_out), lo + 1] = frac
    _RESAMPLE_CACHE[key] = r
    return r


def intensity_trace(frames: np.ndarray) -> np.ndarray:
    """Per-frame spatial mean over all pixels and channels, float64."""

    f = np.asarray(frames, dtype=np.float64)
    return f.reshape(f.shape[0], -1).mean(axis=1)


# ---------------------------------------------------------------------------
# physiological encoder (P)


def init_p_params(rng: np.random.Generator | None = None,
                  channels: int = P_CHANNELS, kernel: int = P_KERNEL,
                  noise: float = 0.1, envelope_scale: float = 2.0,
                  envelope_bias: float = 0.5) -> dict[str, np.ndarray]:
    """Temporal-conv parameters; identity-initialized when rng is None.

    Identity means the first channel passes the centered trace straight
    through, so spectral content (and hence the heart rate) survives encoding
    before any training. Trainable inits additionally give the remaining
    channels broadband kernels with alternating-sign biases: tanh curvature
    around a nonzero operating point turns filtered oscillation energy into a
    DC shift, which hands gradient descent amplitude-sensitive features from
    the first step.
    """

    mid = kernel // 2
    w1 = np.zeros((channels, 1, kernel))
    w1[0, 0, mid] = 1.0
    b1 = np.zeros(channels)
    w2 = np.zeros((1, channels, kernel))
    w2[0, 0, mid] = 1.0
    b2 = np.zeros(1)
    if rng is not None:
        for c in range(1, channels):
            w1[c, 0, :] = envelope_scale * rng.standard_normal(kernel)
            b1[c] = ((envelope_bias if c % 2 else -envelope_bias)
                     + 0.1 * rng.standard_normal())
        w1[0] += noise * rng.standard_normal((1, kernel))
        w2 += noise * rng.standard_normal(w2.shape)
        b2 += noise * rng.standard_normal(b2.shape)
    return {"p.conv1_w": w1, "p.conv1_b": b1, "p.conv2_w": w2, "p.conv2_b": b2}


def p_forward(traces: np.ndarray, params: dict) -> tuple[np.ndarray, dict]:
    """Traces (B, T) -> physiological features (B, Z_DIM) plus cache."""

    traces = np.asarray(traces, dtype=np.float64)
    x = traces - traces.mean(axis=1, keepdims=True)
    x = x[:, None, :]  # (B, 1, T)
    pre = conv1d_same(x, params["p.conv1_w"], params["p.conv1_b"])
    h = np.tanh(pre)
    y = conv1d_same(h, params["p.conv2_w"], params["p.conv2_b"])[:, 0, :]
    r = resample_matrix(y.shape[1], Z_DIM)
    z = y @ r.T
    return z, {"x": x, "h": h, "r": r}


def p_backward(dz: np.ndarray, cache: dict, params: dict) -> dict[str, np.ndarray]:
    dy = dz @ cache["r"]
    dy = dy[:, None, :]
    dh, dw2, db2 = conv1d_same_backward(dy, cache["h"], params["p.conv2_w"])
    dpre = dh * (1.0 - cache["h"] ** 2)
    _, dw1, db1 = conv1d_same_backward(dpre, cache["x"], params["p.conv1_w"])
    return {"p.conv1_w": dw1, "p.conv1_b": db1, "p.conv2_w": dw2, "p.conv2_b": db2}


def p_encode(clip: VideoClip, params: dict) -> ModalityFeature:
    z, _ = p_forward(intensity_trace(clip.frames)[None, :], params)
    return ModalityFeature(vector=z[0], modality=Modality.P,
                           quality=clip.quality, label=clip.label)


# ---------------------------------------------------------------------------
# landmark encoder (L)


def init_l_params(rng: np.random.Generator, n_landmarks: int,
                  hidden: int = L_HIDDEN) -> dict[str, np.ndarray]:
    """Recurrent parameters with two time scales.

    The first half of the state are fast feature units: random recurrence
    gives them varied filter poles, and alternating biases let tanh curvature
    turn filtered-motion variance into a DC shift. The second half are slow
    integrator units (strong self-recurrence) that accumulate those shifts, so
    the final state carries sequence-level motion statistics rather than the
    last few frames only.
    """

    d_in = 2 * n_landmarks
    n_fast = hidden // 2
    w_x = rng.standard_normal((hidden, d_in)) * (1.2 / np.sqrt(d_in))
    w_x[n_fast:] *= 0.1
    w_h = rng.standard_normal((hidden, hidden)) * (0.7 / np.sqrt(hidden))
    w_h[n_fast:, :] = rng.standard_normal((hidden - n_fast, hidden)) * (0.25 / np.sqrt(hidden))
    for i in range(n_fast, hidden):
        w_h[i, i] = 0.97
    b_h = 0.1 * rng.standard_normal(hidden)
    for i in range(n_fast):
        b_h[i] += 0.4 if i % 2 else -0.4
    return {
        "l.w_x": w_x,
        "l.w_h": w_h,
        "l.b_h": b_h,
        "l.w_o": rng.standard_normal((E_DIM, hidden)) * (1.0 / np.sqrt(hidden)),
        "l.b_o": np.zeros(E_DIM),
    }


def l_forward(points: np.ndarray, params: dict) -> tuple[np.ndarray, dict]:
    """Landmark tensors (B, T, L, 2) -> features (B, E_DIM) plus cache.

    Coordinates are centered per point over time before the recurrence, so
    the net sees motion rather than the static pose.
    """

    pts = np.asarray(points, dtype=np.float64)
    b, t = pts.shape[0], pts.shape[1]
    motion = (pts - pts.mean(axis=1, keepdims=True)) * L_MOTION_GAIN
    x = motion.reshape(b, t, -1)
    hidden = params["l.w_h"].shape[0]
    states = np.zeros((b, t + 1, hidden))
    wx_t = params["l.w_x"].T
    wh_t = params["l.w_h"].T
    for step in range(t):
        pre = x[:, step] @ wx_t + states[:, step] @ wh_t + params["l.b_h"]
        states[:, step + 1] = np.tanh(pre)
    e = states[:, t] @ params["l.w_o"].T + params["l.b_o"]
    return e, {"x": x, "states": states}


def l_backward(de: np.ndarray, cache: dict, params: dict) -> dict[str, np.ndarray]:
    x, states = cache["x"], cache["states"]
    t = x.shape[1]
    grads = {
        "l.w_x": np.zeros_like(params["l.w_x"]),
        "l.w_h": np.zeros_like(params["l.w_h"]),
        "l.b_h": np.zeros_like(params["l.b_h"]),
        "l.w_o": de.T @ states[:, t],
        "l.b_o": de.sum(axis=0),
    }
    dh = de @ params["l.w_o"]
    for step in range(t, 0, -1):
        dpre = dh * (1.0 - states[:, step] ** 2)
        grads["l.w_x"] += dpre.T @ x[:, step - 1]
        grads["l.w_h"] += dpre.T @ states[:, step - 1]
        grads["l.b_h"] += dpre.sum(axis=0)
        dh = dpre @ params["l.w_h"]
    return grads


def l_encode(seq: LandmarkSequence, params: dict) -> ModalityFeature:
    e, _ = l_forward(seq.points[None, ...], params)
    return ModalityFeature(vector=e[0], modality=Modality.L,
                           quality=seq.quality, label=seq.label)


# ---------------------------------------------------------------------------
# text encoder (T, frozen)


def init_t_params(seed: int = 1719, vocab: int = T_VOCAB) -> dict[str, np.ndarray]:
    """Frozen embedding table; never part of the trainable set."""

    rng = np.random.default_rng(seed)
    table = rng.standard_normal((vocab, T_DIM)) / np.sqrt(T_DIM)
    return {"t.embed": table}


def tokenize(text: str) -> list[str]:
    tokens = []
    word = []
    for ch in text.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            tokens.append("".join(word))
            word = []
    if word:
        tokens.append("".join(word))
    return tokens


def token_index(token: str, vocab: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % vocab


def t_forward(texts: list[str], params: dict) -> np.ndarray:
    """Texts -> mean-pooled frozen embeddings (B, T_DIM). No gradient path."""

    table = params["t.embed"]
    out = np.zeros((len(texts), T_DIM))
    for i, text in enumerate(texts):
        tokens = tokenize(text)
        if not tokens:
            continue
        idx = [token_index(tok, table.shape[0]) for tok in tokens]
        out[i] = table[idx].mean(axis=0)
    return out


def t_encode(prompt: PromptText, params: dict) -> ModalityFeature:
    t = t_forward([prompt.text], params)[0]
    return ModalityFeature(vector=t, modality=Modality.T,
                           quality=Quality.HQ, label=prompt.label)


# ---------------------------------------------------------------------------
# projections into the shared space


def init_projection_params(rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Per-modality affine maps into the 320-d shared space."""

    dims = {"P": Z_DIM, "L": E_DIM, "T": T_DIM}
    params: dict[str, np.ndarray] = {}
    for mod, d_in in dims.items():
        params[f"proj.{mod}.w"] = rng.standard_normal((d_in, 320)) / np.sqrt(d_in)
        params[f"proj.{mod}.b"] = np.zeros(320)
    return params


def init_classifier_params(rng: np.random.Generator, n_modalities: int = 3,
                           bias: bool = True) -> dict[str, np.ndarray]:
    d_in = 320 * n_modalities
    params = {"clf.w": rng.standard_normal((d_in, 2)) / np.sqrt(d_in)}
    if bias:
        params["clf.b"] = np.zeros(2)
    return params
