"""Binary artifact formats and text serialization.

Feature records ("UMCLFEAT") carry per-sample z/e/t vectors at both quality
levels so externally extracted features can bypass the toy encoders.
Checkpoints ("UMCLCKPT") carry the config snapshot, step counter and every
named parameter block, and round-trip bit-exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, FileFormatError
from .types import FeaturePair, Label, Quality
from .training import TrainConfig, TrainState

FEATURE_MAGIC = b"UMCLFEAT"
CHECKPOINT_MAGIC = b"UMCLCKPT"
FORMAT_VERSION = 1

_Z, _E, _T = 320, 128, 512


# ---------------------------------------------------------------------------
# canonical flat key=value text


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def canonical_text(mapping: dict) -> str:
    """Key-sorted ``key=value`` lines; the fingerprint hashes this text."""

    return "".join(f"{k}={format_value(mapping[k])}\n" for k in sorted(mapping))


def parse_flat_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def config_text(cfg: TrainConfig) -> str:
    return canonical_text(dataclasses.asdict(cfg))


def fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_config_text(text: str) -> TrainConfig:
    raw = parse_flat_text(text)
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = _coerce(value, fields[key].type, key)
    return TrainConfig(**kwargs)


def _coerce(value: str, type_name: str, key: str):
    t = str(type_name)
    try:
        if t == "bool":
            if value not in ("true", "false"):
                raise ValueError(value)
            return value == "true"
        if t == "int":
            return int(value)
        if t == "float":
            return float(value)
        if t.startswith("tuple"):
            return tuple(v for v in value.split(",") if v)
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc


# ---------------------------------------------------------------------------
# feature records


def write_features(path, pairs: list[FeaturePair]) -> None:
    """Two records per pair (HQ then LQ), little-endian f32 vectors."""

    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<Q", 2 * len(pairs)))
        for pair in pairs:
            for quality, z, e, t in ((Quality.HQ, pair.z_hq, pair.e_hq, pair.t_hq),
                                     (Quality.LQ, pair.z_lq, pair.e_lq, pair.t_lq)):
                ident = pair.sample_id.encode("utf-8")
                fh.write(struct.pack("<H", len(ident)))
                fh.write(ident)
                fh.write(struct.pack("<BB", int(pair.label), quality.value))
                for vec, dim in ((z, _Z), (e, _E), (t, _T)):
                    arr = np.asarray(vec, dtype="<f4").reshape(-1)
                    if arr.shape[0] != dim:
                        raise FileFormatError(
                            f"vector for {pair.sample_id} has dim {arr.shape[0]}, want {dim}")
                    fh.write(arr.tobytes())


def read_features(path) -> list[FeaturePair]:
    path = Path(path)
    data = path.read_bytes()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FileFormatError(f"{path}: truncated at byte {off}")
        chunk = data[off:off + n]
        off += n
        return chunk

    if take(8) != FEATURE_MAGIC:
        raise FileFormatError(f"{path}: bad magic, not a feature file")
    (version,) = struct.unpack("<H", take(2))
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    (count,) = struct.unpack("<Q", take(8))
    halves: dict[str, dict] = {}
    order: list[str] = []
    for _ in range(count):
        (id_len,) = struct.unpack("<H", take(2))
        ident = take(id_len).decode("utf-8")
        label, quality = struct.unpack("<BB", take(2))
        vecs = {}
        for name, dim in (("z", _Z), ("e", _E), ("t", _T)):
            vecs[name] = np.frombuffer(take(4 * dim), dtype="<f4").copy()
        entry = halves.setdefault(ident, {"label": label})
        if ident not in order:
            order.append(ident)
        if entry["label"] != label:
            raise FileFormatError(f"{path}: inconsistent label for {ident!r}")
        qkey = "hq" if quality == Quality.HQ.value else "lq"
        if qkey in entry:
            raise FileFormatError(f"{path}: duplicate {qkey} record for {ident!r}")
        entry[qkey] = vecs
    if off != len(data):
        raise FileFormatError(f"{path}: {len(data) - off} trailing bytes")
    pairs = []
    for ident in order:
        entry = halves[ident]
        if "hq" not in entry or "lq" not in entry:
            raise FileFormatError(f"{path}: sample {ident!r} missing a quality record")
        pairs.append(FeaturePair(
            sample_id=ident, label=Label(entry["label"]),
            z_hq=entry["hq"]["z"], z_lq=entry["lq"]["z"],
            e_hq=entry["hq"]["e"], e_lq=entry["lq"]["e"],
            t_hq=entry["hq"]["t"], t_lq=entry["lq"]["t"]))
    return pairs


# ---------------------------------------------------------------------------
# checkpoints


def _write_block(fh, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_checkpoint(path, state: TrainState, metrics_text: str = "") -> None:
    path = Path(path)
    blocks: list[tuple[str, np.ndarray]] = []
    for prefix, group in (("param", state.params), ("frozen", state.frozen),
                          ("m1", state.m1), ("m2", state.m2)):
        for key in sorted(group):
            blocks.append((f"{prefix}.{key}", group[key]))
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        cfg_bytes = config_text(state.config).encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<Q", state.step))
        metrics_bytes = metrics_text.encode("utf-8")
        fh.write(struct.pack("<I", len(metrics_bytes)))
        fh.write(metrics_bytes)
        fh.write(struct.pack("<I", len(blocks)))
        for name, arr in blocks:
            _write_block(fh, name, arr)


def load_checkpoint(path) -> tuple[TrainState, str]:
    """Returns the restored state and the metrics text stored at save time."""

    path = Path(path)
    data = path.read_bytes()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FileFormatError(f"{path}: truncated at byte {off}")
        chunk = data[off:off + n]
        off += n
        return chunk

    if take(8) != CHECKPOINT_MAGIC:
        raise FileFormatError(f"{path}: bad magic, not a checkpoint")
    (version,) = struct.unpack("<H", take(2))
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    cfg = parse_config_text(take(cfg_len).decode("utf-8"))
    (step,) = struct.unpack("<Q", take(8))
    (metrics_len,) = struct.unpack("<I", take(4))
    metrics_text = take(metrics_len).decode("utf-8")
    (n_blocks,) = struct.unpack("<I", take(4))
    groups: dict[str, dict[str, np.ndarray]] = {
        "param": {}, "frozen": {}, "m1": {}, "m2": {}}
    for _ in range(n_blocks):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).copy()
        prefix, key = name.split(".", 1)
        if prefix not in groups:
            raise FileFormatError(f"{path}: unknown block group {prefix!r}")
        groups[prefix][key] = arr
    if off != len(data):
        raise FileFormatError(f"{path}: {len(data) - off} trailing bytes")
    state = TrainState(params=groups["param"], frozen=groups["frozen"],
                       m1=groups["m1"], m2=groups["m2"], step=step, config=cfg)
    return state, metrics_text


# ---------------------------------------------------------------------------
# metrics reports


def report_text(report) -> str:
    lines = ["format=umcl-metrics", f"version={FORMAT_VERSION}",
             f"seed={report.seed}", f"fingerprint={report.fingerprint}",
             f"n_conditions={len(report.entries)}"]
    for i, entry in enumerate(report.entries):
        lines.append(f"condition.{i}.name={entry.name}")
        lines.append(f"condition.{i}.auc={entry.auc!r}")
        lines.append(f"condition.{i}.acc={entry.acc!r}")
        lines.append(f"condition.{i}.n={entry.n_samples}")
    return "\n".join(lines) + "\n"


def report_table(report) -> str:
    lines = ["name\tauc\tacc\tn"]
    for entry in report.entries:
        lines.append(f"{entry.name}\t{entry.auc!r}\t{entry.acc!r}\t{entry.n_samples}")
    return "\n".join(lines) + "\n"


def parse_report_text(text: str):
    from .evaluation import ConditionResult, MetricsReport

    raw = parse_flat_text(text)
    if raw.get("format") != "umcl-metrics":
        raise FileFormatError("not a metrics document")
    report = MetricsReport(seed=int(raw["seed"]), fingerprint=raw["fingerprint"])
    for i in range(int(raw["n_conditions"])):
        report.entries.append(ConditionResult(
            name=raw[f"condition.{i}.name"],
            auc=float(raw[f"condition.{i}.auc"]),
            acc=float(raw[f"condition.{i}.acc"]),
            n_samples=int(raw[f"condition.{i}.n"])))
    return report
