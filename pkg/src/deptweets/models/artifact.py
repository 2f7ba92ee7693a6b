"""Trained-model container and its on-disk layout.

An artifact directory holds::

    artifact.json     kind, config, label_order, feature_spec, stoplist
    params.bin        named tensors (format below)
    history.json      per-epoch curves (neural kinds; empty lists otherwise)
    <feature files>   vocabulary.txt | subword_vocab.txt | word_index.txt

``params.bin`` is little-endian throughout::

    magic   4 bytes  b"DTPB"
    version u32      1
    count   u32      number of tensors
    count x:
        name_len u16, name (utf-8)
        dtype    u8   0=float64 1=float32 2=int64
        ndim     u8
        dims     ndim x u64
        data     prod(dims) elements, C order
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from deptweets.labels import LABEL_ORDER, DepressionClass
from deptweets.models.config import ModelKind, TrainConfig
from deptweets.textprep import DEFAULT_STOPLIST, preprocess

MAGIC = b"DTPB"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4"), 2: np.dtype("<i8")}
_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1, np.dtype("int64"): 2}


class ArtifactError(RuntimeError):
    pass


def dump_params(params: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", 1, len(params)))
    for name in sorted(params):
        arr = np.asarray(params[name])
        if arr.dtype not in _CODES:
            arr = arr.astype(np.float64 if arr.dtype.kind == "f" else np.int64)
        code = _CODES[arr.dtype]
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BB", code, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return buf.getvalue()


def load_params(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise ArtifactError("params.bin: bad magic")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != 1:
            raise ArtifactError(f"params.bin: unsupported version {version}")
        off = 12
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + nlen].decode("utf-8")
            off += nlen
            code, ndim = struct.unpack_from("<BB", data, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}Q", data, off)
            off += 8 * ndim
            dtype = _DTYPES[code]
            size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if off + size > len(data):
                raise ArtifactError("params.bin: truncated")
            out[name] = np.frombuffer(data, dtype=dtype, count=size // dtype.itemsize, offset=off).reshape(dims).copy()
            off += size
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise ArtifactError(f"params.bin: corrupted ({exc})") from None
    if off != len(data):
        raise ArtifactError("params.bin: trailing bytes")
    return out


@dataclass(frozen=True)
class Prediction:
    label: DepressionClass
    probabilities: tuple[float, ...]
    label_order: tuple[DepressionClass, ...] = LABEL_ORDER

    def probability(self, cls: DepressionClass) -> float:
        return self.probabilities[self.label_order.index(cls)]

    def to_json(self) -> dict:
        return {
            "label": self.label.value,
            "probabilities": {c.value: p for c, p in zip(self.label_order, self.probabilities)},
        }


# kind -> fn(artifact, list of token lists) -> (n, 6) probabilities
_PROBA: dict[ModelKind, Callable[["ModelArtifact", Sequence[Sequence[str]]], np.ndarray]] = {}
# kind -> fn(artifact, directory) writing feature files; and loader counterpart
_SAVE_FEATURES: dict[ModelKind, Callable] = {}
_LOAD_FEATURES: dict[ModelKind, Callable] = {}


def register(kind: ModelKind, proba, save_features, load_features) -> None:
    _PROBA[kind] = proba
    _SAVE_FEATURES[kind] = save_features
    _LOAD_FEATURES[kind] = load_features


@dataclass
class ModelArtifact:
    kind: ModelKind
    config: TrainConfig
    params: dict[str, np.ndarray]
    feature_spec: dict[str, Any]
    features: dict[str, Any] = field(default_factory=dict)
    label_order: tuple[DepressionClass, ...] = LABEL_ORDER
    stoplist: frozenset[str] = DEFAULT_STOPLIST
    history: dict[str, list[float]] = field(default_factory=dict)
    _runtime: Any = field(default=None, repr=False)

    def tokens(self, text: str) -> list[str]:
        return preprocess(text, stoplist=self.stoplist)

    def predict_proba_tokens(self, docs: Sequence[Sequence[str]]) -> np.ndarray:
        if self.kind not in _PROBA:
            raise ArtifactError(f"no predictor registered for {self.kind.value}")
        probs = _PROBA[self.kind](self, docs)
        return np.asarray(probs, dtype=np.float64)

    def prediction_from_probs(self, probs: np.ndarray) -> Prediction:
        # np.argmax takes the first maximum, i.e. ties go to label_order
        return Prediction(self.label_order[int(np.argmax(probs))], tuple(float(p) for p in probs), self.label_order)

    def predict_tokens(self, tokens: Sequence[str]) -> Prediction:
        return self.prediction_from_probs(self.predict_proba_tokens([list(tokens)])[0])


def predict(artifact: ModelArtifact, text: str) -> Prediction:
    """Run the artifact's recorded preprocessing and featurization on raw text."""
    return artifact.predict_tokens(artifact.tokens(text))


def predict_many(artifact: ModelArtifact, texts: Sequence[str]) -> list[Prediction]:
    probs = artifact.predict_proba_tokens([artifact.tokens(t) for t in texts])
    return [artifact.prediction_from_probs(p) for p in probs]


def save_artifact(artifact: ModelArtifact, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": artifact.kind.value,
        "config": artifact.config.to_json(),
        "label_order": [c.value for c in artifact.label_order],
        "feature_spec": artifact.feature_spec,
        "stoplist": sorted(artifact.stoplist),
    }
    (directory / "artifact.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (directory / "params.bin").write_bytes(dump_params(artifact.params))
    (directory / "history.json").write_text(json.dumps(artifact.history, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _SAVE_FEATURES[artifact.kind](artifact, directory)
    return directory


def load_artifact(directory: str | Path) -> ModelArtifact:
    directory = Path(directory)
    meta_path = directory / "artifact.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"no artifact.json in {directory}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        kind = ModelKind(meta["kind"])
        config = TrainConfig.from_json(meta["config"])
        label_order = tuple(DepressionClass.parse(c) for c in meta["label_order"])
        spec = meta["feature_spec"]
        stoplist = frozenset(meta["stoplist"])
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"{meta_path}: corrupted artifact metadata ({exc})") from None
    params_path = directory / "params.bin"
    if not params_path.is_file():
        raise ArtifactError(f"{directory}: params.bin missing")
    params = load_params(params_path.read_bytes())
    history_path = directory / "history.json"
    history = json.loads(history_path.read_text(encoding="utf-8")) if history_path.is_file() else {}
    artifact = ModelArtifact(kind, config, params, spec, {}, label_order, stoplist, history)
    try:
        artifact.features = _LOAD_FEATURES[kind](artifact, directory)
    except FileNotFoundError as exc:
        raise ArtifactError(f"{directory}: feature file missing: {exc}") from None
    return artifact
