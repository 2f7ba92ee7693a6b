from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any


class ModelKind(str, Enum):
    NB = "nb"
    SVM = "svm"
    RF = "rf"
    CNN = "cnn"
    CNN_GLOVE = "cnn_glove"
    LSTM = "lstm"
    LSTM_GLOVE = "lstm_glove"
    ENCODER_FT = "encoder_ft"

    @property
    def is_neural(self) -> bool:
        return self in NEURAL_KINDS

    @property
    def uses_glove(self) -> bool:
        return self in (ModelKind.CNN_GLOVE, ModelKind.LSTM_GLOVE)


NEURAL_KINDS = frozenset(
    {ModelKind.CNN, ModelKind.CNN_GLOVE, ModelKind.LSTM, ModelKind.LSTM_GLOVE, ModelKind.ENCODER_FT}
)
# one kind per model family; the GloVe variants need an embedding file
FAMILIES = (ModelKind.NB, ModelKind.SVM, ModelKind.RF, ModelKind.CNN, ModelKind.LSTM, ModelKind.ENCODER_FT)

_CLASSICAL_FEATURES = {"features": "tfidf", "max_len": 64}

_DEFAULTS: dict[ModelKind, dict[str, Any]] = {
    ModelKind.NB: dict(epochs=1, batch_size=0, dropout=0.0, optimizer="adam", learning_rate=0.0,
                       extras={**_CLASSICAL_FEATURES, "nb_alpha": 1.0}),
    ModelKind.SVM: dict(epochs=30, batch_size=32, dropout=0.0, optimizer="adam", learning_rate=0.0,
                        extras={**_CLASSICAL_FEATURES, "svm_C": 1.0}),
    ModelKind.RF: dict(epochs=1, batch_size=0, dropout=0.0, optimizer="adam", learning_rate=0.0,
                       extras={**_CLASSICAL_FEATURES, "rf_trees": 100, "max_depth": None,
                               "max_features": "sqrt", "bootstrap": True, "feature_cap": 2000}),
    ModelKind.CNN: dict(epochs=10, batch_size=32, dropout=0.5, optimizer="adam", learning_rate=1e-3,
                        extras={"cnn_filters": 64, "filter_widths": [3, 4, 5], "embed_dim": 64,
                                "max_len": 64, "subword_vocab_size": 2000}),
    ModelKind.CNN_GLOVE: dict(epochs=10, batch_size=64, dropout=0.5, optimizer="adam", learning_rate=1e-3,
                              extras={"cnn_filters": 64, "filter_widths": [3, 4, 5], "max_len": 64,
                                      "embedding_dim": 100, "oov_policy": "zeros"}),
    ModelKind.LSTM: dict(epochs=10, batch_size=32, dropout=0.2, optimizer="adam", learning_rate=1e-3,
                         extras={"lstm_layers": 2, "lstm_units": 64, "embed_dim": 64, "max_len": 64,
                                 "subword_vocab_size": 2000}),
    ModelKind.LSTM_GLOVE: dict(epochs=10, batch_size=32, dropout=0.4, optimizer="adamax", learning_rate=1e-3,
                               extras={"lstm_layers": 1, "lstm_units": 300, "max_len": 64,
                                       "embedding_dim": 100, "oov_policy": "zeros"}),
    ModelKind.ENCODER_FT: dict(epochs=10, batch_size=32, dropout=0.1, optimizer="adam", learning_rate=2e-5,
                               extras={"adapter": "hash-projection", "hidden_dim": 128, "max_len": 64,
                                       "subword_vocab_size": 2000, "head_learning_rate": 1e-2,
                                       "finetune_encoder": True}),
}


@dataclass
class TrainConfig:
    """Hyperparameters for one model kind. ``TrainConfig.default(kind)`` gives the reference setup."""

    model_kind: ModelKind
    epochs: int
    batch_size: int
    dropout: float
    optimizer: str
    learning_rate: float
    seed: int = 0
    class_count: int = 6
    class_weight: str | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.model_kind = ModelKind(self.model_kind)
        if self.optimizer not in ("adam", "adamax"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.class_weight not in (None, "balanced"):
            raise ValueError("class_weight must be None or 'balanced'")

    @classmethod
    def default(cls, kind: ModelKind | str, **overrides) -> "TrainConfig":
        kind = ModelKind(kind)
        values = copy.deepcopy(_DEFAULTS[kind])
        extras = values.pop("extras")
        extras.update(overrides.pop("extras", {}))
        values.update(overrides)
        return cls(model_kind=kind, extras=extras, **values)

    def to_json(self) -> dict[str, Any]:
        out = asdict(self)
        out["model_kind"] = self.model_kind.value
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "TrainConfig":
        return cls(**obj)
