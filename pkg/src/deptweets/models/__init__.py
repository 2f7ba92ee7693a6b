"""The six classifier families behind one train/predict contract."""

from __future__ import annotations

from typing import Sequence

from deptweets.corpus import LabeledExample
from deptweets.features import EmbeddingTable, EncoderAdapter
from deptweets.labels import LABEL_ORDER
from deptweets.models.artifact import (
    ArtifactError,
    ModelArtifact,
    Prediction,
    load_artifact,
    predict,
    predict_many,
    save_artifact,
)
from deptweets.models.classical import (
    TrainingError,
    train_classical,
    train_linear_svm,
    train_naive_bayes,
    train_random_forest,
)
from deptweets.models.config import FAMILIES, ModelKind, TrainConfig
from deptweets.models.encoder import finetune_encoder
from deptweets.models.neural import train_cnn, train_lstm, train_sequence_model


def train_model(
    train: Sequence[LabeledExample],
    cfg: TrainConfig,
    validation: Sequence[LabeledExample] = (),
    embeddings: EmbeddingTable | None = None,
    adapter: EncoderAdapter | None = None,
) -> ModelArtifact:
    present = {e.label for e in train}
    missing = [c.value for c in LABEL_ORDER[: cfg.class_count] if c not in present]
    if missing:
        raise TrainingError(f"training data has no examples of {', '.join(missing)}")
    kind = cfg.model_kind
    if kind in (ModelKind.NB, ModelKind.SVM, ModelKind.RF):
        return train_classical(train, cfg)
    if kind is ModelKind.ENCODER_FT:
        return finetune_encoder(train, cfg, adapter, validation)
    return train_sequence_model(train, cfg, validation, embeddings)


__all__ = [
    "ArtifactError", "FAMILIES", "ModelArtifact", "ModelKind", "Prediction", "TrainConfig",
    "TrainingError", "finetune_encoder", "load_artifact", "predict", "predict_many", "save_artifact",
    "train_classical", "train_cnn", "train_linear_svm", "train_lstm", "train_model",
    "train_naive_bayes", "train_random_forest",
]
