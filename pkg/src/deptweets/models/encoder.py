"""Classification head over a contextual encoder's pooled vector."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from deptweets.corpus import LabeledExample
from deptweets.features import EncoderAdapter, EncoderUnavailable, HashEncoderAdapter, TransformerEncoderAdapter
from deptweets.models.artifact import ModelArtifact, register
from deptweets.models.classical import TrainingError, label_indices
from deptweets.models.config import ModelKind, TrainConfig
from deptweets.models.neural import fit_module, params_to_state, state_to_params
from deptweets.textprep import load_subword_vocab, save_subword_vocab, train_subword_vocab

log = logging.getLogger(__name__)


class ClassificationHead(nn.Module):
    def __init__(self, hidden_dim: int, n_classes: int, dropout: float):
        super().__init__()
        self.dropout = nn.Dropout(dropout)
        self.out = nn.Linear(hidden_dim, n_classes)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.out(self.dropout(pooled))


class _EncoderClassifier(nn.Module):
    def __init__(self, adapter: TransformerEncoderAdapter, head: ClassificationHead):
        super().__init__()
        self.encoder = adapter.torch_module
        self.adapter = adapter
        self.head = head

    def forward(self, ids, mask):
        return self.head(self.adapter.forward(ids, mask))


def pooled_vectors(adapter: EncoderAdapter, docs: Sequence[Sequence[str]]) -> np.ndarray:
    if not docs:
        return np.zeros((0, adapter.hidden_dim))
    return np.stack([adapter.encode(adapter.prepare(d))[1] for d in docs])


def hash_adapter_for(train_docs: Sequence[Sequence[str]], cfg: TrainConfig) -> HashEncoderAdapter:
    ex = cfg.extras
    corpus = [" ".join(d) for d in train_docs]
    alphabet = len({ch for text in corpus for ch in text if ch != " "})
    target = max(int(ex.get("subword_vocab_size", 2000)), 2 * alphabet + 4)
    vocab = train_subword_vocab(corpus or [""], target, max_len=int(ex.get("max_len", 64)))
    return HashEncoderAdapter(vocab, int(ex.get("hidden_dim", 128)), cfg.seed)


def finetune_encoder(
    train: Sequence[LabeledExample],
    cfg: TrainConfig,
    adapter: EncoderAdapter | None = None,
    validation: Sequence[LabeledExample] = (),
) -> ModelArtifact:
    """Train a dropout + dense softmax head on the adapter's pooled vector.

    Encoder weights are updated too when the adapter supports it and
    ``extras.finetune_encoder`` is set (using ``learning_rate``); otherwise
    only the head trains, with ``extras.head_learning_rate``.
    """
    if cfg.model_kind is not ModelKind.ENCODER_FT:
        raise TrainingError("finetune_encoder needs model_kind encoder_ft")
    if not train:
        raise TrainingError("empty training set")
    torch.manual_seed(cfg.seed)
    docs = [list(e.tokens) for e in train]
    val_docs = [list(e.tokens) for e in validation]
    if adapter is None:
        name = cfg.extras.get("adapter", "hash-projection")
        if name == "hash-projection":
            adapter = hash_adapter_for(docs, cfg)
        elif name == "transformer":
            adapter = TransformerEncoderAdapter(cfg.extras.get("model_name", "bert-base-uncased"),
                                                int(cfg.extras.get("max_len", 64)))
        else:
            raise EncoderUnavailable(
                f"unknown adapter {name!r}; use 'hash-projection' for head-only training"
            )
    head = ClassificationHead(adapter.hidden_dim, cfg.class_count, cfg.dropout)
    y_train = torch.as_tensor(label_indices(train))
    y_val = torch.as_tensor(label_indices(validation)) if validation else None
    full = adapter.supports_finetune and bool(cfg.extras.get("finetune_encoder", True))
    if full:
        model = _EncoderClassifier(adapter, head)

        def batch(ds):
            seqs = [adapter.prepare(d) for d in ds]
            return (torch.tensor([s.ids for s in seqs]), torch.tensor([s.attention_mask for s in seqs]))

        history = fit_module(model, batch(docs), y_train, cfg,
                             batch(val_docs) if validation else None, y_val)
        mode = "full"
    else:
        if adapter.supports_finetune:
            log.info("encoder frozen by config; training the head only")
        x_train = torch.as_tensor(pooled_vectors(adapter, docs), dtype=torch.float32)
        x_val = torch.as_tensor(pooled_vectors(adapter, val_docs), dtype=torch.float32) if validation else None
        history = fit_module(head, (x_train,), y_train, cfg, (x_val,) if validation else None, y_val,
                             lr=float(cfg.extras.get("head_learning_rate", 1e-2)))
        mode = "head_only"
    spec = {"tokens": "normalize+stopwords", "inputs": "encoder", "adapter": adapter.spec(), "training": mode}
    features = {"adapter": adapter}
    if isinstance(adapter, HashEncoderAdapter):
        spec["subword_vocab"] = "subword_vocab.txt"
    artifact = ModelArtifact(ModelKind.ENCODER_FT, cfg, state_to_params(head, "head."), spec, features,
                             history=history)
    artifact._runtime = head
    return artifact


def _runtime(artifact: ModelArtifact) -> ClassificationHead:
    if artifact._runtime is None:
        adapter = artifact.features["adapter"]
        head = ClassificationHead(adapter.hidden_dim, artifact.config.class_count, artifact.config.dropout)
        try:
            head.load_state_dict(params_to_state(artifact.params, "head."))
        except RuntimeError as exc:
            raise TrainingError(f"corrupted head parameters: {exc}") from None
        head.eval()
        artifact._runtime = head
    return artifact._runtime


def _proba(artifact: ModelArtifact, docs) -> np.ndarray:
    head = _runtime(artifact)
    pooled = torch.as_tensor(pooled_vectors(artifact.features["adapter"], docs), dtype=torch.float32)
    with torch.no_grad():
        return torch.softmax(head(pooled).double(), dim=1).numpy()


def _save(artifact: ModelArtifact, directory: Path) -> None:
    adapter = artifact.features["adapter"]
    if isinstance(adapter, HashEncoderAdapter):
        save_subword_vocab(adapter.vocab, directory / "subword_vocab.txt")
    elif artifact.feature_spec.get("training") == "full":
        adapter.torch_module.save_pretrained(directory / "encoder")
        adapter.tokenizer.save_pretrained(directory / "encoder")


def _load(artifact: ModelArtifact, directory: Path) -> dict:
    spec = artifact.feature_spec["adapter"]
    if spec["name"] == HashEncoderAdapter.name:
        vocab = load_subword_vocab(directory / artifact.feature_spec["subword_vocab"])
        return {"adapter": HashEncoderAdapter(vocab, int(spec["hidden_dim"]), int(spec["seed"]))}
    if spec["name"] == TransformerEncoderAdapter.name:
        source = directory / "encoder"
        name = str(source) if source.is_dir() else spec["model_name"]
        return {"adapter": TransformerEncoderAdapter(name, int(spec["max_len"]))}
    raise EncoderUnavailable(f"unknown adapter {spec['name']!r}")


register(ModelKind.ENCODER_FT, _proba, _save, _load)
