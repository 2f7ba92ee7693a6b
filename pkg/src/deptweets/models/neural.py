"""CNN and LSTM text classifiers (learned subword or frozen pretrained embeddings)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from deptweets.corpus import LabeledExample
from deptweets.features import EmbeddingTable, OOVPolicy, load_embeddings
from deptweets.models.artifact import ModelArtifact, register
from deptweets.models.classical import TrainingError, balanced_weights, label_indices
from deptweets.models.config import ModelKind, TrainConfig
from deptweets.textprep import (
    SubwordVocab,
    encode,
    load_subword_vocab,
    save_subword_vocab,
    train_subword_vocab,
)

PAD_INDEX, OOV_INDEX = 0, 1


class TextCNN(nn.Module):
    """Embedding -> parallel 1-D convolutions -> global max pool -> dropout -> dense."""

    def __init__(self, n_embed: int, embed_dim: int, n_classes: int, filters: int = 64,
                 widths: Sequence[int] = (3, 4, 5), dropout: float = 0.5, pad_idx: int = 0,
                 frozen_weights: np.ndarray | None = None):
        super().__init__()
        self.embedding = nn.Embedding(n_embed, embed_dim, padding_idx=pad_idx)
        if frozen_weights is not None:
            self.embedding.weight.data.copy_(torch.as_tensor(frozen_weights))
            self.embedding.weight.requires_grad_(False)
        self.convs = nn.ModuleList(nn.Conv1d(embed_dim, filters, w) for w in widths)
        self.dropout = nn.Dropout(dropout)
        self.out = nn.Linear(filters * len(widths), n_classes)

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        x = self.embedding(ids).transpose(1, 2)  # (batch, embed, time)
        pooled = [torch.relu(conv(x)).amax(dim=2) for conv in self.convs]
        return self.out(self.dropout(torch.cat(pooled, dim=1)))


class TextLSTM(nn.Module):
    """Embedding -> stacked LSTM -> state at last real position -> dropout -> dense."""

    def __init__(self, n_embed: int, embed_dim: int, n_classes: int, units: int = 64, layers: int = 2,
                 dropout: float = 0.2, pad_idx: int = 0, frozen_weights: np.ndarray | None = None):
        super().__init__()
        self.embedding = nn.Embedding(n_embed, embed_dim, padding_idx=pad_idx)
        if frozen_weights is not None:
            self.embedding.weight.data.copy_(torch.as_tensor(frozen_weights))
            self.embedding.weight.requires_grad_(False)
        self.lstm = nn.LSTM(embed_dim, units, num_layers=layers, batch_first=True,
                            dropout=dropout if layers > 1 else 0.0)
        self.dropout = nn.Dropout(dropout)
        self.out = nn.Linear(units, n_classes)

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        outputs, _ = self.lstm(self.embedding(ids))
        last = (lengths.clamp(min=1) - 1).view(-1, 1, 1).expand(-1, 1, outputs.size(2))
        return self.out(self.dropout(outputs.gather(1, last).squeeze(1)))


def make_optimizer(name: str, params, lr: float) -> torch.optim.Optimizer:
    params = [p for p in params if p.requires_grad]
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    if name == "adamax":
        return torch.optim.Adamax(params, lr=lr)
    raise TrainingError(f"unknown optimizer {name!r}")


def _evaluate(module: nn.Module, inputs: Sequence[torch.Tensor], y: torch.Tensor,
              loss_fn: nn.Module, batch_size: int) -> tuple[float, float]:
    module.eval()
    total_loss, correct = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(y), batch_size):
            sl = slice(start, start + batch_size)
            logits = module(*(t[sl] for t in inputs))
            total_loss += float(loss_fn(logits, y[sl])) * len(y[sl])
            correct += int((logits.argmax(dim=1) == y[sl]).sum())
    return total_loss / len(y), correct / len(y)


def fit_module(
    module: nn.Module,
    train_inputs: Sequence[torch.Tensor],
    y_train: torch.Tensor,
    cfg: TrainConfig,
    val_inputs: Sequence[torch.Tensor] | None = None,
    y_val: torch.Tensor | None = None,
    lr: float | None = None,
) -> dict[str, list[float]]:
    """Mini-batch training with cross-entropy; returns per-epoch curves."""
    n = len(y_train)
    if n == 0:
        raise TrainingError("empty training set")
    if cfg.batch_size < 1:
        raise TrainingError("batch_size must be positive")
    for t in train_inputs:
        if len(t) != n:
            raise TrainingError("inconsistent input lengths")
    weight = None
    if cfg.class_weight == "balanced":
        weight = torch.as_tensor(balanced_weights(y_train.numpy(), cfg.class_count), dtype=torch.float32)
    loss_fn = nn.CrossEntropyLoss(weight=weight)
    eval_loss = nn.CrossEntropyLoss()
    opt = make_optimizer(cfg.optimizer, module.parameters(), cfg.learning_rate if lr is None else lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    history: dict[str, list[float]] = {"train_loss": [], "train_accuracy": [], "val_loss": [], "val_accuracy": []}
    for _ in range(cfg.epochs):
        module.train()
        order = torch.randperm(n, generator=gen)
        run_loss, run_correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits = module(*(t[idx] for t in train_inputs))
            loss = loss_fn(logits, y_train[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            run_loss += float(loss.detach()) * len(idx)
            run_correct += int((logits.detach().argmax(dim=1) == y_train[idx]).sum())
        history["train_loss"].append(run_loss / n)
        history["train_accuracy"].append(run_correct / n)
        if val_inputs is not None and y_val is not None and len(y_val):
            vl, va = _evaluate(module, val_inputs, y_val, eval_loss, max(cfg.batch_size, 64))
            history["val_loss"].append(vl)
            history["val_accuracy"].append(va)
    module.eval()
    return history


def state_to_params(module: nn.Module, prefix: str = "net.") -> dict[str, np.ndarray]:
    return {prefix + k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def params_to_state(params: dict[str, np.ndarray], prefix: str = "net.") -> dict[str, torch.Tensor]:
    return {k[len(prefix):]: torch.from_numpy(np.ascontiguousarray(v)) for k, v in params.items() if k.startswith(prefix)}


# --------------------------------------------------------------------------
# input preparation


def subword_inputs(docs: Sequence[Sequence[str]], vocab: SubwordVocab) -> tuple[torch.Tensor, torch.Tensor]:
    seqs = [encode(d, vocab) for d in docs]
    ids = torch.tensor([s.ids for s in seqs], dtype=torch.long).reshape(len(seqs), vocab.max_len)
    lengths = torch.tensor([s.length for s in seqs], dtype=torch.long)
    return ids, lengths


def word_inputs(docs: Sequence[Sequence[str]], index: dict[str, int], max_len: int) -> tuple[torch.Tensor, torch.Tensor]:
    ids = torch.zeros((len(docs), max_len), dtype=torch.long)
    lengths = torch.zeros(len(docs), dtype=torch.long)
    for r, doc in enumerate(docs):
        row = [index.get(t, OOV_INDEX) for t in doc[:max_len]]
        if row:
            ids[r, :len(row)] = torch.tensor(row)
        lengths[r] = len(row)
    return ids, lengths


def embedding_matrix(terms: Sequence[str], table: EmbeddingTable) -> np.ndarray:
    """Rows: padding (zeros), OOV (per the table's policy), then ``terms`` in order."""
    mat = np.zeros((len(terms) + 2, table.d), dtype=np.float32)
    mat[OOV_INDEX] = table.lookup("\x00oov\x00")
    for i, term in enumerate(terms, start=2):
        mat[i] = table.lookup(term)
    return mat


def build_module(kind: ModelKind, cfg: TrainConfig, n_embed: int, embed_dim: int,
                 frozen: np.ndarray | None = None) -> nn.Module:
    ex = cfg.extras
    if kind in (ModelKind.CNN, ModelKind.CNN_GLOVE):
        return TextCNN(n_embed, embed_dim, cfg.class_count, int(ex.get("cnn_filters", 64)),
                       tuple(ex.get("filter_widths", (3, 4, 5))), cfg.dropout, PAD_INDEX, frozen)
    if kind in (ModelKind.LSTM, ModelKind.LSTM_GLOVE):
        return TextLSTM(n_embed, embed_dim, cfg.class_count, int(ex.get("lstm_units", 64)),
                        int(ex.get("lstm_layers", 2)), cfg.dropout, PAD_INDEX, frozen)
    raise TrainingError(f"{kind.value} is not a CNN/LSTM kind")


def _resolve_table(cfg: TrainConfig, table: EmbeddingTable | None) -> EmbeddingTable:
    if table is not None:
        return table
    path = cfg.extras.get("embeddings_path")
    if not path:
        raise TrainingError(f"{cfg.model_kind.value} needs pretrained embeddings (extras.embeddings_path)")
    return load_embeddings(path, int(cfg.extras.get("embedding_dim", 100)),
                           OOVPolicy(cfg.extras.get("oov_policy", "zeros")))


class _Prepared:
    """Everything needed to turn token lists into model inputs for one artifact."""

    def __init__(self, kind: ModelKind, cfg: TrainConfig, features: dict):
        self.kind = kind
        self.max_len = int(cfg.extras.get("max_len", 64))
        self.features = features

    def inputs(self, docs):
        if self.kind.uses_glove:
            return word_inputs(docs, self.features["word_index"], self.max_len)
        return subword_inputs(docs, self.features["subword_vocab"])


def train_sequence_model(
    train: Sequence[LabeledExample],
    cfg: TrainConfig,
    validation: Sequence[LabeledExample] = (),
    embeddings: EmbeddingTable | None = None,
) -> ModelArtifact:
    """Shared trainer for ``cnn``, ``cnn_glove``, ``lstm`` and ``lstm_glove``."""
    kind = cfg.model_kind
    if kind not in (ModelKind.CNN, ModelKind.CNN_GLOVE, ModelKind.LSTM, ModelKind.LSTM_GLOVE):
        raise TrainingError(f"{kind.value} is not a CNN/LSTM kind")
    if not train:
        raise TrainingError("empty training set")
    torch.manual_seed(cfg.seed)
    ex = cfg.extras
    max_len = int(ex.get("max_len", 64))
    docs = [list(e.tokens) for e in train]
    frozen = None
    if kind.uses_glove:
        table = _resolve_table(cfg, embeddings)
        terms = sorted({t for d in docs for t in d})
        index = {t: i for i, t in enumerate(terms, start=2)}
        frozen = embedding_matrix(terms, table)
        features = {"word_index": index, "terms": terms}
        n_embed, embed_dim = frozen.shape
        spec = {"tokens": "normalize+stopwords", "inputs": "words", "word_index": "word_index.txt",
                "embedding_dim": embed_dim, "n_embed": n_embed}
    else:
        corpus = [" ".join(d) for d in docs]
        alphabet = len({ch for text in corpus for ch in text if ch != " "})
        target = max(int(ex.get("subword_vocab_size", 2000)), 2 * alphabet + 4)
        vocab = train_subword_vocab(corpus or [""], target, max_len=max_len)
        features = {"subword_vocab": vocab}
        n_embed, embed_dim = len(vocab), int(ex.get("embed_dim", 64))
        spec = {"tokens": "normalize+stopwords", "inputs": "subwords", "subword_vocab": "subword_vocab.txt",
                "embedding_dim": embed_dim, "n_embed": n_embed}
    prep = _Prepared(kind, cfg, features)
    module = build_module(kind, cfg, n_embed, embed_dim, frozen)
    x_train = prep.inputs(docs)
    y_train = torch.as_tensor(label_indices(train))
    x_val = y_val = None
    if validation:
        x_val = prep.inputs([list(e.tokens) for e in validation])
        y_val = torch.as_tensor(label_indices(validation))
    history = fit_module(module, x_train, y_train, cfg, x_val, y_val)
    artifact = ModelArtifact(kind, cfg, state_to_params(module), spec, features, history=history)
    artifact._runtime = module
    return artifact


def train_cnn(train, cfg: TrainConfig, validation=(), embeddings=None) -> ModelArtifact:
    if cfg.model_kind not in (ModelKind.CNN, ModelKind.CNN_GLOVE):
        raise TrainingError("train_cnn needs model_kind cnn or cnn_glove")
    return train_sequence_model(train, cfg, validation, embeddings)


def train_lstm(train, cfg: TrainConfig, validation=(), embeddings=None) -> ModelArtifact:
    if cfg.model_kind not in (ModelKind.LSTM, ModelKind.LSTM_GLOVE):
        raise TrainingError("train_lstm needs model_kind lstm or lstm_glove")
    return train_sequence_model(train, cfg, validation, embeddings)


def _runtime(artifact: ModelArtifact) -> nn.Module:
    if artifact._runtime is None:
        spec = artifact.feature_spec
        module = build_module(artifact.kind, artifact.config, int(spec["n_embed"]), int(spec["embedding_dim"]))
        try:
            module.load_state_dict(params_to_state(artifact.params))
        except RuntimeError as exc:
            raise TrainingError(f"corrupted network parameters: {exc}") from None
        module.eval()
        artifact._runtime = module
    return artifact._runtime


def _proba(artifact: ModelArtifact, docs) -> np.ndarray:
    module = _runtime(artifact)
    prep = _Prepared(artifact.kind, artifact.config, artifact.features)
    ids, lengths = prep.inputs(docs)
    with torch.no_grad():
        probs = torch.softmax(module(ids, lengths).double(), dim=1)
    return probs.numpy()


def _save(artifact: ModelArtifact, directory: Path) -> None:
    if artifact.kind.uses_glove:
        terms = artifact.features["terms"]
        (directory / "word_index.txt").write_text("".join(t + "\n" for t in terms), encoding="utf-8")
    else:
        save_subword_vocab(artifact.features["subword_vocab"], directory / "subword_vocab.txt")


def _load(artifact: ModelArtifact, directory: Path) -> dict:
    spec = artifact.feature_spec
    if artifact.kind.uses_glove:
        terms = (directory / spec["word_index"]).read_text(encoding="utf-8").splitlines()
        return {"terms": terms, "word_index": {t: i for i, t in enumerate(terms, start=2)}}
    return {"subword_vocab": load_subword_vocab(directory / spec["subword_vocab"])}


for _kind in (ModelKind.CNN, ModelKind.CNN_GLOVE, ModelKind.LSTM, ModelKind.LSTM_GLOVE):
    register(_kind, _proba, _save, _load)
