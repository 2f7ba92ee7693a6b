"""Token streams to model inputs: counts, TF-IDF, word embeddings, encoders.

TF-IDF weighting, exactly::

    idf(t)    = ln((1 + n_docs) / (1 + df(t))) + 1
    w(t, d)   = tf(t, d) * idf(t)          # tf = raw count of t in d
    vector    = w / ||w||_2                # left as all zeros if w == 0

Terms outside the fitted vocabulary are skipped.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from deptweets.textprep import EncodedSequence, SubwordVocab, encode


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    terms: Mapping[str, int]
    document_frequency: Mapping[str, int]
    n_docs: int

    def __len__(self) -> int:
        return len(self.terms)

    def term_list(self) -> list[str]:
        return sorted(self.terms, key=self.terms.__getitem__)

    def idf(self) -> np.ndarray:
        df = np.array([self.document_frequency[t] for t in self.term_list()], dtype=np.float64)
        return np.log((1.0 + self.n_docs) / (1.0 + df)) + 1.0

    @cached_property
    def idf_by_term(self) -> dict[str, float]:
        return {t: math.log((1.0 + self.n_docs) / (1.0 + df)) + 1.0 for t, df in self.document_frequency.items()}


@dataclass(frozen=True)
class SparseVector:
    weights: Mapping[int, float]
    dim: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        for i, w in self.weights.items():
            out[i] = w
        return out

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights.values()))


def fit_vocabulary(docs: Sequence[Sequence[str]], min_df: int = 1) -> Vocabulary:
    """Document frequencies over ``docs``; ids in lexicographic term order."""
    if not docs:
        raise FeatureError("cannot fit a vocabulary on zero documents")
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(set(doc))
    kept = sorted(t for t, c in df.items() if c >= min_df)
    if not kept:
        raise FeatureError(f"no term reaches min_df={min_df}")
    return Vocabulary({t: i for i, t in enumerate(kept)}, {t: df[t] for t in kept}, len(docs))


def restrict_vocabulary(vocab: Vocabulary, max_terms: int) -> Vocabulary:
    """Keep the ``max_terms`` highest-df terms (ties by term), re-indexed lexicographically."""
    if len(vocab) <= max_terms:
        return vocab
    ranked = sorted(vocab.terms, key=lambda t: (-vocab.document_frequency[t], t))[:max_terms]
    kept = sorted(ranked)
    return Vocabulary(
        {t: i for i, t in enumerate(kept)}, {t: vocab.document_frequency[t] for t in kept}, vocab.n_docs
    )


def bow_transform(doc: Sequence[str], vocab: Vocabulary) -> SparseVector:
    counts: Counter[int] = Counter(vocab.terms[t] for t in doc if t in vocab.terms)
    return SparseVector({i: float(c) for i, c in sorted(counts.items())}, len(vocab))


def tfidf_transform(doc: Sequence[str], vocab: Vocabulary) -> SparseVector:
    idf = vocab.idf_by_term
    counts: dict[str, int] = {}
    for t in doc:
        if t in idf:
            counts[t] = counts.get(t, 0) + 1
    raw = {vocab.terms[t]: tf * idf[t] for t, tf in counts.items()}
    norm = math.sqrt(sum(w * w for w in raw.values()))
    if norm == 0.0:
        return SparseVector({}, len(vocab))
    return SparseVector({i: raw[i] / norm for i in sorted(raw)}, len(vocab))


def to_matrix(vectors: Sequence[SparseVector]) -> np.ndarray:
    if not vectors:
        return np.zeros((0, 0))
    out = np.zeros((len(vectors), vectors[0].dim))
    for r, v in enumerate(vectors):
        for i, w in v.weights.items():
            out[r, i] = w
    return out


def feature_matrix(docs: Sequence[Sequence[str]], vocab: Vocabulary, mode: str = "tfidf") -> np.ndarray:
    """Dense rows identical to ``to_matrix`` over the per-document transforms, built directly."""
    if mode not in ("tfidf", "bow"):
        raise FeatureError(f"unknown feature mode {mode!r}")
    out = np.zeros((len(docs), len(vocab)))
    terms, idf = vocab.terms, vocab.idf_by_term
    for r, doc in enumerate(docs):
        counts: dict[str, int] = {}
        for t in doc:
            if t in terms:
                counts[t] = counts.get(t, 0) + 1
        if mode == "bow":
            for t, c in counts.items():
                out[r, terms[t]] = float(c)
            continue
        raw = [(terms[t], tf * idf[t]) for t, tf in counts.items()]
        if raw:
            # same summation order as tfidf_transform, so the floats match bit for bit
            norm = math.sqrt(sum(w * w for _, w in raw))
            for i, w in raw:
                out[r, i] = w / norm
    return out


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    """``#vocab n_docs=<N>`` header, then ``term<TAB>df`` per line in id order."""
    lines = [f"#vocab n_docs={vocab.n_docs}"]
    lines.extend(f"{t}\t{vocab.document_frequency[t]}" for t in vocab.term_list())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path: str | Path) -> Vocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#vocab n_docs="):
        raise FeatureError(f"{path}: missing vocabulary header")
    n_docs = int(lines[0].split("=", 1)[1])
    terms, df = {}, {}
    for i, line in enumerate(lines[1:]):
        term, count = line.rsplit("\t", 1)
        terms[term] = i
        df[term] = int(count)
    return Vocabulary(terms, df, n_docs)


# --------------------------------------------------------------------------
# pretrained word embeddings


class OOVPolicy(str, Enum):
    ZEROS = "zeros"
    MEAN_VECTOR = "mean_vector"


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: Mapping[str, np.ndarray]
    d: int
    oov_policy: OOVPolicy = OOVPolicy.ZEROS
    _mean: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for v in self.vectors.values():
            v.setflags(write=False)
        mean = np.mean(np.stack(list(self.vectors.values())), axis=0) if self.vectors else np.zeros(self.d)
        mean.setflags(write=False)
        object.__setattr__(self, "_mean", mean)

    def __contains__(self, term: str) -> bool:
        return term in self.vectors

    def lookup(self, term: str) -> np.ndarray:
        vec = self.vectors.get(term)
        if vec is not None:
            return vec
        if self.oov_policy is OOVPolicy.MEAN_VECTOR:
            return self._mean
        return np.zeros(self.d)


def load_embeddings(
    path: str | Path, expected_dim: int, oov_policy: OOVPolicy | str = OOVPolicy.ZEROS
) -> EmbeddingTable:
    """Parse a word2vec/GloVe-style text file (``term v1 ... vd`` per line)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such embedding file: {path}")
    vectors: dict[str, np.ndarray] = {}
    with path.open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or parts == [""]:
                continue
            values = parts[1:]
            if len(values) != expected_dim:
                raise FeatureError(
                    f"{path}: line {n}: expected {expected_dim} values, found {len(values)}"
                )
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise FeatureError(f"{path}: line {n}: non-numeric value") from None
            if not np.all(np.isfinite(vec)):
                raise FeatureError(f"{path}: line {n}: non-finite value")
            vectors[parts[0]] = vec
    if not vectors:
        raise FeatureError(f"{path}: no parseable rows")
    return EmbeddingTable(vectors, expected_dim, OOVPolicy(oov_policy))


def embed_sequence(tokens: Sequence[str], table: EmbeddingTable, max_len: int) -> np.ndarray:
    out = np.zeros((max_len, table.d))
    for i, tok in enumerate(tokens[:max_len]):
        out[i] = table.lookup(tok)
    return out


# --------------------------------------------------------------------------
# contextual encoder adapters


class EncoderUnavailable(RuntimeError):
    pass


class EncoderAdapter:
    """Maps an encoded sequence to per-position vectors and a pooled vector.

    ``prepare`` turns word tokens into the adapter's own ``EncodedSequence``.
    Adapters that can be fine-tuned expose a torch module via ``torch_module``.
    """

    name: str = "abstract"
    hidden_dim: int = 0
    supports_finetune: bool = False
    concurrent_encode: bool = True

    def prepare(self, tokens: Sequence[str]) -> EncodedSequence:
        raise NotImplementedError

    def encode(self, seq: EncodedSequence) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


def _piece_vector(seed: int, piece: str, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}\x00{piece}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.standard_normal(dim)


class HashEncoderAdapter(EncoderAdapter):
    """Deterministic stand-in encoder built from hashed random piece vectors.

    Position ``i`` mixes its own piece vector with the mean of its neighbours
    and squashes with tanh; the pooled vector is the mean over real positions.
    """

    name = "hash-projection"

    def __init__(self, vocab: SubwordVocab, hidden_dim: int = 128, seed: int = 0):
        self.vocab = vocab
        self.hidden_dim = hidden_dim
        self.seed = seed
        self._table = np.stack([_piece_vector(seed, vocab.piece(i), hidden_dim) for i in range(len(vocab))])

    def prepare(self, tokens: Sequence[str]) -> EncodedSequence:
        return encode(tokens, self.vocab)

    def encode(self, seq: EncodedSequence) -> tuple[np.ndarray, np.ndarray]:
        n = seq.length
        base = self._table[np.asarray(seq.ids[:n])]
        ctx = np.zeros_like(base)
        if n > 1:
            ctx[1:] += base[:-1]
            ctx[:-1] += base[1:]
            counts = np.full((n, 1), 2.0)
            counts[0] = counts[-1] = 1.0
            ctx /= counts
        hidden = np.tanh(base + 0.5 * ctx)
        return hidden, hidden.mean(axis=0)

    def spec(self) -> dict:
        return {"name": self.name, "hidden_dim": self.hidden_dim, "seed": self.seed}


class TransformerEncoderAdapter(EncoderAdapter):
    """Binding to a pretrained Hugging Face encoder (e.g. ``bert-base-uncased``).

    Only used for parity runs; the model must be loadable locally or from the
    hub. Uses the model's own WordPiece tokenizer.
    """

    name = "transformer"
    supports_finetune = True
    concurrent_encode = False

    def __init__(self, model_name: str = "bert-base-uncased", max_len: int = 64):
        try:
            import torch  # noqa: F401
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderUnavailable(f"transformers is not installed: {exc}") from None
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name)
            self.torch_module = AutoModel.from_pretrained(model_name)
        except Exception as exc:  # network or cache miss
            raise EncoderUnavailable(
                f"cannot load encoder {model_name!r} ({exc}); train head-only with the "
                "hash-projection adapter instead"
            ) from None
        self.torch_module.eval()
        self.model_name = model_name
        self.max_len = max_len
        self.hidden_dim = int(self.torch_module.config.hidden_size)

    def prepare(self, tokens: Sequence[str]) -> EncodedSequence:
        enc = self.tokenizer(
            " ".join(tokens), max_length=self.max_len, truncation=True, padding="max_length"
        )
        return EncodedSequence(list(enc["input_ids"]), list(enc["attention_mask"]), [])

    def forward(self, ids, mask):
        out = self.torch_module(input_ids=ids, attention_mask=mask)
        return out.last_hidden_state[:, 0]

    def encode(self, seq: EncodedSequence) -> tuple[np.ndarray, np.ndarray]:
        import torch

        with torch.no_grad():
            ids = torch.tensor([seq.ids])
            mask = torch.tensor([seq.attention_mask])
            hidden = self.torch_module(input_ids=ids, attention_mask=mask).last_hidden_state[0]
        n = seq.length
        h = hidden[:n].double().numpy()
        return h, h[0]

    def spec(self) -> dict:
        return {"name": self.name, "model_name": self.model_name, "max_len": self.max_len}
