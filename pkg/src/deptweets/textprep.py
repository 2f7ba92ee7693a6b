"""Tweet normalization, stopword filtering and subword tokenization."""

from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
HANDLE_RE = re.compile(r"@\w+")
HASHTAG_RE = re.compile(r"#(?=\w)")
APOSTROPHES = frozenset("'’ʼ")

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_PIECES = (PAD, UNK, CLS, SEP)
DEFAULT_MAX_LEN = 64


@dataclass(frozen=True)
class NormalizationConfig:
    lowercase: bool = True
    strip_urls: bool = True
    strip_handles: bool = True
    strip_hashtag_marks: bool = True
    strip_punct_and_digits: bool = True
    collapse_whitespace: bool = True


def _strip_punct_and_digits(text: str) -> str:
    out = []
    for ch in text:
        cat = unicodedata.category(ch)
        if cat[0] in "LM":
            out.append(ch)
        elif ch in APOSTROPHES:
            # "i'm" -> "im", "don't" -> "dont"
            continue
        else:
            out.append(" ")
    return "".join(out)


def normalize(text: str, cfg: NormalizationConfig = NormalizationConfig()) -> str:
    """Apply the cleaning rules in fixed order.

    URLs, handles, hashtag marks, punctuation/digits, lowercase, whitespace.
    Idempotent under the default configuration.
    """
    if cfg.strip_urls:
        text = URL_RE.sub(" ", text)
    if cfg.strip_handles:
        text = HANDLE_RE.sub(" ", text)
    if cfg.strip_hashtag_marks:
        text = HASHTAG_RE.sub("", text)
    if cfg.strip_punct_and_digits:
        text = _strip_punct_and_digits(text)
    if cfg.lowercase:
        text = text.lower()
    if cfg.collapse_whitespace:
        text = " ".join(text.split())
    return text


def load_stoplist(path: str | Path | None = None) -> frozenset[str]:
    """Read a stoplist, one token per line. ``None`` loads the shipped default."""
    if path is None:
        raw = resources.files("deptweets.data").joinpath("stopwords.txt").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip() for w in raw.splitlines() if w.strip())


DEFAULT_STOPLIST = load_stoplist()


def remove_stopwords(tokens: Sequence[str], stoplist: Iterable[str] = DEFAULT_STOPLIST) -> list[str]:
    stop = stoplist if isinstance(stoplist, (set, frozenset)) else set(stoplist)
    return [t for t in tokens if t not in stop]


def preprocess(
    text: str,
    cfg: NormalizationConfig = NormalizationConfig(),
    stoplist: Iterable[str] = DEFAULT_STOPLIST,
) -> list[str]:
    """Normalize, split on whitespace and drop stopwords."""
    return remove_stopwords(normalize(text, cfg).split(), stoplist)


# --------------------------------------------------------------------------
# subword vocabulary


@dataclass(frozen=True)
class SubwordVocab:
    pieces: dict[str, int]
    continuation_prefix: str = "##"
    max_len: int = DEFAULT_MAX_LEN
    merges: tuple[tuple[str, str], ...] = field(default=(), compare=False)
    _by_id: tuple[str, ...] = field(init=False, repr=False, compare=False)
    _longest: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = [""] * len(self.pieces)
        for piece, idx in self.pieces.items():
            if not 0 <= idx < len(by_id) or by_id[idx]:
                raise ValueError("piece ids must be dense and unique")
            by_id[idx] = piece
        for special in SPECIAL_PIECES:
            if special not in self.pieces:
                raise ValueError(f"missing special piece {special}")
        if self.max_len < 2:
            raise ValueError("max_len must leave room for CLS and SEP")
        object.__setattr__(self, "_by_id", tuple(by_id))
        object.__setattr__(self, "_longest", max(len(p) for p in by_id))

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def pad_id(self) -> int:
        return self.pieces[PAD]

    @property
    def unk_id(self) -> int:
        return self.pieces[UNK]

    @property
    def cls_id(self) -> int:
        return self.pieces[CLS]

    @property
    def sep_id(self) -> int:
        return self.pieces[SEP]

    def piece(self, idx: int) -> str:
        return self._by_id[idx]

    def with_max_len(self, max_len: int) -> "SubwordVocab":
        return SubwordVocab(dict(self.pieces), self.continuation_prefix, max_len, self.merges)

    def split_word(self, word: str) -> list[str]:
        """Greedy longest-prefix decomposition; unknown characters become ``[UNK]``."""
        out: list[str] = []
        start = 0
        n = len(word)
        while start < n:
            prefix = self.continuation_prefix if start else ""
            end = min(n, start + self._longest)
            found = None
            while end > start:
                cand = prefix + word[start:end]
                if cand in self.pieces:
                    found = cand
                    break
                end -= 1
            if found is None:
                out.append(UNK)
                start += 1
            else:
                out.append(found)
                start = end
        return out


def _merge_symbols(symbols: list[str], a: str, b: str, merged: str) -> list[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _pairs(symbols: list[str]):
    return zip(symbols, symbols[1:])


def train_subword_vocab(
    corpus: Sequence[str],
    target_size: int,
    continuation_prefix: str = "##",
    max_len: int = DEFAULT_MAX_LEN,
) -> SubwordVocab:
    """Build a pair-merge subword vocabulary of at most ``target_size`` pieces.

    Words are split on whitespace. Every alphabet character is present both as
    a word-initial piece and a continuation piece, so any word over the
    training alphabet decomposes without ``[UNK]``. The most frequent adjacent
    pair is merged each round; ties go to the pair seen first in corpus order.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    word_freq: Counter[str] = Counter()
    for doc in corpus:
        word_freq.update(doc.split())
    alphabet = sorted({ch for w in word_freq for ch in w})
    base = list(SPECIAL_PIECES)
    for ch in alphabet:
        base.extend([ch, continuation_prefix + ch])
    if target_size < len(base):
        raise ValueError(
            f"target_size {target_size} is below alphabet size plus specials ({len(base)})"
        )

    pieces = {p: i for i, p in enumerate(base)}
    words = list(word_freq)  # insertion order = first occurrence in corpus
    freqs = [word_freq[w] for w in words]
    symbols = [[w[0]] + [continuation_prefix + c for c in w[1:]] for w in words]

    counts: Counter[tuple[str, str]] = Counter()
    where: dict[tuple[str, str], set[int]] = {}
    for wi, syms in enumerate(symbols):
        for pair in _pairs(syms):
            counts[pair] += freqs[wi]
            where.setdefault(pair, set()).add(wi)

    strip = len(continuation_prefix)
    merges: list[tuple[str, str]] = []
    while len(pieces) < target_size and counts:
        best_count = max(counts.values())
        tied = [p for p, c in counts.items() if c == best_count]
        if len(tied) > 1:
            def first_seen(pair):
                wi = min(where[pair])
                syms = symbols[wi]
                pos = next(i for i, pr in enumerate(_pairs(syms)) if pr == pair)
                return wi, pos

            best = min(tied, key=first_seen)
        else:
            best = tied[0]
        a, b = best
        merged = a + b[strip:]
        merges.append(best)
        if merged not in pieces:
            pieces[merged] = len(pieces)
        for wi in sorted(where.pop(best)):
            old = symbols[wi]
            for pair in _pairs(old):
                counts[pair] -= freqs[wi]
                if counts[pair] <= 0:
                    del counts[pair]
                if pair in where:
                    where[pair].discard(wi)
            new = _merge_symbols(old, a, b, merged)
            symbols[wi] = new
            for pair in _pairs(new):
                counts[pair] += freqs[wi]
                where.setdefault(pair, set()).add(wi)
        for pair in [p for p, s in where.items() if not s]:
            del where[pair]
        counts.pop(best, None)

    return SubwordVocab(pieces, continuation_prefix, max_len, tuple(merges))


@dataclass(frozen=True)
class EncodedSequence:
    ids: list[int]
    attention_mask: list[int]
    # half-open [start, end) position range in ``ids`` for each included token
    token_spans: list[tuple[int, int]]

    @property
    def length(self) -> int:
        return sum(self.attention_mask)


def encode(tokens: Sequence[str], vocab: SubwordVocab) -> EncodedSequence:
    """Frame ``tokens`` as ``[CLS] pieces... [SEP] [PAD]...`` of exactly ``max_len``.

    Tokens that would not fit in ``max_len - 2`` content slots are dropped
    whole, so truncation always falls on a token boundary.
    """
    budget = vocab.max_len - 2
    ids = [vocab.cls_id]
    spans: list[tuple[int, int]] = []
    for tok in tokens:
        pieces = vocab.split_word(tok)
        if len(ids) - 1 + len(pieces) > budget:
            break
        start = len(ids)
        ids.extend(vocab.pieces[p] for p in pieces)
        spans.append((start, len(ids)))
    ids.append(vocab.sep_id)
    used = len(ids)
    ids.extend([vocab.pad_id] * (vocab.max_len - used))
    mask = [1] * used + [0] * (vocab.max_len - used)
    return EncodedSequence(ids, mask, spans)


def decode_token(seq: EncodedSequence, vocab: SubwordVocab, index: int) -> str:
    """Rebuild the ``index``-th token from its pieces."""
    start, end = seq.token_spans[index]
    strip = len(vocab.continuation_prefix)
    parts = []
    for pos in range(start, end):
        piece = vocab.piece(seq.ids[pos])
        parts.append(piece[strip:] if pos > start else piece)
    return "".join(parts)


def save_subword_vocab(vocab: SubwordVocab, path: str | Path) -> None:
    """Header line is ``#subword <json>``, then one piece per line in id order."""
    header = {
        "continuation_prefix": vocab.continuation_prefix,
        "max_len": vocab.max_len,
        "specials": {
            "cls_id": vocab.cls_id,
            "sep_id": vocab.sep_id,
            "pad_id": vocab.pad_id,
            "unk_id": vocab.unk_id,
        },
    }
    lines = ["#subword " + json.dumps(header, sort_keys=True)]
    lines.extend(vocab.piece(i) for i in range(len(vocab)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_subword_vocab(path: str | Path) -> SubwordVocab:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if not lines or not lines[0].startswith("#subword "):
        raise ValueError(f"{path}: missing subword header line")
    header = json.loads(lines[0][len("#subword "):])
    body = lines[1:]
    if body and body[-1] == "":
        body = body[:-1]
    pieces = {p: i for i, p in enumerate(body)}
    vocab = SubwordVocab(pieces, header["continuation_prefix"], header["max_len"])
    for name, piece in zip(("pad_id", "unk_id", "cls_id", "sep_id"), SPECIAL_PIECES):
        if header["specials"][name] != vocab.pieces[piece]:
            raise ValueError(f"{path}: special {name} does not match piece table")
    return vocab
