"""Raw tweet ingestion, exclusion filtering, labeled datasets and splits."""

from __future__ import annotations

import csv
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from deptweets.labels import DEPRESSION_CLASSES, DepressionClass
from deptweets.lexicon import FIRST_PERSON, LexiconSet, DEFAULT_WEAK_CUES
from deptweets.textprep import DEFAULT_STOPLIST, normalize, preprocess

NEEDS_EXCLUSION = "needs-exclusion"
TRUTHY = frozenset({"1", "true", "t", "yes", "y"})


class CorpusError(ValueError):
    """Bad input data (malformed CSV, missing columns, too few examples)."""


@dataclass(frozen=True)
class TweetRecord:
    id: str
    text: str
    lang_hint: str | None = None
    is_retweet: bool = False
    raw_row: Mapping[str, str] = field(default_factory=dict)
    flags: tuple[str, ...] = ()


class Provenance(str, Enum):
    LEXICON_WEAK = "lexicon_weak"
    MANUAL = "manual"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class LabeledExample:
    tweet_id: str
    clean_text: str
    tokens: tuple[str, ...]
    label: DepressionClass
    provenance: Provenance

    @classmethod
    def from_text(cls, tweet_id: str, text: str, label: DepressionClass, provenance: Provenance,
                  stoplist=DEFAULT_STOPLIST) -> "LabeledExample":
        tokens = preprocess(text, stoplist=stoplist)
        return cls(tweet_id, " ".join(tokens), tuple(tokens), label, provenance)

    def to_json(self) -> dict:
        return {
            "tweet_id": self.tweet_id,
            "clean_text": self.clean_text,
            "tokens": list(self.tokens),
            "label": self.label.value,
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "LabeledExample":
        return cls(
            str(obj["tweet_id"]),
            obj["clean_text"],
            tuple(obj["tokens"]),
            DepressionClass.parse(obj["label"]),
            Provenance(obj["provenance"]),
        )


# --------------------------------------------------------------------------
# ingestion

DEFAULT_COLUMNS = {"id": "id", "text": "text"}


def ingest_csv(path: str | Path, column_map: Mapping[str, str] | None = None) -> list[TweetRecord]:
    """Read a UTF-8 CSV with a header row into tweet records.

    ``column_map`` maps the roles ``id``, ``text``, ``lang`` and ``retweet`` to
    header names. Without an id column, ids are ``row-<n>``. Without a retweet
    column, a leading ``RT @`` marks a retweet. Empty texts are kept and
    flagged ``needs-exclusion``.
    """
    cols = dict(DEFAULT_COLUMNS)
    cols.update({k: v for k, v in (column_map or {}).items() if v})
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such CSV file: {path}")
    records: list[TweetRecord] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError(f"{path}: empty file, header row required") from None
        except csv.Error as exc:
            raise CorpusError(f"{path}: malformed header: {exc}") from None
        if cols["text"] not in header:
            raise CorpusError(f"{path}: text column {cols['text']!r} not found in header")
        for role in ("lang", "retweet"):
            if role in (column_map or {}) and cols[role] not in header:
                raise CorpusError(f"{path}: {role} column {cols[role]!r} not found in header")
        has_id = cols["id"] in header
        if column_map and "id" in column_map and not has_id:
            raise CorpusError(f"{path}: id column {cols['id']!r} not found in header")
        row_no = 1
        while True:
            try:
                row = next(reader)
            except StopIteration:
                break
            except csv.Error as exc:
                raise CorpusError(f"{path}: row {row_no + 1}: {exc}") from None
            row_no += 1
            if not row:
                continue
            if len(row) != len(header):
                raise CorpusError(
                    f"{path}: row {row_no}: expected {len(header)} fields, found {len(row)}"
                )
            raw = dict(zip(header, row))
            rid = raw[cols["id"]] if has_id else f"row-{row_no - 1}"
            if not rid:
                raise CorpusError(f"{path}: row {row_no}: empty id")
            if rid in seen:
                raise CorpusError(f"{path}: row {row_no}: duplicate id {rid!r}")
            seen.add(rid)
            text = raw[cols["text"]]
            lang = raw.get(cols["lang"]) if "lang" in cols else None
            if "retweet" in cols:
                is_rt = raw[cols["retweet"]].strip().lower() in TRUTHY
            else:
                is_rt = text.startswith("RT @")
            flags = (NEEDS_EXCLUSION,) if not text.strip() else ()
            records.append(TweetRecord(rid, text, lang or None, is_rt, raw, flags))
    return records


def write_csv(records: Sequence[TweetRecord], path: str | Path) -> None:
    """Write records back using their original source columns."""
    if not records:
        raise CorpusError("nothing to write")
    header = list(records[0].raw_row)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in records:
            writer.writerow([rec.raw_row.get(h, "") for h in header])


# --------------------------------------------------------------------------
# exclusion rules


@lru_cache(maxsize=1)
def _english_profile() -> frozenset[str]:
    text = resources.files("deptweets.data").joinpath("english_reference.txt").read_text("utf-8")
    counts = Counter(_trigrams(normalize(text)))
    return frozenset(counts)


def _trigrams(normalized: str) -> list[str]:
    out = []
    for word in normalized.split():
        padded = f" {word} "
        out.extend(padded[i:i + 3] for i in range(len(padded) - 2))
    return out


def english_score(text: str) -> float:
    """Share of character trigrams that are common in English text."""
    grams = _trigrams(normalize(text))
    if not grams:
        return 0.0
    profile = _english_profile()
    return sum(g in profile for g in grams) / len(grams)


@dataclass(frozen=True)
class ExclusionConfig:
    drop_empty: bool = True
    drop_retweets: bool = True
    drop_hashtag_only: bool = True
    drop_incomplete: bool = True
    drop_non_english: bool = True
    drop_duplicates: bool = True
    min_words: int = 3
    english_threshold: float = 0.75


@dataclass(frozen=True)
class Exclusion:
    record: TweetRecord
    reason: str


def _is_hashtag_only(text: str) -> bool:
    words = [w for w in text.split() if not w.startswith(("http://", "https://", "@"))]
    return bool(words) and all(w.startswith("#") and len(w) > 1 for w in words)


def dedup_key(text: str) -> str:
    return " ".join(text.casefold().split())


def apply_exclusions(
    records: Iterable[TweetRecord], rules: ExclusionConfig = ExclusionConfig()
) -> tuple[list[TweetRecord], list[Exclusion]]:
    """Split records into kept and excluded; each exclusion has one reason.

    Checks run in the order empty, retweet, spam_hashtag_only, incomplete,
    non_english, duplicate. Duplicates are judged on case-folded,
    whitespace-collapsed text among records that survived the other checks.
    """
    kept: list[TweetRecord] = []
    excluded: list[Exclusion] = []
    seen: set[str] = set()
    for rec in records:
        reason = None
        text = rec.text
        if rules.drop_empty and not text.strip():
            reason = "empty"
        elif rules.drop_retweets and rec.is_retweet:
            reason = "retweet"
        elif rules.drop_hashtag_only and _is_hashtag_only(text):
            reason = "spam_hashtag_only"
        elif rules.drop_incomplete and len(normalize(text).split()) < rules.min_words:
            reason = "incomplete"
        elif rules.drop_non_english and not _looks_english(rec, rules.english_threshold):
            reason = "non_english"
        elif rules.drop_duplicates:
            key = dedup_key(text)
            if key in seen:
                reason = "duplicate"
            seen.add(key)
        if reason is None:
            kept.append(rec)
        else:
            excluded.append(Exclusion(rec, reason))
    return kept, excluded


def _looks_english(rec: TweetRecord, threshold: float) -> bool:
    if rec.lang_hint:
        return rec.lang_hint.strip().lower().split("-")[0] == "en"
    return english_score(rec.text) >= threshold


# --------------------------------------------------------------------------
# splits

DEFAULT_RATIOS = (0.7, 0.15, 0.15)


@dataclass(frozen=True)
class DatasetSplit:
    train: list[LabeledExample]
    validation: list[LabeledExample]
    test: list[LabeledExample]
    seed: int
    ratios: tuple[float, float, float]

    def partitions(self) -> dict[str, list[LabeledExample]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}

    def to_json(self) -> dict:
        out = {name: [e.tweet_id for e in part] for name, part in self.partitions().items()}
        out.update(seed=self.seed, ratios=list(self.ratios))
        return out

    @classmethod
    def from_ids(cls, examples: Sequence[LabeledExample], obj: Mapping) -> "DatasetSplit":
        by_id = {e.tweet_id: e for e in examples}
        try:
            parts = [[by_id[i] for i in obj[name]] for name in ("train", "validation", "test")]
        except KeyError as exc:
            raise CorpusError(f"split refers to unknown tweet id {exc}") from None
        return cls(*parts, seed=obj["seed"], ratios=tuple(obj["ratios"]))


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    quotas = [n * r for r in ratios]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda p: (-(quotas[p] - counts[p]), p))
    for p in order[: n - sum(counts)]:
        counts[p] += 1
    return counts


def apportion(class_counts: Mapping[str, int], ratios: Sequence[float]) -> dict[str, list[int]]:
    """Per-class partition sizes.

    Partition totals follow largest-remainder apportionment of the whole set.
    Each class gets the floor of its quota per partition, and the leftover
    seats go out by largest fractional remainder, ties by class name then
    partition order. No cell moves more than one seat from its quota.
    """
    names = sorted(class_counts)
    k = len(ratios)
    totals = _largest_remainder(sum(class_counts.values()), ratios)
    cells = {c: [math.floor(class_counts[c] * r) for r in ratios] for c in names}
    rem = {c: [class_counts[c] * r - cells[c][p] for p, r in enumerate(ratios)] for c in names}
    left = {c: class_counts[c] - sum(cells[c]) for c in names}
    need = [totals[p] - sum(cells[c][p] for c in names) for p in range(k)]
    bumped: set[tuple[str, int]] = set()

    def give(c: str, p: int) -> None:
        cells[c][p] += 1
        left[c] -= 1
        need[p] -= 1
        bumped.add((c, p))

    ranked = sorted(
        ((c, p) for c in names for p in range(k) if rem[c][p] > 1e-12),
        key=lambda cp: (-round(rem[cp[0]][cp[1]], 12), cp[0], cp[1]),
    )
    for c, p in ranked:
        if left[c] > 0 and need[p] > 0 and (c, p) not in bumped:
            give(c, p)
    # leftovers the greedy pass could not place: keep each cell within one seat
    for c in names:
        while left[c] > 0:
            free = [p for p in range(k) if (c, p) not in bumped]
            p = max(free, key=lambda q: (need[q], rem[c][q], -q))
            give(c, p)
    return cells


def stratified_split(
    examples: Sequence[LabeledExample],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios must be three positive fractions summing to 1, got {ratios}")
    ids = [e.tweet_id for e in examples]
    if len(set(ids)) != len(ids):
        raise CorpusError("tweet ids must be unique")
    by_class: dict[str, list[int]] = {}
    for i, e in enumerate(examples):
        by_class.setdefault(e.label.value, []).append(i)
    for name, idx in sorted(by_class.items()):
        if len(idx) < len(ratios):
            raise CorpusError(
                f"class {name} has {len(idx)} examples, fewer than {len(ratios)} partitions"
            )
    sizes = apportion({c: len(v) for c, v in by_class.items()}, ratios)
    rng = random.Random(seed)
    parts: list[list[int]] = [[], [], []]
    for name in sorted(by_class):
        idx = list(by_class[name])
        rng.shuffle(idx)
        start = 0
        for p, size in enumerate(sizes[name]):
            parts[p].extend(idx[start:start + size])
            start += size
    train, val, test = ([examples[i] for i in sorted(p)] for p in parts)
    return DatasetSplit(train, val, test, seed, ratios)


# --------------------------------------------------------------------------
# JSON Lines


def write_jsonl(rows: Iterable[Mapping], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    out = []
    with path.open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {n}: {exc}") from None
    return out


def save_examples(examples: Iterable[LabeledExample], path: str | Path) -> None:
    write_jsonl((e.to_json() for e in examples), path)


def load_examples(path: str | Path) -> list[LabeledExample]:
    rows = read_jsonl(path)
    try:
        return [LabeledExample.from_json(r) for r in rows]
    except (KeyError, ValueError) as exc:
        raise CorpusError(f"{path}: bad labeled example: {exc}") from None


# --------------------------------------------------------------------------
# synthetic corpus

DEFAULT_NOISE_VOCAB = (
    "today", "morning", "coffee", "weather", "work", "office", "weekend", "music",
    "movie", "friends", "family", "dinner", "lunch", "breakfast", "city", "train",
    "bus", "walk", "park", "phone", "news", "game", "team", "school", "class",
    "book", "reading", "writing", "garden", "kitchen", "window", "rain", "sun",
    "night", "evening", "week", "month", "year", "summer", "winter", "spring",
    "tea", "dog", "cat", "street", "store", "market", "shopping", "holiday",
    "travel", "beach", "road", "car", "house", "room", "bed", "sleep", "late",
    "early", "again", "really", "pretty", "long", "short", "busy", "quiet",
    "loud", "cold", "warm", "honestly", "maybe", "still", "always", "never",
    "sometimes", "tired", "happy", "okay", "fine", "good", "great", "bad",
)


def _framed(phrase: str) -> str:
    tokens = phrase.split()
    if tokens[0] in FIRST_PERSON:
        return phrase
    if tokens[0] == "suffering":
        return "i am " + phrase
    if tokens[0] == "feeling":
        return "i am " + phrase
    return "i have " + phrase


def generate_synthetic_tweets(
    spec: Mapping[DepressionClass, int],
    templates: LexiconSet,
    noise_vocab: Sequence[str] = DEFAULT_NOISE_VOCAB,
    seed: int = 0,
    noise_range: tuple[int, int] = (3, 8),
    weak_cues: frozenset[str] = DEFAULT_WEAK_CUES,
) -> list[tuple[TweetRecord, DepressionClass]]:
    """Raw tweets with known classes, for exercising the pipeline end to end.

    Depression examples embed one first-person framed lexicon phrase among
    noise words; an atypical symptom cue is paired with a second distinct cue
    so the example is self-labeling. NoDepression examples are noise only.
    Noise words that occur in any lexicon phrase are discarded up front.
    """
    lexicon_words = {w for p in templates.all_phrases() for w in p.split()}
    noise = sorted({normalize(w) for w in noise_vocab} - lexicon_words - {""})
    if not noise:
        raise CorpusError("noise vocabulary is empty after removing lexicon words")
    for cls, n in spec.items():
        if n and cls is not DepressionClass.NO_DEPRESSION and not templates.phrases(cls):
            raise CorpusError(f"no template phrases for class {cls.value}")
    rng = random.Random(seed)
    out: list[tuple[TweetRecord, DepressionClass]] = []
    seen: set[str] = set()
    lo, hi = noise_range
    serial = 0
    for cls in DepressionClass:
        count = spec.get(cls, 0)
        phrases = sorted(templates.phrases(cls))
        cues = sorted(set(phrases) & weak_cues)
        made = 0
        attempts = 0
        while made < count:
            attempts += 1
            if attempts > 100 * count + 1000:
                raise CorpusError(f"could not generate {count} distinct {cls.value} examples")
            words = [rng.choice(noise) for _ in range(rng.randint(lo, hi))]
            if cls is not DepressionClass.NO_DEPRESSION:
                phrase = rng.choice(phrases)
                core = _framed(phrase)
                if phrase in weak_cues:
                    other = rng.choice([c for c in cues if c != phrase])
                    core = f"{core} and {other}"
                words.insert(rng.randint(0, len(words)), core)
            text = " ".join(words)
            if text in seen:
                continue
            seen.add(text)
            # surface variation that the normalizer must undo
            if rng.random() < 0.5:
                text = text[0].upper() + text[1:]
            text += rng.choice(["", ".", "!", " :)", " https://t.co/x" + str(serial)])
            serial += 1
            rid = f"synth-{serial:05d}"
            out.append((TweetRecord(rid, text, None, False, {"id": rid, "text": text, "label": cls.value}), cls))
            made += 1
    return out


def generate_synthetic_corpus(
    spec: Mapping[DepressionClass, int],
    templates: LexiconSet,
    noise_vocab: Sequence[str] = DEFAULT_NOISE_VOCAB,
    seed: int = 0,
    **kwargs,
) -> list[LabeledExample]:
    pairs = generate_synthetic_tweets(spec, templates, noise_vocab, seed, **kwargs)
    return [
        LabeledExample.from_text(rec.id, rec.text, cls, Provenance.SYNTHETIC) for rec, cls in pairs
    ]


def uniform_spec(per_class: int = 300) -> dict[DepressionClass, int]:
    return {c: per_class for c in DepressionClass}


__all__ = [
    "CorpusError", "TweetRecord", "Provenance", "LabeledExample", "ingest_csv", "write_csv",
    "ExclusionConfig", "Exclusion", "apply_exclusions", "english_score", "DatasetSplit",
    "stratified_split", "apportion", "save_examples", "load_examples", "write_jsonl", "read_jsonl",
    "generate_synthetic_tweets", "generate_synthetic_corpus", "uniform_spec", "DEPRESSION_CLASSES",
]
