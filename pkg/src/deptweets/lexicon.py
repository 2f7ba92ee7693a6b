"""Per-class lexicons, phrase matching and the first-person weak-labeling rule."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping

from deptweets.labels import DEPRESSION_CLASSES, DepressionClass
from deptweets.textprep import normalize

FIRST_PERSON = frozenset({"i", "i'm", "im", "i've", "ive", "my", "me"})

# Symptom-level atypical cues. Alone they are weak evidence, so a tweet that
# only hits these needs two distinct cues plus first-person context.
DEFAULT_WEAK_CUES = frozenset(
    {"hypersomnia", "feeling sad or hopeless", "increased appetite", "weight gain", "feeling worthless"}
)


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class LexiconSet:
    entries: Mapping[DepressionClass, tuple[str, ...]]
    version: str = ""
    _owner: dict[str, DepressionClass] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        owner: dict[str, DepressionClass] = {}
        for cls, phrases in self.entries.items():
            for phrase in phrases:
                if not phrase or phrase != normalize(phrase):
                    raise LexiconError(f"phrase {phrase!r} is not normalized")
                if phrase in owner and owner[phrase] is not cls:
                    raise LexiconError(
                        f"phrase {phrase!r} listed under both {owner[phrase].value} and {cls.value}"
                    )
                owner[phrase] = cls
        object.__setattr__(self, "_owner", owner)

    def phrases(self, cls: DepressionClass) -> tuple[str, ...]:
        return tuple(self.entries.get(cls, ()))

    def owner(self, phrase: str) -> DepressionClass:
        return self._owner[phrase]

    def all_phrases(self) -> list[str]:
        return sorted(self._owner)

    def to_json(self) -> dict[str, list[str]]:
        return {cls.value: list(self.entries.get(cls, ())) for cls in DepressionClass}


def lexicon_from_mapping(raw: Mapping[str, list[str]], version: str | None = None) -> LexiconSet:
    if not isinstance(raw, Mapping):
        raise LexiconError("lexicon file must hold a JSON object of class -> phrase list")
    entries: dict[DepressionClass, tuple[str, ...]] = {c: () for c in DepressionClass}
    for name, phrases in raw.items():
        try:
            cls = DepressionClass.parse(name)
        except ValueError as exc:
            raise LexiconError(str(exc)) from None
        if not isinstance(phrases, list) or not all(isinstance(p, str) for p in phrases):
            raise LexiconError(f"{name}: expected a list of strings")
        cleaned = []
        for p in phrases:
            norm = normalize(p)
            if not norm:
                raise LexiconError(f"{name}: phrase {p!r} is empty after normalization")
            if norm not in cleaned:
                cleaned.append(norm)
        entries[cls] = tuple(cleaned)
    for cls in DEPRESSION_CLASSES:
        if not entries[cls]:
            raise LexiconError(f"class {cls.value} has no phrases")
    if entries[DepressionClass.NO_DEPRESSION]:
        raise LexiconError("NoDepression must map to an empty phrase list")
    if version is None:
        canon = json.dumps({c.value: sorted(p) for c, p in entries.items()}, sort_keys=True)
        version = hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]
    return LexiconSet(entries, version)


def load_lexicons(path: str | Path | None = None) -> LexiconSet:
    """Load a ``{class_name: [phrases]}`` JSON file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("deptweets.data").joinpath("default_lexicons.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LexiconError(f"{path}: {exc}") from None
    return lexicon_from_mapping(raw)


@dataclass(frozen=True)
class LexiconMatch:
    cls: DepressionClass
    phrase: str
    char_span: tuple[int, int]

    def to_json(self) -> dict:
        return {"class": self.cls.value, "phrase": self.phrase, "char_span": list(self.char_span)}


def _occurrences(text: str, phrase: str):
    start = text.find(phrase)
    while start != -1:
        end = start + len(phrase)
        if (start == 0 or text[start - 1] == " ") and (end == len(text) or text[end] == " "):
            yield start, end
        start = text.find(phrase, start + 1)


def match_lexicons(text: str, lex: LexiconSet) -> list[LexiconMatch]:
    """Non-overlapping longest phrase matches on word boundaries, by span start.

    Candidates are picked longest first (then leftmost), which makes the result
    independent of the phrase order in the lexicon file.
    """
    if not text:
        return []
    cands = []
    for phrase in lex.all_phrases():
        for start, end in _occurrences(text, phrase):
            cands.append((-(end - start), start, phrase))
    cands.sort()
    taken: list[tuple[int, int]] = []
    chosen = []
    for neg_len, start, phrase in cands:
        end = start - neg_len
        if any(start < e and s < end for s, e in taken):
            continue
        taken.append((start, end))
        chosen.append(LexiconMatch(lex.owner(phrase), phrase, (start, end)))
    chosen.sort(key=lambda m: m.char_span)
    return chosen


class Decision(str, Enum):
    LABELED = "labeled"
    NEEDS_REVIEW = "needs_review"
    NO_MATCH = "no_match"


@dataclass(frozen=True)
class WeakLabelOutcome:
    decision: Decision
    label: DepressionClass | None
    matches: tuple[LexiconMatch, ...]
    first_person: bool
    reason: str = ""


def _has_first_person(text: str, matches, window: int | None) -> bool:
    tokens = text.split()
    if window is None:
        return any(t in FIRST_PERSON for t in tokens)
    # token offsets of each match, then look ``window`` tokens either side
    starts = []
    pos = 0
    for t in tokens:
        starts.append(pos)
        pos += len(t) + 1
    for m in matches:
        s, e = m.char_span
        idx = [i for i, p in enumerate(starts) if s <= p < e]
        lo = max(0, idx[0] - window)
        hi = min(len(tokens), idx[-1] + window + 1)
        if any(t in FIRST_PERSON for t in tokens[lo:hi]):
            return True
    return False


def weak_label(
    text: str,
    lex: LexiconSet,
    window: int | None = None,
    weak_cues: frozenset[str] = DEFAULT_WEAK_CUES,
) -> WeakLabelOutcome:
    """Assign a class only when a lexicon hit is self-reported.

    ``text`` must be normalized. Normalization removes sentence punctuation,
    so with ``window=None`` the whole text counts as the sentence; an integer
    window restricts the first-person search to that many tokens around each
    match (match phrases themselves always count).
    """
    matches = tuple(match_lexicons(text, lex))
    if not matches:
        return WeakLabelOutcome(Decision.NO_MATCH, None, (), False)
    first_person = _has_first_person(text, matches, window)
    classes = {m.cls for m in matches}
    if len(classes) > 1:
        return WeakLabelOutcome(Decision.NEEDS_REVIEW, None, matches, first_person, "conflicting_classes")
    (cls,) = classes
    if not first_person:
        return WeakLabelOutcome(Decision.NEEDS_REVIEW, None, matches, False, "no_first_person")
    if cls is DepressionClass.ATYPICAL:
        phrases = {m.phrase for m in matches}
        if phrases <= weak_cues and len(phrases) < 2:
            return WeakLabelOutcome(Decision.NEEDS_REVIEW, None, matches, True, "single_weak_cue")
    return WeakLabelOutcome(Decision.LABELED, cls, matches, True)
