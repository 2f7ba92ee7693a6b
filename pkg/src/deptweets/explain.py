"""Token attributions for any trained artifact.

A token is "absent" when it is deleted from the preprocessed token list (the
sequence gets shorter); no mask token is substituted.
"""

from __future__ import annotations

import html
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from deptweets.models.artifact import ModelArtifact, Prediction

DEFAULT_THRESHOLD = 0.2


class ExplainError(ValueError):
    pass


@dataclass(frozen=True)
class Attribution:
    tokens: list[str]
    scores: list[float]
    predicted: Prediction
    method: str
    samples: int = 0
    seed: int | None = None
    full_probability: float = 0.0
    empty_probability: float = 0.0

    def to_json(self) -> dict:
        return {
            "tokens": self.tokens,
            "scores": self.scores,
            "predicted": self.predicted.to_json(),
            "method": self.method,
            "samples": self.samples,
            "seed": self.seed,
            "full_probability": self.full_probability,
            "empty_probability": self.empty_probability,
        }


def _tokens_or_fail(artifact: ModelArtifact, text: str) -> list[str]:
    tokens = artifact.tokens(text)
    if not tokens:
        raise ExplainError("text is empty after preprocessing")
    return tokens


def explain_occlusion(artifact: ModelArtifact, text: str) -> Attribution:
    """``score_i = P(c | all tokens) - P(c | all tokens but i)`` for the predicted class c."""
    tokens = _tokens_or_fail(artifact, text)
    docs = [tokens] + [tokens[:i] + tokens[i + 1:] for i in range(len(tokens))] + [[]]
    probs = artifact.predict_proba_tokens(docs)
    pred = artifact.prediction_from_probs(probs[0])
    c = artifact.label_order.index(pred.label)
    full = float(probs[0, c])
    scores = [full - float(p) for p in probs[1:-1, c]]
    return Attribution(tokens, scores, pred, "occlusion", 0, None, full, float(probs[-1, c]))


class CoalitionValue:
    """Memoized ``v(S) = P(c | tokens in S, original order)``, evaluated in batches."""

    def __init__(self, artifact: ModelArtifact, tokens: Sequence[str], cls_index: int):
        self.artifact = artifact
        self.tokens = list(tokens)
        self.c = cls_index
        self.cache: dict[int, float] = {}

    def _doc(self, mask: int) -> list[str]:
        return [t for i, t in enumerate(self.tokens) if mask >> i & 1]

    def fill(self, masks, chunk: int = 512) -> None:
        todo = sorted({m for m in masks if m not in self.cache})
        for start in range(0, len(todo), chunk):
            part = todo[start:start + chunk]
            probs = self.artifact.predict_proba_tokens([self._doc(m) for m in part])
            for m, p in zip(part, probs[:, self.c]):
                self.cache[m] = float(p)

    def __call__(self, mask: int) -> float:
        if mask not in self.cache:
            self.fill([mask])
        return self.cache[mask]


def explain_shapley(artifact: ModelArtifact, text: str, samples: int = 2000, seed: int = 0) -> Attribution:
    """Permutation-sampling Shapley estimate over tokens.

    Permutations come in antithetic pairs (a random order, then its reverse),
    so ``samples`` orders are drawn from ``ceil(samples / 2)`` random ones.
    Scores are shifted equally so they sum to ``v(all) - v(none)``.
    """
    if samples < 1:
        raise ExplainError("samples must be at least 1")
    tokens = _tokens_or_fail(artifact, text)
    n = len(tokens)
    full_probs = artifact.predict_proba_tokens([tokens])[0]
    pred = artifact.prediction_from_probs(full_probs)
    value = CoalitionValue(artifact, tokens, artifact.label_order.index(pred.label))
    full_mask = (1 << n) - 1
    rng = np.random.default_rng(seed)
    perms = []
    while len(perms) < samples:
        p = rng.permutation(n)
        perms.append(p)
        if len(perms) < samples:
            perms.append(p[::-1])
    prefix_masks = []
    for p in perms:
        masks = [0]
        for i in p:
            masks.append(masks[-1] | (1 << int(i)))
        prefix_masks.append(masks)
    value.fill(m for masks in prefix_masks for m in masks)
    totals = np.zeros(n)
    for p, masks in zip(perms, prefix_masks):
        vals = [value(m) for m in masks]
        for step, i in enumerate(p):
            totals[i] += vals[step + 1] - vals[step]
    scores = totals / len(perms)
    v_full, v_empty = value(full_mask), value(0)
    scores += (v_full - v_empty - scores.sum()) / n
    return Attribution(tokens, [float(s) for s in scores], pred, "shapley", samples, seed, v_full, v_empty)


# --------------------------------------------------------------------------
# rendering


def highlight_marks(scores: Sequence[float], threshold: float = DEFAULT_THRESHOLD) -> list[int]:
    """+1 / -1 / 0 per token.

    Positive marks need a score above ``threshold`` times the largest positive
    score; negative marks mirror that against the most negative score.
    """
    pos = max([s for s in scores if s > 0], default=0.0)
    neg = min([s for s in scores if s < 0], default=0.0)
    marks = []
    for s in scores:
        if pos > 0 and s > threshold * pos:
            marks.append(1)
        elif neg < 0 and s < threshold * neg:
            marks.append(-1)
        else:
            marks.append(0)
    return marks


def render_text(attr: Attribution, threshold: float = DEFAULT_THRESHOLD) -> str:
    parts = []
    for tok, mark in zip(attr.tokens, highlight_marks(attr.scores, threshold)):
        parts.append(f"[+{tok}]" if mark > 0 else f"[-{tok}]" if mark < 0 else tok)
    label = attr.predicted.label
    prob = attr.predicted.probability(label)
    return f"predicted: {label.value} ({prob:.4f})\nmethod: {attr.method}\n{' '.join(parts)}\n"


def render_html(attr: Attribution, threshold: float = DEFAULT_THRESHOLD) -> str:
    spans = []
    for tok, score, mark in zip(attr.tokens, attr.scores, highlight_marks(attr.scores, threshold)):
        cls = "pos" if mark > 0 else "neg" if mark < 0 else "none"
        spans.append(f'<span class="{cls}" title="{score:+.4f}">{html.escape(tok)}</span>')
    label = attr.predicted.label
    prob = attr.predicted.probability(label)
    return (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Attribution</title>\n"
        "<style>body{font-family:sans-serif;margin:2em}span{padding:2px 4px;margin:1px;border-radius:3px}"
        ".pos{background:#7ddc7d}.neg{background:#f08a8a}</style></head><body>\n"
        f"<p>Predicted: <b>{html.escape(label.value)}</b> (probability {prob:.4f}); method: {attr.method}</p>\n"
        f"<p>{' '.join(spans)}</p>\n</body></html>\n"
    )


def render_highlights(attr: Attribution, out: str | Path, threshold: float = DEFAULT_THRESHOLD) -> tuple[Path, Path]:
    """Write ``<out>.html`` and a bracket-markup ``<out>.txt`` next to it."""
    out = Path(out)
    html_path = out.with_suffix(".html")
    txt_path = out.with_suffix(".txt")
    try:
        html_path.write_text(render_html(attr, threshold), encoding="utf-8")
        txt_path.write_text(render_text(attr, threshold), encoding="utf-8")
    except OSError as exc:
        raise ExplainError(f"cannot write report to {out}: {exc}") from None
    return html_path, txt_path


def save_attribution(attr: Attribution, path: str | Path) -> None:
    Path(path).write_text(json.dumps(attr.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def max_positive_token(attr: Attribution) -> str | None:
    best = max(range(len(attr.scores)), key=lambda i: attr.scores[i])
    return attr.tokens[best] if attr.scores[best] > 0 and not math.isnan(attr.scores[best]) else None
