"""Confusion matrices, per-class metrics, model comparison tables and curve plots.

Aggregates: macro averages run over classes that occur in either the true or
the predicted labels; weighted averages weight each class by its support;
micro precision, recall and F1 all equal accuracy for single-label data. Every
metric is computed exactly from the integer counts and rounded to float once.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from deptweets.corpus import LabeledExample
from deptweets.labels import LABEL_ORDER, DepressionClass

HEADLINE_AGGREGATION = "weighted"
PLOT_SIZE_INCHES = (10.0, 4.0)
PLOT_DPI = 100


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # [true, predicted]
    label_order: tuple[DepressionClass, ...] = LABEL_ORDER

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_json(self) -> dict:
        return {"label_order": [c.value for c in self.label_order], "counts": self.counts.tolist()}


def confusion_matrix(
    y_true: Sequence[DepressionClass], y_pred: Sequence[DepressionClass], label_order=LABEL_ORDER
) -> ConfusionMatrix:
    if len(y_true) != len(y_pred):
        raise EvaluationError("y_true and y_pred differ in length")
    index = {c: i for i, c in enumerate(label_order)}
    counts = np.zeros((len(label_order), len(label_order)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(counts, tuple(label_order))


def _ratio(num: int, den: int) -> tuple[Fraction, bool]:
    return (Fraction(num, den), False) if den > 0 else (Fraction(0), True)


def _f1(p: Fraction, r: Fraction) -> Fraction:
    return 2 * p * r / (p + r) if p + r > 0 else Fraction(0)


@dataclass(frozen=True)
class EvalReport:
    per_class: dict[str, dict]
    overall: dict[str, float]
    confusion: ConfusionMatrix
    model_kind: str
    dataset_id: str

    def to_json(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "dataset_id": self.dataset_id,
            "per_class": self.per_class,
            "overall": self.overall,
            "confusion": self.confusion.to_json(),
        }


def report_from_confusion(cm: ConfusionMatrix, model_kind: str = "", dataset_id: str = "") -> EvalReport:
    # exact rational arithmetic on the integer counts, rounded to float once at the end
    counts = [[int(x) for x in row] for row in cm.counts]
    k = len(counts)
    total = sum(map(sum, counts))
    if total == 0:
        raise EvaluationError("cannot evaluate zero examples")
    tp = [counts[i][i] for i in range(k)]
    support = [sum(row) for row in counts]
    predicted = [sum(counts[t][i] for t in range(k)) for i in range(k)]
    per_class: dict[str, dict] = {}
    exact = []
    for i, cls in enumerate(cm.label_order):
        p, p_undef = _ratio(tp[i], predicted[i])
        r, r_undef = _ratio(tp[i], support[i])
        f = _f1(p, r)
        exact.append((p, r, f))
        per_class[cls.value] = {
            "precision": float(p),
            "recall": float(r),
            "f1": float(f),
            "support": support[i],
            "undefined": p_undef or r_undef,
        }
    present = [i for i in range(k) if support[i] + predicted[i] > 0]
    accuracy = float(Fraction(sum(tp), total))
    overall = {"accuracy": accuracy}
    for j, name in enumerate(("precision", "recall", "f1")):
        overall[f"macro_{name}"] = float(sum(exact[i][j] for i in present) / len(present))
    for j, name in enumerate(("precision", "recall", "f1")):
        overall[f"weighted_{name}"] = float(sum(exact[i][j] * support[i] for i in range(k)) / total)
    overall.update(micro_precision=accuracy, micro_recall=accuracy, micro_f1=accuracy)
    return EvalReport(per_class, overall, cm, model_kind, dataset_id)


def evaluate(artifact, examples: Sequence[LabeledExample], dataset_id: str = "") -> EvalReport:
    """Score ``artifact`` on already-preprocessed labeled examples."""
    if not examples:
        raise EvaluationError("empty example list")
    probs = artifact.predict_proba_tokens([list(e.tokens) for e in examples])
    preds = [artifact.label_order[int(i)] for i in np.argmax(probs, axis=1)]
    cm = confusion_matrix([e.label for e in examples], preds, artifact.label_order)
    return report_from_confusion(cm, artifact.kind.value, dataset_id)


def save_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# comparison table

_COLUMNS = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ComparisonTable:
    rows: list[tuple[str, float, float, float, float]]
    aggregation: str = HEADLINE_AGGREGATION

    def header(self) -> list[str]:
        return ["model", "accuracy"] + [f"{self.aggregation}_{c}" for c in _COLUMNS[1:]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        for name, *vals in self.rows:
            writer.writerow([name] + [f"{v:.4f}" for v in vals])
        return buf.getvalue()

    def to_text(self) -> str:
        head = self.header()
        width = max([len(head[0])] + [len(r[0]) for r in self.rows])
        cols = [max(len(h), 8) for h in head[1:]]
        lines = [f"aggregation: {self.aggregation}",
                 head[0].ljust(width) + "  " + "  ".join(h.rjust(w) for h, w in zip(head[1:], cols))]
        for name, *vals in self.rows:
            lines.append(name.ljust(width) + "  " + "  ".join(f"{v:.4f}".rjust(w) for v, w in zip(vals, cols)))
        return "\n".join(lines) + "\n"


def compare_models(reports: Sequence[EvalReport], names: Sequence[str] | None = None) -> ComparisonTable:
    names = list(names) if names is not None else [r.model_kind for r in reports]
    agg = HEADLINE_AGGREGATION
    rows = [
        (name, r.overall["accuracy"], r.overall[f"{agg}_precision"], r.overall[f"{agg}_recall"], r.overall[f"{agg}_f1"])
        for name, r in zip(names, reports)
    ]
    rows.sort(key=lambda row: (-row[1], row[0]))
    return ComparisonTable(rows, agg)


# --------------------------------------------------------------------------
# training curves


def plot_curves(history: Mapping[str, Sequence[float]], out: str | Path, title: str = "") -> Path:
    """Loss and accuracy panels, train and validation series, epochs on x.

    Output is a PNG of ``PLOT_SIZE_INCHES`` at ``PLOT_DPI`` with no embedded
    timestamp or software tag, so identical histories give identical bytes.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = len(history.get("train_loss", []))
    if n < 1:
        raise EvaluationError("history has no epochs")
    out = Path(out)
    epochs = list(range(1, n + 1))
    with plt.rc_context({"path.simplify": False}):
        fig, axes = plt.subplots(1, 2, figsize=PLOT_SIZE_INCHES, dpi=PLOT_DPI)
        for ax, metric, label in ((axes[0], "loss", "Loss"), (axes[1], "accuracy", "Accuracy")):
            for split, style in (("train", "-o"), ("val", "--s")):
                series = list(history.get(f"{split}_{metric}", []))
                if series:
                    ax.plot(epochs[: len(series)], series, style,
                            label=f"{'training' if split == 'train' else 'validation'} {metric}")
            ax.set_xlabel("Epoch")
            ax.set_ylabel(label)
            ax.set_xticks(epochs)
            ax.legend()
            ax.grid(True, alpha=0.3)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        try:
            fig.savefig(out, format="png", metadata={"Software": None})
        except OSError as exc:
            raise EvaluationError(f"cannot write plot to {out}: {exc}") from None
        finally:
            plt.close(fig)
    return out
