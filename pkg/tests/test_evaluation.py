import random

import numpy as np
import pytest

from deptweets.evaluation import (
    ConfusionMatrix,
    EvaluationError,
    compare_models,
    confusion_matrix,
    evaluate,
    plot_curves,
    report_from_confusion,
)
from deptweets.labels import LABEL_ORDER
from deptweets.models import train_naive_bayes

from metric_oracle import brute_force, expand

A, B = LABEL_ORDER[0], LABEL_ORDER[1]


def _report(y_true, y_pred, kind="m"):
    return report_from_confusion(confusion_matrix(y_true, y_pred), kind)


def test_binary_hand_example():
    # TP=2, FP=1, FN=1, TN=6 for class A
    y_true = [A, A, A, B, B, B, B, B, B, B]
    y_pred = [A, A, B, A, B, B, B, B, B, B]
    r = _report(y_true, y_pred)
    a = r.per_class[A.value]
    assert (a["precision"], a["recall"], a["f1"]) == pytest.approx((2 / 3, 2 / 3, 2 / 3))


def test_perfect_and_constant_predictors():
    y = [c for c in LABEL_ORDER for _ in range(5)]
    r = _report(y, y)
    assert r.overall["accuracy"] == 1.0 and all(m["f1"] == 1.0 for m in r.per_class.values())
    r = _report(y, [A] * len(y))
    assert r.overall["accuracy"] == pytest.approx(1 / 6)


def test_zero_support_flagged():
    r = _report([A, A], [A, B])
    assert r.per_class["Major"]["support"] == 0 and r.per_class["Major"]["undefined"]
    assert r.per_class["Psychotic"] == {"precision": 0.0, "recall": 0.0, "f1": 0.0, "support": 0,
                                        "undefined": True}


def test_report_schema_and_support_total():
    r = _report([A, B, B], [B, B, A])
    assert list(r.per_class) == [c.value for c in LABEL_ORDER]
    assert sum(m["support"] for m in r.per_class.values()) == r.confusion.total == 3
    for m in r.per_class.values():
        assert 0 <= m["precision"] <= 1 and 0 <= m["recall"] <= 1


def test_matches_brute_force_on_random_matrices():
    rng = np.random.default_rng(0)
    for _ in range(200):
        counts = rng.integers(0, 6, size=(6, 6)) * (rng.random((6, 6)) < 0.6)
        if counts.sum() == 0:
            continue
        r = report_from_confusion(ConfusionMatrix(counts))
        per, overall = brute_force(*expand(counts), 6)
        for c, ref in zip(LABEL_ORDER, per):
            for key in ("precision", "recall", "f1"):
                assert r.per_class[c.value][key] == pytest.approx(float(ref[key]), abs=1e-12)
        for key, ref in overall.items():
            assert r.overall[key] == pytest.approx(float(ref), abs=1e-12), key


def test_errors():
    with pytest.raises(EvaluationError):
        report_from_confusion(ConfusionMatrix(np.zeros((6, 6), dtype=int)))
    with pytest.raises(EvaluationError):
        confusion_matrix([A], [])


def test_evaluate_permutation_invariant(small_corpus):
    art = train_naive_bayes(small_corpus)
    shuffled = random.Random(0).sample(small_corpus, len(small_corpus))
    a, b = evaluate(art, small_corpus, "x"), evaluate(art, shuffled, "x")
    assert a.to_json() == b.to_json()
    assert a.model_kind == "nb" and a.dataset_id == "x"
    with pytest.raises(EvaluationError):
        evaluate(art, [])


def test_comparison_table_sorted_with_header():
    reports = []
    for name, acc in (("x", 0.93), ("y", 0.96), ("z", 0.94)):
        n_right = int(round(acc * 100))
        y_true = [A] * 100
        reports.append(_report(y_true, [A] * n_right + [B] * (100 - n_right), name))
    table = compare_models(reports)
    assert [r[0] for r in table.rows] == ["y", "z", "x"]
    assert table.to_text().splitlines()[0] == "aggregation: weighted"
    csv_lines = table.to_csv().splitlines()
    assert csv_lines[0] == "model,accuracy,weighted_precision,weighted_recall,weighted_f1"
    assert csv_lines[1].startswith("y,0.9600,")
    assert len(compare_models(reports[:1]).rows) == 1


def _history(n):
    rng = np.random.default_rng(n)
    return {k: list(rng.random(n)) for k in ("train_loss", "val_loss", "train_accuracy", "val_accuracy")}


def test_plot_curves_ticks_and_determinism(tmp_path, monkeypatch):
    import matplotlib.axes

    seen = []
    orig = matplotlib.axes.Axes.set_xticks
    monkeypatch.setattr(matplotlib.axes.Axes, "set_xticks",
                        lambda self, ticks, *a, **k: (seen.append(list(ticks)), orig(self, ticks, *a, **k))[1])
    h = _history(10)
    plot_curves(h, tmp_path / "a.png")
    assert seen == [list(range(1, 11))] * 2
    plot_curves(h, tmp_path / "b.png")
    data = (tmp_path / "a.png").read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n" and data == (tmp_path / "b.png").read_bytes()


def test_plot_single_epoch_and_errors(tmp_path):
    plot_curves(_history(1), tmp_path / "one.png")
    assert (tmp_path / "one.png").stat().st_size > 0
    with pytest.raises(EvaluationError):
        plot_curves({"train_loss": []}, tmp_path / "none.png")
    with pytest.raises(EvaluationError):
        plot_curves(_history(2), tmp_path / "missing_dir" / "x.png")
