"""Naive Bayes, linear SVM and random forest over bag-of-words / TF-IDF features."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from deptweets.corpus import LabeledExample
from deptweets.features import (
    feature_matrix,
    fit_vocabulary,
    load_vocabulary,
    restrict_vocabulary,
    save_vocabulary,
)
from deptweets.labels import LABEL_ORDER
from deptweets.models.artifact import ModelArtifact, register
from deptweets.models.config import ModelKind, TrainConfig


class TrainingError(ValueError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(y: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(y, minlength=n_classes)
    missing = [i for i in range(n_classes) if counts[i] == 0]
    if missing:
        raise TrainingError(f"classes {missing} have no training examples")
    return counts


def balanced_weights(y: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    w = np.where(counts > 0, len(y) / (n_classes * np.maximum(counts, 1)), 0.0)
    return w


# --------------------------------------------------------------------------
# multinomial naive Bayes


def nb_fit(X: np.ndarray, y: np.ndarray, n_classes: int, alpha: float = 1.0) -> dict[str, np.ndarray]:
    """Log-priors ``log(N_c / N)`` and smoothed log-likelihoods.

    ``log P(t|c) = log((N_ct + alpha) / (N_c + alpha * |V|))`` where ``N_ct`` is
    the summed feature weight of term t in class c.
    """
    if alpha <= 0:
        raise TrainingError("alpha must be positive")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    counts = _check_labels(y, n_classes)
    log_prior = np.log(counts / counts.sum())
    term_counts = np.zeros((n_classes, X.shape[1]))
    for c in range(n_classes):
        term_counts[c] = X[y == c].sum(axis=0)
    smoothed = term_counts + alpha
    log_lik = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))
    return {"log_prior": log_prior, "log_likelihood": log_lik}


def nb_joint_log_likelihood(X: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    return np.asarray(X, dtype=np.float64) @ params["log_likelihood"].T + params["log_prior"]


def nb_predict_proba(X: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    return softmax(nb_joint_log_likelihood(X, params))


# --------------------------------------------------------------------------
# one-vs-rest linear SVM


def svm_fit(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    C: float = 1.0,
    epochs: int = 30,
    seed: int = 0,
    batch_size: int = 32,
    sample_weight: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Mini-batch Pegasos subgradient descent on ``||w||^2 / 2 + C * sum(hinge)``.

    All one-vs-rest problems are solved together. With ``lam = 1 / (C n)`` the
    step is ``1 / (lam t)``; iterates are projected onto the ball of radius
    ``1 / sqrt(lam)``. The unregularized bias moves by ``1 / t`` times the mean
    violation, which keeps the solution path equivariant under
    ``X -> s X, C -> C / s^2``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n, d = X.shape
    if n == 0:
        raise TrainingError("empty training set")
    if len(np.unique(y)) < 2:
        raise TrainingError("linear SVM needs at least two classes")
    if np.all(X == X[0]):
        raise TrainingError("all feature vectors are identical")
    if C <= 0:
        raise TrainingError("C must be positive")
    Y = -np.ones((n, n_classes))
    Y[np.arange(n), y] = 1.0
    sw = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    lam = 1.0 / (C * n)
    radius = 1.0 / np.sqrt(lam)
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    rng = np.random.default_rng(seed)
    t = 0
    bs = max(1, batch_size)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            t += 1
            eta = 1.0 / (lam * t)
            Xb, Yb = X[idx], Y[idx]
            margins = Yb * (Xb @ W.T + b)
            viol = (margins < 1.0) * Yb * sw[idx, None]
            W *= 1.0 - eta * lam
            W += (eta / len(idx)) * (viol.T @ Xb)
            b += viol.mean(axis=0) / t
            norms = np.linalg.norm(W, axis=1)
            scale = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
            W *= scale[:, None]
    return {"W": W, "b": b}


def svm_margins(X: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    return np.asarray(X, dtype=np.float64) @ params["W"].T + params["b"]


def svm_predict_proba(X: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    # softmax over one-vs-rest margins: an approximation, not calibrated
    return softmax(svm_margins(X, params))


# --------------------------------------------------------------------------
# random forest


def rf_fit(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    n_trees: int = 100,
    max_depth: int | None = None,
    max_features: str | int | float | None = "sqrt",
    bootstrap: bool = True,
    seed: int = 0,
    class_weight: str | None = None,
) -> dict[str, np.ndarray]:
    """Fit with scikit-learn, then flatten every tree into plain arrays.

    Each leaf stores its majority class; prediction is a vote over trees.
    """
    from sklearn.ensemble import RandomForestClassifier

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(y) == 0:
        raise TrainingError("empty training set")
    if n_trees < 1:
        raise TrainingError("n_trees must be at least 1")
    forest = RandomForestClassifier(
        n_estimators=n_trees,
        max_depth=max_depth,
        max_features=max_features,
        bootstrap=bootstrap,
        random_state=seed,
        class_weight=class_weight,
        n_jobs=1,
    )
    forest.fit(X, y)
    classes = forest.classes_.astype(np.int64)
    left, right, feat, thr, leaf_cls, roots = [], [], [], [], [], []
    offset = 0
    for est in forest.estimators_:
        tree = est.tree_
        roots.append(offset)
        cl = tree.children_left.astype(np.int64)
        cr = tree.children_right.astype(np.int64)
        left.append(np.where(cl >= 0, cl + offset, -1))
        right.append(np.where(cr >= 0, cr + offset, -1))
        feat.append(tree.feature.astype(np.int64))
        thr.append(tree.threshold.astype(np.float64))
        leaf_cls.append(classes[np.argmax(tree.value[:, 0, :], axis=1)])
        offset += tree.node_count
    return {
        "left": np.concatenate(left),
        "right": np.concatenate(right),
        "feature": np.concatenate(feat),
        "threshold": np.concatenate(thr),
        "leaf_class": np.concatenate(leaf_cls),
        "roots": np.array(roots, dtype=np.int64),
        "n_classes": np.array([n_classes], dtype=np.int64),
    }


def rf_predict_proba(X: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    # trees were grown on float32 features; compare in that precision too
    X = np.asarray(X, dtype=np.float32).astype(np.float64)
    n_classes = int(params["n_classes"][0])
    left, right = params["left"], params["right"]
    feat, thr, leaf_cls = params["feature"], params["threshold"], params["leaf_class"]
    roots = params["roots"]
    votes = np.zeros((X.shape[0], n_classes))
    rows = np.arange(X.shape[0])
    for root in roots:
        node = np.full(X.shape[0], root)
        active = left[node] >= 0
        while active.any():
            a = node[active]
            go_left = X[rows[active], feat[a]] <= thr[a]
            node[active] = np.where(go_left, left[a], right[a])
            active = left[node] >= 0
        np.add.at(votes, (rows, leaf_cls[node]), 1.0)
    return votes / len(roots)


# --------------------------------------------------------------------------
# artifact-level training


def label_indices(examples: Sequence[LabeledExample]) -> np.ndarray:
    return np.array([LABEL_ORDER.index(e.label) for e in examples], dtype=np.int64)


def train_classical(examples: Sequence[LabeledExample], cfg: TrainConfig) -> ModelArtifact:
    kind = cfg.model_kind
    ex = cfg.extras
    mode = ex.get("features", "tfidf")
    if mode not in ("tfidf", "bow"):
        raise TrainingError(f"unknown feature mode {mode!r}")
    docs = [list(e.tokens) for e in examples]
    y = label_indices(examples)
    n_classes = cfg.class_count
    vocab = fit_vocabulary(docs, int(ex.get("min_df", 1)))
    if kind is ModelKind.RF:
        vocab = restrict_vocabulary(vocab, int(ex.get("feature_cap", 2000)))
    X = feature_matrix(docs, vocab, mode)
    if kind is ModelKind.NB:
        _check_labels(y, n_classes)
        params = nb_fit(X, y, n_classes, float(ex.get("nb_alpha", 1.0)))
    elif kind is ModelKind.SVM:
        sw = balanced_weights(y, n_classes)[y] if cfg.class_weight == "balanced" else None
        params = svm_fit(X, y, n_classes, float(ex.get("svm_C", 1.0)), cfg.epochs, cfg.seed,
                         cfg.batch_size or 32, sw)
    elif kind is ModelKind.RF:
        params = rf_fit(X, y, n_classes, int(ex.get("rf_trees", 100)), ex.get("max_depth"),
                        ex.get("max_features", "sqrt"), bool(ex.get("bootstrap", True)), cfg.seed,
                        cfg.class_weight)
    else:
        raise TrainingError(f"{kind.value} is not a classical model kind")
    spec = {"tokens": "normalize+stopwords", "features": mode, "vocabulary": "vocabulary.txt"}
    return ModelArtifact(kind, cfg, params, spec, {"vocabulary": vocab})


def train_naive_bayes(examples: Sequence[LabeledExample], alpha: float = 1.0, **cfg_overrides) -> ModelArtifact:
    cfg = TrainConfig.default(ModelKind.NB, extras={"nb_alpha": alpha}, **cfg_overrides)
    return train_classical(examples, cfg)


def train_linear_svm(examples: Sequence[LabeledExample], C: float = 1.0, epochs: int = 30, seed: int = 0) -> ModelArtifact:
    cfg = TrainConfig.default(ModelKind.SVM, epochs=epochs, seed=seed, extras={"svm_C": C})
    return train_classical(examples, cfg)


def train_random_forest(examples: Sequence[LabeledExample], n_trees: int = 100,
                        max_depth: int | None = None, seed: int = 0) -> ModelArtifact:
    cfg = TrainConfig.default(ModelKind.RF, seed=seed, extras={"rf_trees": n_trees, "max_depth": max_depth})
    return train_classical(examples, cfg)


_PREDICTORS = {ModelKind.NB: nb_predict_proba, ModelKind.SVM: svm_predict_proba, ModelKind.RF: rf_predict_proba}


def _proba(artifact: ModelArtifact, docs):
    vocab = artifact.features["vocabulary"]
    X = feature_matrix(docs, vocab, artifact.feature_spec["features"])
    return _PREDICTORS[artifact.kind](X, artifact.params)


def _save(artifact: ModelArtifact, directory: Path) -> None:
    save_vocabulary(artifact.features["vocabulary"], directory / "vocabulary.txt")


def _load(artifact: ModelArtifact, directory: Path) -> dict:
    return {"vocabulary": load_vocabulary(directory / artifact.feature_spec["vocabulary"])}


for _kind in (ModelKind.NB, ModelKind.SVM, ModelKind.RF):
    register(_kind, _proba, _save, _load)
