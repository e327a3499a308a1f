"""Downstream evaluation: frozen-embedding classifier and F1 metrics.

The classifier is one-vs-rest logistic regression trained by minibatch SGD
on the training embeddings only; it is never fine-tuned on embeddings
generated for held-out data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError


def _binary_counts(pred: np.ndarray, truth: np.ndarray, n_classes: int):
    """Per-class TP/FP/FN; inputs are either class ids or binary indicator rows."""
    if pred.shape != truth.shape:
        raise DataError("prediction/truth shape mismatch")
    if pred.ndim == 1:
        pred_bin = np.zeros((len(pred), n_classes), dtype=bool)
        truth_bin = np.zeros((len(truth), n_classes), dtype=bool)
        pred_bin[np.arange(len(pred)), pred] = True
        truth_bin[np.arange(len(truth)), truth] = True
    else:
        pred_bin = pred.astype(bool)
        truth_bin = truth.astype(bool)
    tp = (pred_bin & truth_bin).sum(axis=0)
    fp = (pred_bin & ~truth_bin).sum(axis=0)
    fn = (~pred_bin & truth_bin).sum(axis=0)
    return tp, fp, fn


def _infer_classes(pred: np.ndarray, truth: np.ndarray, n_classes: int | None) -> int:
    if pred.ndim == 2:
        return pred.shape[1]
    if n_classes is not None:
        return n_classes
    return int(max(pred.max(), truth.max())) + 1


def micro_f1(pred, truth, n_classes: int | None = None) -> float:
    """F1 from globally pooled true/false positives and negatives."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.size == 0:
        raise DataError("empty input")
    tp, fp, fn = _binary_counts(pred, truth, _infer_classes(pred, truth, n_classes))
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    return float(2 * tp.sum() / denom) if denom else 0.0


def macro_f1(pred, truth, n_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1; unsupported classes count as 0."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.size == 0:
        raise DataError("empty input")
    tp, fp, fn = _binary_counts(pred, truth, _infer_classes(pred, truth, n_classes))
    empty = (tp + fn) == 0
    if empty.any():
        warnings.warn(f"{int(empty.sum())} class(es) with no support scored as 0",
                      stacklevel=2)
    denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, denom, out=np.zeros(len(tp), dtype=float),
                          where=denom > 0)
    return float(per_class.mean())


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class DownstreamClassifier:
    """One-vs-rest logistic scores; argmax for single-label, 0.5 cut otherwise."""

    kind: str
    weights: np.ndarray  # (d, L)
    bias: np.ndarray     # (L,)
    constant_class: int | None = None

    def scores(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) @ self.weights + self.bias

    def predict(self, z: np.ndarray) -> np.ndarray:
        if self.constant_class is not None:
            return np.full(len(z), self.constant_class, dtype=np.int64)
        s = self.scores(z)
        if self.kind == "single":
            return np.argmax(s, axis=1)
        return (s > 0).astype(np.int8)  # sigmoid(s) > 0.5


def fit_downstream_classifier(embeddings, labels, kind: str = "single", *,
                              n_classes: int | None = None, epochs: int = 60,
                              learning_rate: float = 0.5, batch_size: int = 64,
                              l2: float = 1e-4, seed: int = 0) -> DownstreamClassifier:
    """Train one-vs-rest logistic regression by SGD on fixed embeddings."""
    z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if len(z) != len(y) or len(z) == 0:
        raise DataError("embeddings and labels must align and be nonempty")

    if kind == "single":
        classes = np.unique(y)
        n_classes = n_classes or int(y.max()) + 1
        if len(classes) == 1:
            warnings.warn("single training class: falling back to a constant predictor",
                          stacklevel=2)
            return DownstreamClassifier(kind, np.zeros((z.shape[1], n_classes)),
                                        np.zeros(n_classes), constant_class=int(classes[0]))
        targets = np.zeros((len(y), n_classes))
        targets[np.arange(len(y)), y] = 1.0
    elif kind == "multi":
        n_classes = y.shape[1]
        targets = y.astype(np.float64)
    else:
        raise DataError(f"unknown label kind: {kind!r}")

    rng = np.random.default_rng(seed)
    d = z.shape[1]
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    for _ in range(epochs):
        order = rng.permutation(len(z))
        for start in range(0, len(order), batch_size):
            rows = order[start:start + batch_size]
            probs = _sigmoid(z[rows] @ w + b)
            err = (probs - targets[rows]) / len(rows)
            w -= learning_rate * (z[rows].T @ err + l2 * w)
            b -= learning_rate * err.sum(axis=0)
    return DownstreamClassifier(kind, w, b)
