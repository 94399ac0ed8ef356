"""Classification metrics and the max-depth sweep."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..tables import write_csv
from .forest import ForestModel, train_forest

LABELS = (-1, 0, 1)
DEFAULT_DEPTHS = (2, 4, 6, 8, 10, 12, 14, 16)
SWEEP_HEADER = ("max_depth", "accuracy", "precision_macro", "recall_macro", "f1_macro",
                "precision_weighted", "recall_weighted", "f1_weighted")


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: tuple[tuple[int, ...], ...]
    labels: tuple[int, ...] = LABELS

    def row(self):
        return (self.accuracy, self.macro_precision, self.macro_recall, self.macro_f1,
                self.weighted_precision, self.weighted_recall, self.weighted_f1)


def confusion_matrix(y_true, y_pred, labels: Sequence[int] = LABELS) -> np.ndarray:
    """Rows are true classes, columns predicted classes, both in ``labels`` order."""
    pos = {l: i for i, l in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(np.asarray(y_true).tolist(), np.asarray(y_pred).tolist()):
        cm[pos[t], pos[p]] += 1
    return cm


def report_from_predictions(y_true, y_pred, labels: Sequence[int] = LABELS) -> EvalReport:
    """Averages run over classes present in either y_true or y_pred.

    Precision of a class that is never predicted is 0, as is F1 when
    precision and recall are both 0.
    """
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("empty evaluation set")
    cm = confusion_matrix(y_true, y_pred, labels)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    present = (support > 0) | (predicted > 0)
    w = support / support.sum()
    return EvalReport(
        accuracy=float(tp.sum() / cm.sum()),
        macro_precision=float(precision[present].mean()),
        macro_recall=float(recall[present].mean()),
        macro_f1=float(f1[present].mean()),
        weighted_precision=float(np.sum(w * precision)),
        weighted_recall=float(np.sum(w * recall)),
        weighted_f1=float(np.sum(w * f1)),
        confusion=tuple(tuple(int(v) for v in r) for r in cm),
        labels=tuple(labels),
    )


def evaluate(model: ForestModel, X, y, labels: Sequence[int] = LABELS) -> EvalReport:
    return report_from_predictions(y, model.predict(X), labels)


def depth_sweep(X_train, y_train, X_test, y_test, depths: Sequence[int] = DEFAULT_DEPTHS,
                n_trees: int = 100, seed: int = 0, n_jobs: int = 1,
                labels: Sequence[int] = LABELS) -> list[tuple[int, EvalReport]]:
    """One forest per depth, all sharing the same data and master seed."""
    rows = []
    for d in depths:
        model = train_forest(X_train, y_train, d, n_trees=n_trees, seed=seed, n_jobs=n_jobs)
        rows.append((d, evaluate(model, X_test, y_test, labels)))
    return rows


def write_sweep_csv(rows: Sequence[tuple[int, EvalReport]], path: str | Path) -> int:
    return write_csv(path, SWEEP_HEADER, [(d, *r.row()) for d, r in rows])
