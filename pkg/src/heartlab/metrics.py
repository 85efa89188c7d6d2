"""Evaluation suite: confusion counts, classification and regression
metrics, ROC/AUC, residual series.

Metrics with an empty denominator are reported as None rather than a
silent 0; the single convention is F1 = 0 when precision and recall are
both defined and sum to zero. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, MetricError

CLASSIFICATION_FIELDS = ("accuracy", "precision", "recall", "f1", "mcc")
REGRESSION_FIELDS = ("mse", "rmse", "mae", "r2")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            v = getattr(self, name)
            if v < 0 or v != int(v):
                raise ContractError(f"confusion count {name} must be a nonnegative integer, got {v}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_matrix(actual, predicted, positive_class: int = 1) -> ConfusionMatrix:
    actual = np.asarray(actual)
    predicted = np.asarray(predicted)
    if actual.shape != predicted.shape or actual.ndim != 1:
        raise ContractError(
            f"label vectors must be equal-length 1-D, got {actual.shape} and {predicted.shape}"
        )
    pos_a = actual == positive_class
    pos_p = predicted == positive_class
    return ConfusionMatrix(
        tp=int(np.sum(pos_a & pos_p)),
        fp=int(np.sum(~pos_a & pos_p)),
        tn=int(np.sum(~pos_a & ~pos_p)),
        fn=int(np.sum(pos_a & ~pos_p)),
    )


def classification_metrics(cm: ConfusionMatrix) -> dict:
    """accuracy, precision, recall, f1, mcc; None where the denominator is zero."""
    if cm.total == 0:
        raise MetricError("empty confusion matrix")
    tp, fp, tn, fn = cm.tp, cm.fp, cm.tn, cm.fn

    accuracy = (tn + tp) / cm.total
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None

    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)

    marginals = (tp + fp, tp + fn, tn + fp, tn + fn)
    if any(m == 0 for m in marginals):
        mcc = None
    else:
        mcc = (tp * tn - fp * fn) / math.sqrt(
            (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        )

    return {"accuracy": accuracy, "precision": precision, "recall": recall,
            "f1": f1, "mcc": mcc}


@dataclass(frozen=True)
class EvaluationPairs:
    y: np.ndarray
    y_hat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64))
        object.__setattr__(self, "y_hat", np.asarray(self.y_hat, dtype=np.float64))
        if self.y.shape != self.y_hat.shape or self.y.ndim != 1:
            raise ContractError("y and y_hat must be equal-length 1-D vectors")
        if self.y.size < 1:
            raise ContractError("need at least one evaluation pair")

    @property
    def n(self) -> int:
        return self.y.size


def regression_metrics(pairs: EvaluationPairs) -> dict:
    err = pairs.y - pairs.y_hat
    mse = float(np.mean(err * err))
    rmse = math.sqrt(mse)
    mae = float(np.mean(np.abs(err)))
    # constant targets have no variance to explain; the equality test, not
    # ss_tot == 0, is the robust check (np.mean rounding can leave a tiny
    # nonzero ss_tot on exactly-constant y, which would blow r2 up)
    if float(np.min(pairs.y)) == float(np.max(pairs.y)):
        r2 = None
    else:
        centered = pairs.y - pairs.y.mean()
        ss_tot = float(np.sum(centered * centered))
        r2 = 1.0 - float(np.sum(err * err)) / ss_tot if ss_tot > 0.0 else None
    return {"mse": mse, "rmse": rmse, "mae": mae, "r2": r2}


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # +inf sentinel first, then distinct scores descending
    auc: float


def roc_curve(actual, scores, positive_class: int = 1) -> RocCurve:
    """Threshold sweep over distinct scores (ties enter as one step);
    AUC by the trapezoidal rule."""
    actual = np.asarray(actual)
    scores = np.asarray(scores, dtype=np.float64)
    if actual.shape != scores.shape or actual.ndim != 1:
        raise ContractError("labels and scores must be equal-length 1-D vectors")
    pos = actual == positive_class
    n_pos = int(pos.sum())
    n_neg = int(pos.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    p = pos[order].astype(np.float64)
    tps = np.cumsum(p)
    fps = np.cumsum(1.0 - p)
    # keep the last index of every run of tied scores
    last = np.nonzero(np.diff(s))[0]
    keep = np.concatenate([last, [s.size - 1]])

    tpr = np.concatenate([[0.0], tps[keep] / n_pos])
    fpr = np.concatenate([[0.0], fps[keep] / n_neg])
    thr = np.concatenate([[np.inf], s[keep]])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thr, auc=auc)


def auc_pair_count(actual, scores, positive_class: int = 1) -> float:
    """Rank interpretation of AUC: P(score+ > score-) + 0.5 P(tie).
    Quadratic scan kept as an independent cross-check of the curve."""
    actual = np.asarray(actual)
    scores = np.asarray(scores, dtype=np.float64)
    pos = scores[actual == positive_class]
    neg = scores[actual != positive_class]
    if pos.size == 0 or neg.size == 0:
        raise MetricError("pair-count AUC needs both classes present")
    wins = 0.0
    for sp in pos:
        wins += np.sum(sp > neg) + 0.5 * np.sum(sp == neg)
    return float(wins / (pos.size * neg.size))


@dataclass(frozen=True)
class ResidualSeries:
    predicted: np.ndarray
    residual: np.ndarray   # y - y_hat, ordered by predicted ascending
    mean: float
    max_abs: float


def residuals(pairs: EvaluationPairs) -> ResidualSeries:
    res = pairs.y - pairs.y_hat
    order = np.argsort(pairs.y_hat, kind="stable")
    res = res[order]
    return ResidualSeries(
        predicted=pairs.y_hat[order],
        residual=res,
        mean=float(res.mean()),
        max_abs=float(np.max(np.abs(res))) if res.size else 0.0,
    )
