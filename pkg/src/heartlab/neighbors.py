"""Instance-based and Bayesian baselines: brute-force KNN and Gaussian
naive Bayes. Both expect scaled numeric features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import knn_search
from .data import Dataset
from .errors import ConfigError, ContractError, FitError
from .trees import TASK_CLASSIFICATION

WEIGHT_UNIFORM = "uniform"
WEIGHT_INVERSE = "inverse-distance"


@dataclass(frozen=True)
class KnnModel:
    X: np.ndarray
    y: np.ndarray            # int labels or float targets
    k: int
    weighting: str
    task: str
    n_classes: int = 0

    def __post_init__(self):
        if self.k < 1 or self.k > self.X.shape[0]:
            raise ConfigError(f"k must be in 1..{self.X.shape[0]}, got {self.k}")
        if self.weighting not in (WEIGHT_UNIFORM, WEIGHT_INVERSE):
            raise ConfigError(f"unknown weighting {self.weighting!r}")


def fit_knn(ds: Dataset, k: int = 5, weighting: str = WEIGHT_UNIFORM,
            task: str = TASK_CLASSIFICATION) -> KnnModel:
    if task == TASK_CLASSIFICATION:
        if ds.labels is None:
            raise FitError("knn classification requires labels")
        y = ds.labels
        n_classes = int(y.max()) + 1
    else:
        if ds.targets is None:
            raise FitError("knn regression requires targets")
        y = ds.targets
        n_classes = 0
    return KnnModel(X=np.ascontiguousarray(ds.rows, dtype=np.float64), y=y,
                    k=k, weighting=weighting, task=task, n_classes=n_classes)


def _neighbor_weights(model: KnnModel, d2: np.ndarray) -> np.ndarray:
    if model.weighting == WEIGHT_UNIFORM:
        return np.ones_like(d2)
    return 1.0 / (np.sqrt(d2) + 1e-12)


def predict_knn_batch(model: KnnModel, X: np.ndarray):
    """Predictions for a query matrix. Classification returns (labels,
    vote-share matrix); regression returns the weighted neighbor mean.

    Neighbors are the k smallest Euclidean distances, ties broken by the
    lower training-row index; vote ties go to the lower class code.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.X.shape[1]:
        raise ContractError("query width differs from training features")
    idx, d2 = knn_search(model.X, X, model.k)
    wts = _neighbor_weights(model, d2)
    if model.task == TASK_CLASSIFICATION:
        votes = np.zeros((X.shape[0], model.n_classes))
        labels = model.y[idx]
        for slot in range(model.k):
            votes[np.arange(X.shape[0]), labels[:, slot]] += wts[:, slot]
        pred = np.argmax(votes, axis=1).astype(np.int64)
        return pred, votes / votes.sum(axis=1, keepdims=True)
    vals = model.y[idx]
    return np.sum(vals * wts, axis=1) / np.sum(wts, axis=1)


def predict_knn(model: KnnModel, x, task: str | None = None):
    """Single-row convenience wrapper; task must match the model's."""
    if task is not None and task != model.task:
        raise ConfigError(f"model was fitted for {model.task}, queried for {task}")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    out = predict_knn_batch(model, x)
    if model.task == TASK_CLASSIFICATION:
        return int(out[0][0])
    return float(out[0])


@dataclass(frozen=True)
class GaussianNbModel:
    priors: np.ndarray       # per class, sums to 1
    means: np.ndarray        # (n_classes, n_features)
    variances: np.ndarray    # floored population variances
    floor: float


def fit_gnb(ds: Dataset) -> GaussianNbModel:
    """Per-class feature Gaussians with a variance floor of 1e-9 times the
    largest overall feature variance (so constant-within-class features
    survive)."""
    if ds.labels is None:
        raise FitError("gaussian nb requires labels")
    X = ds.rows
    y = ds.labels
    n_classes = int(y.max()) + 1
    n, m = X.shape
    overall = np.mean((X - X.mean(axis=0)) ** 2, axis=0)
    top = float(overall.max()) if m else 0.0
    floor = 1e-9 * top if top > 0.0 else 1e-9

    priors = np.zeros(n_classes)
    means = np.zeros((n_classes, m))
    variances = np.zeros((n_classes, m))
    for c in range(n_classes):
        rows = X[y == c]
        if rows.shape[0] < 2:
            raise FitError(f"class {c} has {rows.shape[0]} row(s); need >= 2 for a variance")
        priors[c] = rows.shape[0] / n
        means[c] = rows.mean(axis=0)
        variances[c] = np.maximum(np.mean((rows - means[c]) ** 2, axis=0), floor)
    return GaussianNbModel(priors=priors, means=means, variances=variances, floor=floor)


def gnb_log_scores(model: GaussianNbModel, X: np.ndarray) -> np.ndarray:
    """(n, n_classes) joint log densities log prior + sum_f log N(x_f)."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty((X.shape[0], model.priors.size))
    for c in range(model.priors.size):
        var = model.variances[c]
        diff = X - model.means[c]
        ll = -0.5 * (np.log(2.0 * np.pi * var) + diff * diff / var).sum(axis=1)
        out[:, c] = np.log(model.priors[c]) + ll
    return out


def gnb_proba(model: GaussianNbModel, X: np.ndarray) -> np.ndarray:
    """Posterior class probabilities via log-sum-exp normalization."""
    scores = gnb_log_scores(model, X)
    top = scores.max(axis=1, keepdims=True)
    ex = np.exp(scores - top)
    return ex / ex.sum(axis=1, keepdims=True)


def predict_gnb(model: GaussianNbModel, x) -> tuple:
    """Most probable class for one row (argmax ties to the lower code) and
    its posterior probability."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    p = gnb_proba(model, x)[0]
    c = int(np.argmax(p))
    return c, float(p[c])


def predict_gnb_batch(model: GaussianNbModel, X: np.ndarray) -> np.ndarray:
    return np.argmax(gnb_proba(model, X), axis=1).astype(np.int64)
