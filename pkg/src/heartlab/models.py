"""Uniform estimator layer: named specs, fit/predict/proba dispatch over
all eleven families, and versioned JSON persistence.

A TrainedModel carries a fingerprint of the training columns; predict
refuses datasets whose feature columns differ. predict_proba returns the
positive-class probability. The SVM maps its margin through a fixed
logistic link, which is monotone but uncalibrated.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Dataset
from .ensembles import (
    Forest,
    ForestConfig,
    GbtConfig,
    GbtModel,
    LOSS_LOGISTIC,
    LOSS_SQUARED,
    fit_gbt,
    fit_random_forest,
)
from .errors import ContractError, FitError, ModelLoadError, ModelSpecError
from .linear import (
    LinearModel,
    PenaltyConfig,
    fit_lasso,
    fit_linear_svm,
    fit_linear_svr,
    fit_logistic,
    fit_ols,
    fit_ridge,
)
from .neighbors import (
    GaussianNbModel,
    KnnModel,
    WEIGHT_UNIFORM,
    fit_gnb,
    fit_knn,
    gnb_proba,
    predict_gnb_batch,
    predict_knn_batch,
)
from .trees import (
    CartConfig,
    FlatTree,
    TASK_CLASSIFICATION,
    TASK_REGRESSION,
    fit_cart_matrix,
    flatten_tree,
)

FORMAT_TAG = "heartlab-model"
FORMAT_VERSION = 1

CLASSIFICATION_FAMILIES = ("cart", "random_forest", "gbt", "knn", "gaussian_nb",
                           "linear_svm", "logistic")
REGRESSION_FAMILIES = ("cart", "random_forest", "gbt", "knn", "ols", "ridge",
                       "lasso", "linear_svr")
ALL_FAMILIES = ("cart", "random_forest", "gbt", "ols", "ridge", "lasso",
                "linear_svm", "linear_svr", "knn", "gaussian_nb", "logistic")

_HYPERPARAM_KEYS = {
    "cart": {"max_depth", "min_samples_split", "min_samples_leaf", "feature_subsample"},
    "random_forest": {"n_trees", "bootstrap", "feature_subsample", "max_depth",
                      "min_samples_split", "min_samples_leaf"},
    "gbt": {"n_rounds", "learning_rate", "max_depth", "lambda_leaf"},
    "ols": set(),
    "ridge": {"lam"},
    "lasso": {"lam", "tol", "max_iter"},
    "linear_svm": {"lam_svm", "epochs"},
    "linear_svr": {"lam_svm", "eps", "epochs"},
    "knn": {"k", "weighting"},
    "gaussian_nb": set(),
    "logistic": {"tol", "max_iter", "ridge"},
}


@dataclass(frozen=True)
class EstimatorSpec:
    family: str
    task: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in ALL_FAMILIES:
            raise ModelSpecError(f"unknown model family {self.family!r}")
        if self.task not in (TASK_CLASSIFICATION, TASK_REGRESSION):
            raise ModelSpecError(f"unknown task {self.task!r}")
        allowed = (CLASSIFICATION_FAMILIES if self.task == TASK_CLASSIFICATION
                   else REGRESSION_FAMILIES)
        if self.family not in allowed:
            raise ModelSpecError(f"family {self.family!r} does not support task {self.task!r}")
        unknown = set(self.hyperparams) - _HYPERPARAM_KEYS[self.family]
        if unknown:
            raise ModelSpecError(
                f"unknown hyperparameter {sorted(unknown)[0]!r} for family {self.family!r}")


@dataclass(frozen=True)
class TrainedModel:
    spec: EstimatorSpec
    params: object
    fingerprint: dict  # n_rows trained on, feature names, sha of the names

    def predict(self, ds: Dataset) -> np.ndarray:
        return predict(self, ds)

    def predict_proba(self, ds: Dataset) -> np.ndarray:
        return predict_proba(self, ds)


def _fingerprint(ds: Dataset) -> dict:
    names = ds.feature_names()
    sha = hashlib.sha256("\x1f".join(names).encode()).hexdigest()[:16]
    return {"n_rows": ds.n_rows, "columns": names, "columns_sha": sha}


def _check_fingerprint(model: TrainedModel, ds: Dataset) -> None:
    sha = hashlib.sha256("\x1f".join(ds.feature_names()).encode()).hexdigest()[:16]
    if sha != model.fingerprint["columns_sha"]:
        raise ContractError(
            "dataset columns differ from the columns the model was fitted on")


def _cart_config(hp: dict, seed: int) -> CartConfig:
    return CartConfig(
        max_depth=int(hp.get("max_depth", 12)),
        min_samples_split=int(hp.get("min_samples_split", 2)),
        min_samples_leaf=int(hp.get("min_samples_leaf", 1)),
        feature_subsample=hp.get("feature_subsample", "all"),
        seed=seed,
    )


def _labels_or_targets(spec: EstimatorSpec, ds: Dataset):
    if spec.task == TASK_CLASSIFICATION:
        if ds.labels is None:
            raise FitError(f"{spec.family} classification requires labels")
        return ds.labels
    if ds.targets is None:
        raise FitError(f"{spec.family} regression requires targets")
    return ds.targets


def fit(spec: EstimatorSpec, ds: Dataset) -> TrainedModel:
    """Dispatch to the family fit routine; deterministic given spec.seed."""
    hp = spec.hyperparams
    y = _labels_or_targets(spec, ds)
    n_classes = int(ds.labels.max()) + 1 if spec.task == TASK_CLASSIFICATION else 0

    if spec.family == "cart":
        root = fit_cart_matrix(ds.rows, y, _cart_config(hp, spec.seed), spec.task,
                               n_classes=n_classes or None)
        params = flatten_tree(root, spec.task, n_classes)
    elif spec.family == "random_forest":
        cfg = ForestConfig(
            n_trees=int(hp.get("n_trees", 100)),
            cart=_cart_config({k: hp[k] for k in hp if k in
                               ("max_depth", "min_samples_split", "min_samples_leaf")},
                              spec.seed),
            bootstrap=bool(hp.get("bootstrap", True)),
            feature_subsample=hp.get("feature_subsample", "auto"),
            seed=spec.seed,
        )
        params = fit_random_forest(ds, cfg, spec.task)
    elif spec.family == "gbt":
        loss = LOSS_LOGISTIC if spec.task == TASK_CLASSIFICATION else LOSS_SQUARED
        cfg = GbtConfig(
            n_rounds=int(hp.get("n_rounds", 100)),
            learning_rate=float(hp.get("learning_rate", 0.1)),
            max_depth=int(hp.get("max_depth", 3)),
            loss=loss,
            lambda_leaf=float(hp.get("lambda_leaf", 1.0)),
            seed=spec.seed,
        )
        params = fit_gbt(ds, cfg)
    elif spec.family == "ols":
        params = fit_ols(ds.rows, y)
    elif spec.family == "ridge":
        params = fit_ridge(ds.rows, y, float(hp.get("lam", 1.0)))
    elif spec.family == "lasso":
        cfg = PenaltyConfig(lam=float(hp.get("lam", 0.01)),
                            tol=float(hp.get("tol", 1e-6)),
                            max_iter=int(hp.get("max_iter", 10000)),
                            seed=spec.seed)
        params = fit_lasso(ds.rows, y, cfg)
    elif spec.family == "logistic":
        cfg = PenaltyConfig(lam=0.0, tol=float(hp.get("tol", 1e-6)),
                            max_iter=int(hp.get("max_iter", 10000)),
                            ridge=float(hp.get("ridge", 0.0)), seed=spec.seed)
        params = fit_logistic(ds.rows, y, cfg)
    elif spec.family == "linear_svm":
        cfg = PenaltyConfig(lam_svm=float(hp.get("lam_svm", 0.01)),
                            epochs=int(hp.get("epochs", 30)), seed=spec.seed)
        params = fit_linear_svm(ds.rows, y, cfg)
    elif spec.family == "linear_svr":
        cfg = PenaltyConfig(lam_svm=float(hp.get("lam_svm", 0.01)),
                            eps=float(hp.get("eps", 0.1)),
                            epochs=int(hp.get("epochs", 30)), seed=spec.seed)
        params = fit_linear_svr(ds.rows, y, cfg)
    elif spec.family == "knn":
        params = fit_knn(ds, k=int(hp.get("k", 5)),
                         weighting=hp.get("weighting", WEIGHT_UNIFORM), task=spec.task)
    elif spec.family == "gaussian_nb":
        params = fit_gnb(ds)
    else:  # unreachable, __post_init__ validates
        raise ModelSpecError(f"unknown model family {spec.family!r}")

    return TrainedModel(spec=spec, params=params, fingerprint=_fingerprint(ds))


def _predict_matrix(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    p = model.params
    fam = model.spec.family
    if fam == "cart":
        vals = p.predict_value(X)
        if model.spec.task == TASK_CLASSIFICATION:
            return np.argmax(vals, axis=1).astype(np.int64)
        return vals
    if fam in ("random_forest", "gbt"):
        return p.predict(X)
    if fam in ("ols", "ridge", "lasso", "logistic", "linear_svm", "linear_svr"):
        return p.predict(X)
    if fam == "knn":
        out = predict_knn_batch(p, X)
        return out[0] if model.spec.task == TASK_CLASSIFICATION else out
    if fam == "gaussian_nb":
        return predict_gnb_batch(p, X)
    raise ModelSpecError(f"unknown model family {fam!r}")


def _proba_matrix(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    p = model.params
    fam = model.spec.family

    def _pick(mat: np.ndarray) -> np.ndarray:
        if mat.shape[1] < 2:
            return np.zeros(mat.shape[0])
        return mat[:, 1]

    if fam == "cart":
        return _pick(p.predict_value(X))
    if fam in ("random_forest", "gbt", "logistic"):
        return _pick(p.predict_proba(X))
    if fam == "linear_svm":
        margin = p.decision_function(X)
        return 1.0 / (1.0 + np.exp(-np.clip(margin, -500, 500)))
    if fam == "knn":
        return _pick(predict_knn_batch(p, X)[1])
    if fam == "gaussian_nb":
        return _pick(gnb_proba(p, X))
    raise ContractError(f"family {fam!r} does not produce probabilities")


def predict(model: TrainedModel, ds: Dataset) -> np.ndarray:
    _check_fingerprint(model, ds)
    return _predict_matrix(model, ds.rows)


def predict_proba(model: TrainedModel, ds: Dataset) -> np.ndarray:
    """Positive-class probability per row (class code 1)."""
    if model.spec.task != TASK_CLASSIFICATION:
        raise ContractError("probabilities are defined for classification models only")
    _check_fingerprint(model, ds)
    return _proba_matrix(model, ds.rows)


def scalar_output(model: TrainedModel):
    """Matrix-in, real-vector-out view of a model for the explainers:
    positive-class probability for classification, prediction for
    regression. Skips the fingerprint check (perturbed rows share the
    training columns by construction)."""
    if model.spec.task == TASK_CLASSIFICATION:
        return lambda X: _proba_matrix(model, X)
    return lambda X: _predict_matrix(model, X)


# ---------------------------------------------------------------------------
# Persistence: versioned JSON, exact float round-trip via repr semantics.
# ---------------------------------------------------------------------------


def _arr(a: np.ndarray) -> list:
    return np.asarray(a).tolist()


def _flat_tree_payload(t: FlatTree) -> dict:
    return {
        "feature": _arr(t.feature), "threshold": _arr(t.threshold),
        "left": _arr(t.left), "right": _arr(t.right),
        "leaf_value": _arr(t.leaf_value), "n_samples": _arr(t.n_samples),
        "task": t.task,
    }


def _flat_tree_restore(d: dict) -> FlatTree:
    leaf = np.asarray(d["leaf_value"], dtype=np.float64)
    return FlatTree(
        feature=np.asarray(d["feature"], dtype=np.int64),
        threshold=np.asarray(d["threshold"], dtype=np.float64),
        left=np.asarray(d["left"], dtype=np.int64),
        right=np.asarray(d["right"], dtype=np.int64),
        leaf_value=leaf,
        n_samples=np.asarray(d["n_samples"], dtype=np.int64),
        task=d["task"],
    )


def _linear_payload(m: LinearModel) -> dict:
    return {"weights": _arr(m.weights), "intercept": m.intercept, "family": m.family,
            "converged": bool(m.converged), "rank_deficient": bool(m.rank_deficient),
            "n_iter": m.n_iter, "objective_trace": list(m.objective_trace)}


def _linear_restore(d: dict) -> LinearModel:
    return LinearModel(weights=np.asarray(d["weights"], dtype=np.float64),
                       intercept=float(d["intercept"]), family=d["family"],
                       converged=bool(d["converged"]),
                       rank_deficient=bool(d["rank_deficient"]),
                       n_iter=int(d["n_iter"]),
                       objective_trace=tuple(d["objective_trace"]))


def _params_payload(model: TrainedModel) -> dict:
    p = model.params
    fam = model.spec.family
    if fam == "cart":
        return {"tree": _flat_tree_payload(p)}
    if fam == "random_forest":
        return {"trees": [_flat_tree_payload(t) for t in p.trees], "task": p.task,
                "n_classes": p.n_classes,
                "config": {"n_trees": p.config.n_trees, "bootstrap": p.config.bootstrap,
                           "feature_subsample": p.config.feature_subsample,
                           "seed": p.config.seed,
                           "cart": asdict(p.config.cart)}}
    if fam == "gbt":
        return {"base_score": p.base_score, "trees": [_flat_tree_payload(t) for t in p.trees],
                "train_losses": list(p.train_losses), "config": asdict(p.config)}
    if fam in ("ols", "ridge", "lasso", "logistic", "linear_svm", "linear_svr"):
        return _linear_payload(p)
    if fam == "knn":
        return {"X": _arr(p.X), "y": _arr(p.y), "k": p.k, "weighting": p.weighting,
                "task": p.task, "n_classes": p.n_classes}
    if fam == "gaussian_nb":
        return {"priors": _arr(p.priors), "means": _arr(p.means),
                "variances": _arr(p.variances), "floor": p.floor}
    raise ModelSpecError(f"unknown model family {fam!r}")


def _params_restore(fam: str, task: str, d: dict) -> object:
    if fam == "cart":
        return _flat_tree_restore(d["tree"])
    if fam == "random_forest":
        cfg = d["config"]
        return Forest(trees=tuple(_flat_tree_restore(t) for t in d["trees"]),
                      task=d["task"], n_classes=int(d["n_classes"]),
                      config=ForestConfig(n_trees=cfg["n_trees"], bootstrap=cfg["bootstrap"],
                                          feature_subsample=cfg["feature_subsample"],
                                          seed=cfg["seed"], cart=CartConfig(**cfg["cart"])))
    if fam == "gbt":
        return GbtModel(base_score=float(d["base_score"]),
                        trees=tuple(_flat_tree_restore(t) for t in d["trees"]),
                        config=GbtConfig(**d["config"]),
                        train_losses=tuple(d["train_losses"]))
    if fam in ("ols", "ridge", "lasso", "logistic", "linear_svm", "linear_svr"):
        return _linear_restore(d)
    if fam == "knn":
        return KnnModel(X=np.asarray(d["X"], dtype=np.float64),
                        y=np.asarray(d["y"],
                                     dtype=np.int64 if d["task"] == TASK_CLASSIFICATION
                                     else np.float64),
                        k=int(d["k"]), weighting=d["weighting"], task=d["task"],
                        n_classes=int(d["n_classes"]))
    if fam == "gaussian_nb":
        return GaussianNbModel(priors=np.asarray(d["priors"], dtype=np.float64),
                               means=np.asarray(d["means"], dtype=np.float64),
                               variances=np.asarray(d["variances"], dtype=np.float64),
                               floor=float(d["floor"]))
    raise ModelLoadError(f"unknown model family {fam!r}")


def save_model(model: TrainedModel) -> bytes:
    doc = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "spec": {"family": model.spec.family, "task": model.spec.task,
                 "hyperparams": model.spec.hyperparams, "seed": model.spec.seed},
        "fingerprint": model.fingerprint,
        "params": _params_payload(model),
    }
    return json.dumps(doc, sort_keys=True).encode()


def load_model(payload: bytes) -> TrainedModel:
    try:
        doc = json.loads(payload.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ModelLoadError(f"corrupt model payload: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
        raise ModelLoadError("payload is not a saved model")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelLoadError(f"unsupported model format version {doc.get('version')!r}")
    try:
        s = doc["spec"]
        spec = EstimatorSpec(family=s["family"], task=s["task"],
                             hyperparams=dict(s.get("hyperparams", {})),
                             seed=int(s.get("seed", 0)))
        params = _params_restore(spec.family, spec.task, doc["params"])
        fingerprint = dict(doc["fingerprint"])
    except (KeyError, TypeError, ValueError, ModelSpecError) as exc:
        raise ModelLoadError(f"malformed model payload: {exc}") from None
    return TrainedModel(spec=spec, params=params, fingerprint=fingerprint)
