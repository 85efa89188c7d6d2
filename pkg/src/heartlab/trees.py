"""CART decision trees: Gini for classification, variance reduction for
regression. The shared core under the forest and boosting models.

Split candidates are midpoints between consecutive distinct sorted
values. A node becomes a leaf when depth or size limits bind, when it is
pure, or when no candidate strictly decreases the impurity score. Ties
between candidates break toward the highest gain, then the lowest
feature index, then the lowest threshold. Routing sends x[feature] <=
threshold to the left child.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Dataset
from .errors import ConfigError, ContractError, FitError

TASK_CLASSIFICATION = "classification"
TASK_REGRESSION = "regression"


@dataclass(frozen=True)
class CartConfig:
    max_depth: int = 12
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    feature_subsample: object = "all"  # per-split candidate count, or "all"
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ConfigError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.min_samples_split < 2:
            raise ConfigError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.feature_subsample != "all":
            if not isinstance(self.feature_subsample, int) or self.feature_subsample < 1:
                raise ConfigError("feature_subsample must be a positive count or 'all'")


@dataclass
class TreeNode:
    """Internal node (feature_index/threshold/left/right) or leaf (value).

    Leaf value is the class-proportion vector for classification and the
    mean target for regression; n_samples is the training rows routed here.
    """

    n_samples: int
    feature_index: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: object = None
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature_index < 0


def gini(counts) -> float:
    """1 - sum(p_c^2) impurity of a count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    if (counts < 0).any():
        raise ContractError("class counts must be nonnegative")
    total = counts.sum()
    if total <= 0:
        raise ContractError("gini of an empty count vector")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _leaf(y, idx, task, n_classes) -> TreeNode:
    if task == TASK_CLASSIFICATION:
        counts = np.bincount(y[idx], minlength=n_classes)
        value = counts / idx.size
    else:
        value = float(y[idx].mean())
    return TreeNode(n_samples=int(idx.size), value=value)


def _grow(X, y, idx, depth, config, task, n_classes, rng, n_features):
    n = idx.size
    if (
        depth >= config.max_depth
        or n < config.min_samples_split
        or n < 2 * config.min_samples_leaf
        or np.all(y[idx] == y[idx[0]])
    ):
        return _leaf(y, idx, task, n_classes)

    if config.feature_subsample == "all" or int(config.feature_subsample) >= n_features:
        feats = np.arange(n_features, dtype=np.int64)
    else:
        feats = np.sort(rng.choice(n_features, size=int(config.feature_subsample),
                                   replace=False)).astype(np.int64)

    if task == TASK_CLASSIFICATION:
        f, thr, gain = _kernels.split_classification(
            X, y, idx, feats, n_classes, config.min_samples_leaf)
    else:
        f, thr, gain = _kernels.split_regression(
            X, y, idx, feats, config.min_samples_leaf)
    if f < 0 or gain <= 0.0:
        return _leaf(y, idx, task, n_classes)

    mask = X[idx, f] <= thr
    left_idx = idx[mask]
    right_idx = idx[~mask]
    node = TreeNode(n_samples=int(n), feature_index=int(f), threshold=float(thr),
                    gain=float(gain))
    node.left = _grow(X, y, left_idx, depth + 1, config, task, n_classes, rng, n_features)
    node.right = _grow(X, y, right_idx, depth + 1, config, task, n_classes, rng, n_features)
    return node


def fit_cart_matrix(X: np.ndarray, y: np.ndarray, config: CartConfig, task: str,
                    rng: np.random.Generator | None = None,
                    n_classes: int | None = None) -> TreeNode:
    """Array-level fit used by the ensembles; fit_cart wraps it for Datasets."""
    if X.shape[0] == 0:
        raise FitError("cannot fit a tree on empty data")
    if task not in (TASK_CLASSIFICATION, TASK_REGRESSION):
        raise ConfigError(f"unknown task {task!r}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if task == TASK_CLASSIFICATION:
        y = np.ascontiguousarray(y, dtype=np.int64)
        if n_classes is None:
            n_classes = int(y.max()) + 1
    else:
        y = np.ascontiguousarray(y, dtype=np.float64)
        n_classes = 0
    idx = np.arange(X.shape[0], dtype=np.int64)
    return _grow(X, y, idx, 0, config, task, n_classes, rng, X.shape[1])


def fit_cart(ds: Dataset, config: CartConfig = CartConfig(),
             task: str = TASK_CLASSIFICATION) -> TreeNode:
    if task == TASK_CLASSIFICATION:
        if ds.labels is None:
            raise FitError("classification tree requires labels")
        y = ds.labels
    else:
        if ds.targets is None:
            raise FitError("regression tree requires targets")
        y = ds.targets
    return fit_cart_matrix(ds.rows, y, config, task)


def predict_tree(tree: TreeNode, x) -> object:
    """Route one row to its leaf; classification returns the majority class
    (tie toward the lower code), regression the leaf mean."""
    node = tree
    x = np.asarray(x, dtype=np.float64)
    while not node.is_leaf:
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    if isinstance(node.value, np.ndarray):
        return int(np.argmax(node.value))
    return node.value


@dataclass(frozen=True)
class FlatTree:
    """Array form of a fitted tree for batch routing through the kernels."""

    feature: np.ndarray   # int64, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_value: np.ndarray  # (n_nodes,) regression or (n_nodes, n_classes) proportions
    n_samples: np.ndarray
    task: str

    def route(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.tree_route(self.feature, self.threshold, self.left,
                                   self.right, X)

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        """Leaf payload per row: proportion matrix or mean vector."""
        return self.leaf_value[self.route(X)]


def flatten_tree(root: TreeNode, task: str, n_classes: int = 0) -> FlatTree:
    nodes: list[TreeNode] = []

    def collect(node):
        nodes.append(node)
        if not node.is_leaf:
            collect(node.left)
            collect(node.right)

    collect(root)
    n = len(nodes)
    pos = {id(node): i for i, node in enumerate(nodes)}
    feature = np.full(n, -1, dtype=np.int64)
    threshold = np.zeros(n, dtype=np.float64)
    left = np.zeros(n, dtype=np.int64)
    right = np.zeros(n, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)
    if task == TASK_CLASSIFICATION:
        leaf_value = np.zeros((n, n_classes), dtype=np.float64)
    else:
        leaf_value = np.zeros(n, dtype=np.float64)
    for i, node in enumerate(nodes):
        count[i] = node.n_samples
        if node.is_leaf:
            leaf_value[i] = node.value
        else:
            feature[i] = node.feature_index
            threshold[i] = node.threshold
            left[i] = pos[id(node.left)]
            right[i] = pos[id(node.right)]
    return FlatTree(feature=feature, threshold=threshold, left=left, right=right,
                    leaf_value=leaf_value, n_samples=count, task=task)


def predict_batch(root: TreeNode, X: np.ndarray, task: str,
                  n_classes: int = 0) -> np.ndarray:
    """Vectorized prediction over rows; labels (classification) or means."""
    flat = flatten_tree(root, task, n_classes)
    vals = flat.predict_value(X)
    if task == TASK_CLASSIFICATION:
        return np.argmax(vals, axis=1).astype(np.int64)
    return vals


def leaf_count(root: TreeNode) -> int:
    if root.is_leaf:
        return 1
    return leaf_count(root.left) + leaf_count(root.right)


def tree_depth(root: TreeNode) -> int:
    if root.is_leaf:
        return 0
    return 1 + max(tree_depth(root.left), tree_depth(root.right))
