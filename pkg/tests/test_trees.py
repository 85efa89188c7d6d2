"""CART correctness against an exhaustive split-search oracle plus the
structural invariants (strict impurity decrease, leaf sizes, depth)."""

import numpy as np
import pytest

from heartlab.errors import ConfigError, ContractError
from heartlab.trees import (
    CartConfig,
    TASK_CLASSIFICATION,
    TASK_REGRESSION,
    fit_cart,
    fit_cart_matrix,
    flatten_tree,
    gini,
    leaf_count,
    predict_batch,
    predict_tree,
    tree_depth,
)

from conftest import make_ds


# -- oracle ------------------------------------------------------------------


def _gini_of(ys, n_classes):
    n = len(ys)
    if n == 0:
        return 0.0
    out = 1.0
    for c in range(n_classes):
        out -= (sum(1 for v in ys if v == c) / n) ** 2
    return out


def _var_of(ys):
    n = len(ys)
    if n == 0:
        return 0.0
    m = sum(ys) / n
    return sum((v - m) ** 2 for v in ys) / n


def brute_best_split(X, y, n_classes=None, min_leaf=1):
    """Exhaustive midpoint search; ties resolved to the lowest feature
    then the lowest threshold, mirroring the documented contract."""
    n, m = X.shape
    if n_classes is None:
        parent = _var_of(list(y))
        impurity = lambda ys: _var_of(ys)
    else:
        parent = _gini_of(list(y), n_classes)
        impurity = lambda ys: _gini_of(ys, n_classes)
    best = (-1, 0.0, 0.0)
    for f in range(m):
        vals = sorted(set(X[:, f]))
        for a, b in zip(vals, vals[1:]):
            thr = (a + b) / 2.0
            left = [y[i] for i in range(n) if X[i, f] <= thr]
            right = [y[i] for i in range(n) if X[i, f] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            gain = parent - (len(left) * impurity(left)
                             + len(right) * impurity(right)) / n
            if gain > best[2]:
                best = (f, thr, gain)
    return best


@pytest.mark.parametrize("seed", range(10))
def test_root_split_matches_exhaustive_search_classification(seed):
    g = np.random.default_rng(seed)
    n = 50
    X = np.round(g.normal(size=(n, 4)), 1)
    y = g.integers(0, 3, size=n).astype(np.int64)
    ds_cfg = CartConfig(max_depth=1)
    tree = fit_cart_matrix(np.ascontiguousarray(X), y, ds_cfg,
                           TASK_CLASSIFICATION, n_classes=3)
    f, thr, gain = brute_best_split(X, y, n_classes=3)
    if f < 0:
        assert tree.is_leaf
    else:
        assert tree.feature_index == f
        assert tree.threshold == thr
        assert abs(tree.gain - gain) < 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_root_split_matches_exhaustive_search_regression(seed):
    g = np.random.default_rng(seed + 100)
    n = 40
    X = np.round(g.normal(size=(n, 3)), 1)
    y = g.normal(size=n)
    tree = fit_cart_matrix(np.ascontiguousarray(X), y, CartConfig(max_depth=1),
                           TASK_REGRESSION)
    f, thr, gain = brute_best_split(X, y, n_classes=None)
    assert tree.feature_index == f
    assert tree.threshold == thr
    assert abs(tree.gain - gain) < 1e-10


def test_min_leaf_respected_in_split_choice(rng):
    X = np.ascontiguousarray(rng.normal(size=(30, 2)))
    y = rng.integers(0, 2, size=30).astype(np.int64)
    tree = fit_cart_matrix(X, y, CartConfig(max_depth=1, min_samples_leaf=10),
                           TASK_CLASSIFICATION, n_classes=2)
    f, thr, gain = brute_best_split(X, y, n_classes=2, min_leaf=10)
    if f < 0:
        assert tree.is_leaf
    else:
        assert (tree.feature_index, tree.threshold) == (f, thr)


# -- pinned values -----------------------------------------------------------


def test_gini_known_values():
    assert gini(np.array([1, 2, 3])) == pytest.approx(11.0 / 18.0, abs=1e-15)
    assert gini(np.array([10, 0])) == 0.0
    assert gini(np.array([5, 5])) == 0.5
    with pytest.raises(ContractError):
        gini(np.array([-1, 2]))


def test_two_point_split_at_midpoint():
    X = np.ascontiguousarray([[0.0], [1.0]])
    y = np.array([0, 1], dtype=np.int64)
    tree = fit_cart_matrix(X, y, CartConfig(), TASK_CLASSIFICATION, n_classes=2)
    assert tree.feature_index == 0
    assert tree.threshold == 0.5
    assert predict_tree(tree, np.array([0.2])) == 0
    assert predict_tree(tree, np.array([0.8])) == 1
    assert predict_tree(tree, np.array([0.5])) == 0  # boundary goes left


def test_and_function_learned_exactly():
    # greedy CART nails y = (x0 > 0) and (x1 > 0) at depth 2
    pts = []
    ys = []
    for x0 in (-1.0, 1.0):
        for x1 in (-1.0, 1.0):
            for _ in range(5):
                pts.append([x0, x1])
                ys.append(1 if (x0 > 0 and x1 > 0) else 0)
    X = np.ascontiguousarray(pts)
    y = np.array(ys, dtype=np.int64)
    tree = fit_cart_matrix(X, y, CartConfig(max_depth=2), TASK_CLASSIFICATION,
                           n_classes=2)
    pred = [predict_tree(tree, X[i]) for i in range(len(ys))]
    assert pred == ys
    assert tree_depth(tree) == 2


# -- invariants --------------------------------------------------------------


def _walk(node, visit):
    visit(node)
    if not node.is_leaf:
        _walk(node.left, visit)
        _walk(node.right, visit)


def _grow_tree(seed, task, max_depth=6, min_leaf=2):
    g = np.random.default_rng(seed)
    X = np.ascontiguousarray(np.round(g.normal(size=(120, 5)), 1))
    if task == TASK_CLASSIFICATION:
        y = (X[:, 0] + X[:, 1] ** 2 + 0.3 * g.normal(size=120) > 0.5).astype(np.int64)
        tree = fit_cart_matrix(X, y, CartConfig(max_depth=max_depth,
                                                min_samples_leaf=min_leaf),
                               task, n_classes=2)
    else:
        y = X[:, 0] * 2 + np.abs(X[:, 1]) + 0.1 * g.normal(size=120)
        tree = fit_cart_matrix(X, y, CartConfig(max_depth=max_depth,
                                                min_samples_leaf=min_leaf), task)
    return tree, X, y


@pytest.mark.parametrize("task", [TASK_CLASSIFICATION, TASK_REGRESSION])
def test_structural_invariants(task):
    tree, X, y = _grow_tree(42, task)
    seen = []

    def visit(n):
        seen.append(n)
        if not n.is_leaf:
            assert n.gain > 0.0  # strict impurity decrease at every split
            assert n.left.n_samples + n.right.n_samples == n.n_samples
        else:
            assert n.n_samples >= 2

    _walk(tree, visit)
    assert tree_depth(tree) <= 6
    assert leaf_count(tree) == sum(1 for n in seen if n.is_leaf)
    assert tree.n_samples == 120


def test_pure_node_becomes_leaf():
    X = np.ascontiguousarray(np.random.default_rng(0).normal(size=(20, 2)))
    y = np.zeros(20, dtype=np.int64)
    tree = fit_cart_matrix(X, y, CartConfig(), TASK_CLASSIFICATION, n_classes=2)
    assert tree.is_leaf


def test_monotone_transform_invariance():
    tree, X, y = _grow_tree(7, TASK_CLASSIFICATION)
    Xt = np.ascontiguousarray(X**3)  # strictly increasing map
    tree_t = fit_cart_matrix(Xt, y, CartConfig(max_depth=6, min_samples_leaf=2),
                             TASK_CLASSIFICATION, n_classes=2)
    for i in range(X.shape[0]):
        assert predict_tree(tree, X[i]) == predict_tree(tree_t, Xt[i])


def test_affine_scaling_invariance():
    tree, X, y = _grow_tree(8, TASK_REGRESSION)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    Xs = np.ascontiguousarray((X - mu) / sd)
    tree_s = fit_cart_matrix(Xs, y, CartConfig(max_depth=6, min_samples_leaf=2),
                             TASK_REGRESSION)
    for i in range(X.shape[0]):
        a = predict_tree(tree, X[i])
        b = predict_tree(tree_s, Xs[i])
        assert abs(a - b) < 1e-9


# -- flattened form ----------------------------------------------------------


@pytest.mark.parametrize("task", [TASK_CLASSIFICATION, TASK_REGRESSION])
def test_flat_tree_equals_recursive(task):
    tree, X, y = _grow_tree(9, task)
    n_classes = 2 if task == TASK_CLASSIFICATION else 0
    flat = flatten_tree(tree, task, n_classes=n_classes)
    g = np.random.default_rng(1)
    Q = np.ascontiguousarray(g.normal(size=(300, 5)))
    got = predict_batch(tree, Q, task, n_classes=n_classes)
    want = np.array([predict_tree(tree, Q[i]) for i in range(300)])
    if task == TASK_CLASSIFICATION:
        assert np.array_equal(got.astype(np.int64), want.astype(np.int64))
        # flat leaf values are the class-proportion vectors
        vals = flat.predict_value(Q)
        assert vals.shape == (300, 2)
        assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-12)
        assert np.array_equal(np.argmax(vals, axis=1), got)
    else:
        vals = flat.predict_value(Q)
        assert np.array_equal(vals, got)
        assert np.allclose(got, want, atol=0)
    # routed leaves are real leaves
    slots = flat.route(Q)
    assert np.all(flat.feature[slots] == -1)


# -- dataset front end and config --------------------------------------------


def test_fit_cart_from_dataset(two_blob_ds):
    tree = fit_cart(two_blob_ds, CartConfig(max_depth=4), TASK_CLASSIFICATION)
    right = sum(
        predict_tree(tree, two_blob_ds.rows[i]) == two_blob_ds.labels[i]
        for i in range(two_blob_ds.n_rows))
    assert right >= 118  # blobs are separable


def test_feature_subsample_deterministic(two_blob_ds):
    cfg = CartConfig(max_depth=4, feature_subsample=1, seed=5)
    t1 = fit_cart(two_blob_ds, cfg, TASK_CLASSIFICATION)
    t2 = fit_cart(two_blob_ds, cfg, TASK_CLASSIFICATION)
    q = two_blob_ds.rows
    assert all(predict_tree(t1, q[i]) == predict_tree(t2, q[i])
               for i in range(len(q)))


def test_cart_config_validation():
    with pytest.raises(ConfigError):
        CartConfig(max_depth=0)
    with pytest.raises(ConfigError):
        CartConfig(min_samples_split=1)
    with pytest.raises(ConfigError):
        CartConfig(min_samples_leaf=0)
    with pytest.raises(ConfigError):
        CartConfig(feature_subsample=0)
    with pytest.raises(ConfigError):
        CartConfig(feature_subsample="half")


def test_n_classes_inferred_from_labels(rng):
    X = np.ascontiguousarray(rng.normal(size=(40, 2)))
    y = (X[:, 0] > 0).astype(np.int64)
    implicit = fit_cart_matrix(X, y, CartConfig(max_depth=3), TASK_CLASSIFICATION)
    explicit = fit_cart_matrix(X, y, CartConfig(max_depth=3), TASK_CLASSIFICATION,
                               n_classes=2)
    assert all(predict_tree(implicit, X[i]) == predict_tree(explicit, X[i])
               for i in range(40))
