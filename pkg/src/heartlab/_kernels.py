"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a loop implementation compiled with numba's
@njit, and a vectorized pure-numpy fallback. The active backend is chosen
at import time: numba when importable, unless HEARTLAB_NO_NUMBA=1 (or
"true"/"yes") is set in the environment. Both backends are written so that
floating-point accumulation happens in the same order, which makes their
outputs bit-identical; tests and benchmarks/bench_kernels.py exercise both.

Sorting inside the split kernels is stable (mergesort) on purpose: prefix
sums over tied feature values must visit rows in the same order on both
backends or tie-breaking between equal-gain splits would diverge.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    _HAVE_NUMBA = False

_FLAG = os.environ.get("HEARTLAB_NO_NUMBA", "").strip().lower()
NUMBA_ENABLED = _HAVE_NUMBA and _FLAG not in ("1", "true", "yes")


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# CART split search
#
# Scores use the sum-of-squares identity: for a node with per-class counts
# c_k (classification) or target sum s (regression), the impurity decrease of
# a split is ((ssq_left/n_left + ssq_right/n_right) - ssq_parent/n) / n up to
# the shared constant, where ssq is sum(c_k^2) resp. s^2. Candidates are
# midpoints between consecutive distinct sorted values; ties broken by
# highest gain, then lowest feature index, then lowest threshold (features
# must be passed in ascending order).
# ---------------------------------------------------------------------------


def _split_classification_py(X, y, idx, feats, n_classes, min_leaf):
    n = idx.shape[0]
    parent = np.zeros(n_classes, np.int64)
    for i in range(n):
        parent[y[idx[i]]] += 1
    psq = 0.0
    for c in range(n_classes):
        psq += parent[c] * parent[c]
    parent_score = psq / n
    best_gain = 0.0
    best_feat = -1
    best_thr = 0.0
    vals = np.empty(n, np.float64)
    left = np.zeros(n_classes, np.int64)
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for i in range(n):
            vals[i] = X[idx[i], f]
        order = np.argsort(vals, kind="mergesort")
        for c in range(n_classes):
            left[c] = 0
        ssq_l = 0.0
        for pos in range(n - 1):
            j = order[pos]
            c = y[idx[j]]
            ssq_l += 2.0 * left[c] + 1.0
            left[c] += 1
            v = vals[j]
            v_next = vals[order[pos + 1]]
            if v == v_next:
                continue
            nl = pos + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            ssq_r = 0.0
            for c2 in range(n_classes):
                d = parent[c2] - left[c2]
                ssq_r += d * d
            gain = (ssq_l / nl + ssq_r / nr - parent_score) / n
            if gain > best_gain:
                best_gain = gain
                best_feat = f
                best_thr = 0.5 * (v + v_next)
    return best_feat, best_thr, best_gain


def split_classification_numpy(X, y, idx, feats, n_classes, min_leaf):
    n = idx.shape[0]
    yv = y[idx]
    parent = np.bincount(yv, minlength=n_classes).astype(np.int64)
    psq = float((parent * parent).sum())
    parent_score = psq / n
    best_gain = 0.0
    best_feat = -1
    best_thr = 0.0
    if n < 2:
        return best_feat, best_thr, best_gain
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    for f in feats:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            continue
        ys = yv[order]
        ssq_l = np.zeros(n - 1, np.float64)
        ssq_r = np.zeros(n - 1, np.float64)
        for c in range(n_classes):
            lc = np.cumsum(ys[:-1] == c)
            ssq_l += (lc * lc).astype(np.float64)
            rc = parent[c] - lc
            ssq_r += (rc * rc).astype(np.float64)
        gains = (ssq_l / nl + ssq_r / nr - parent_score) / n
        valid = vs[:-1] != vs[1:]
        if min_leaf > 1:
            valid &= (nl >= min_leaf) & (nr >= min_leaf)
        gains = np.where(valid, gains, -np.inf)
        pos = int(np.argmax(gains))
        if gains[pos] > best_gain:
            best_gain = float(gains[pos])
            best_feat = int(f)
            best_thr = 0.5 * (vs[pos] + vs[pos + 1])
    return best_feat, best_thr, best_gain


def _split_regression_py(X, y, idx, feats, min_leaf):
    n = idx.shape[0]
    total = 0.0
    for i in range(n):
        total += y[idx[i]]
    parent_score = total * total / n
    best_gain = 0.0
    best_feat = -1
    best_thr = 0.0
    vals = np.empty(n, np.float64)
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for i in range(n):
            vals[i] = X[idx[i], f]
        order = np.argsort(vals, kind="mergesort")
        sl = 0.0
        for pos in range(n - 1):
            j = order[pos]
            sl += y[idx[j]]
            v = vals[j]
            v_next = vals[order[pos + 1]]
            if v == v_next:
                continue
            nl = pos + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sr = total - sl
            gain = (sl * sl / nl + sr * sr / nr - parent_score) / n
            if gain > best_gain:
                best_gain = gain
                best_feat = f
                best_thr = 0.5 * (v + v_next)
    return best_feat, best_thr, best_gain


def split_regression_numpy(X, y, idx, feats, min_leaf):
    n = idx.shape[0]
    yv = y[idx]
    if n < 2:
        return -1, 0.0, 0.0
    cs_all = np.cumsum(yv)
    total = float(cs_all[-1])
    parent_score = total * total / n
    best_gain = 0.0
    best_feat = -1
    best_thr = 0.0
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    for f in feats:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            continue
        sl = np.cumsum(yv[order])[:-1]
        sr = total - sl
        gains = (sl * sl / nl + sr * sr / nr - parent_score) / n
        valid = vs[:-1] != vs[1:]
        if min_leaf > 1:
            valid &= (nl >= min_leaf) & (nr >= min_leaf)
        gains = np.where(valid, gains, -np.inf)
        pos = int(np.argmax(gains))
        if gains[pos] > best_gain:
            best_gain = float(gains[pos])
            best_feat = int(f)
            best_thr = 0.5 * (vs[pos] + vs[pos + 1])
    return best_feat, best_thr, best_gain


# ---------------------------------------------------------------------------
# Tree routing: follow a flattened node table root-to-leaf for each row.
# feat[node] < 0 marks a leaf. x[feat] <= thr routes left.
# ---------------------------------------------------------------------------


def _tree_route_py(feat, thr, left, right, X):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def tree_route_numpy(feat, thr, left, right, X):
    n = X.shape[0]
    node = np.zeros(n, np.int64)
    active = np.nonzero(feat[node] >= 0)[0]
    while active.size:
        nd = node[active]
        go_left = X[active, feat[nd]] <= thr[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = active[feat[node[active]] >= 0]
    return node


# ---------------------------------------------------------------------------
# Brute-force k-nearest-neighbour search, squared Euclidean distance,
# ties broken by ascending training-row index.
# ---------------------------------------------------------------------------


def _knn_search_py(train, queries, k):
    nt = train.shape[0]
    nq = queries.shape[0]
    m = train.shape[1]
    out_idx = np.empty((nq, k), np.int64)
    out_d = np.empty((nq, k), np.float64)
    for q in range(nq):
        bd = np.full(k, np.inf, np.float64)
        bi = np.full(k, nt, np.int64)
        for t in range(nt):
            d = 0.0
            for j in range(m):
                diff = queries[q, j] - train[t, j]
                d += diff * diff
            if d < bd[k - 1] or (d == bd[k - 1] and t < bi[k - 1]):
                pos = k - 1
                while pos > 0 and (d < bd[pos - 1] or (d == bd[pos - 1] and t < bi[pos - 1])):
                    bd[pos] = bd[pos - 1]
                    bi[pos] = bi[pos - 1]
                    pos -= 1
                bd[pos] = d
                bi[pos] = t
        out_idx[q] = bi
        out_d[q] = bd
    return out_idx, out_d


def knn_search_numpy(train, queries, k):
    nt = train.shape[0]
    nq = queries.shape[0]
    out_idx = np.empty((nq, k), np.int64)
    out_d = np.empty((nq, k), np.float64)
    # chunk queries so the distance block stays ~32MB
    chunk = max(1, int(4_000_000 // max(nt, 1)))
    for start in range(0, nq, chunk):
        stop = min(start + chunk, nq)
        block = queries[start:stop]
        d = np.zeros((block.shape[0], nt), np.float64)
        for j in range(train.shape[1]):
            diff = block[:, j, None] - train[None, :, j]
            d += diff * diff
        # stable sort on distance preserves ascending index among ties
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        out_idx[start:stop] = order
        out_d[start:stop] = np.take_along_axis(d, order, axis=1)
    return out_idx, out_d


# ---------------------------------------------------------------------------
# Pegasos-style primal subgradient epochs for the linear SVM / SVR.
# Mutates w (and the running averages) in place; returns the step counter.
# The numpy fallback is the uncompiled function itself: the loop is only hot
# on large epoch budgets, and sharing the source guarantees identical floats.
# ---------------------------------------------------------------------------


def _svm_epoch_py(X, y, order, w, b, wavg, bavg, lam, t0):
    n, m = X.shape
    t = t0
    for s in range(n):
        i = order[s]
        t += 1
        eta = 1.0 / (lam * t)
        margin = b[0]
        for j in range(m):
            margin += w[j] * X[i, j]
        scale = 1.0 - eta * lam
        if y[i] * margin < 1.0:
            for j in range(m):
                w[j] = scale * w[j] + eta * y[i] * X[i, j]
            b[0] = b[0] + eta * y[i]
        else:
            for j in range(m):
                w[j] = scale * w[j]
        for j in range(m):
            wavg[j] += (w[j] - wavg[j]) / t
        bavg[0] += (b[0] - bavg[0]) / t
    return t


def _svr_epoch_py(X, y, order, w, b, wavg, bavg, lam, eps, t0):
    n, m = X.shape
    t = t0
    for s in range(n):
        i = order[s]
        t += 1
        eta = 1.0 / (lam * t)
        pred = b[0]
        for j in range(m):
            pred += w[j] * X[i, j]
        resid = y[i] - pred
        scale = 1.0 - eta * lam
        if resid > eps:
            g = 1.0
        elif resid < -eps:
            g = -1.0
        else:
            g = 0.0
        if g != 0.0:
            for j in range(m):
                w[j] = scale * w[j] + eta * g * X[i, j]
            b[0] = b[0] + eta * g
        else:
            for j in range(m):
                w[j] = scale * w[j]
        for j in range(m):
            wavg[j] += (w[j] - wavg[j]) / t
        bavg[0] += (b[0] - bavg[0]) / t
    return t


# ---------------------------------------------------------------------------
# Backend wiring
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:
    _jit = njit(cache=True, nogil=True)
    split_classification_jit = _jit(_split_classification_py)
    split_regression_jit = _jit(_split_regression_py)
    tree_route_jit = _jit(_tree_route_py)
    knn_search_jit = _jit(_knn_search_py)
    svm_epoch_jit = _jit(_svm_epoch_py)
    svr_epoch_jit = _jit(_svr_epoch_py)
else:  # pragma: no cover
    split_classification_jit = None
    split_regression_jit = None
    tree_route_jit = None
    knn_search_jit = None
    svm_epoch_jit = None
    svr_epoch_jit = None

if NUMBA_ENABLED:
    split_classification = split_classification_jit
    split_regression = split_regression_jit
    tree_route = tree_route_jit
    knn_search = knn_search_jit
    svm_epoch = svm_epoch_jit
    svr_epoch = svr_epoch_jit
else:
    split_classification = split_classification_numpy
    split_regression = split_regression_numpy
    tree_route = tree_route_numpy
    knn_search = knn_search_numpy
    svm_epoch = _svm_epoch_py
    svr_epoch = _svr_epoch_py
