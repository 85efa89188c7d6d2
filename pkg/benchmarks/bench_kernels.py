#!/usr/bin/env python3
"""Benchmark the jit kernels against their pure-numpy fallbacks.

Runs every kernel pair from heartlab._kernels on a realistic workload,
checks that both backends produce identical results (they share float
accumulation order, so equality is exact, not approximate), and prints
a timing table. Use --json to also dump machine-readable results.

The jit column needs numba; without it the script still benchmarks the
numpy backend and says so.
"""

import argparse
import json
import sys
import time

import numpy as np

try:
    import heartlab._kernels as kernels
except ImportError:
    sys.stderr.write("heartlab is not installed; run pip install -e . first\n")
    raise

WARMUP = 2
RUNS = 5
SEED = 42


def _time(fn, runs: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _exact(a, b) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_exact(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return bool(np.array_equal(a, b))
    return a == b


def _case_split_classification(scale: float):
    rng = np.random.default_rng(SEED)
    n = int(20000 * scale)
    X = rng.normal(0.0, 1.0, (n, 14))
    y = (X[:, 0] + 0.5 * X[:, 3] + rng.normal(0.0, 0.5, n) > 0).astype(np.int64)
    idx = np.arange(n, dtype=np.int64)
    feats = np.arange(14, dtype=np.int64)
    args = (X, y, idx, feats, 2, 1)
    return "split_classification", kernels.split_classification_jit, \
        kernels.split_classification_numpy, args


def _case_split_regression(scale: float):
    rng = np.random.default_rng(SEED + 1)
    n = int(20000 * scale)
    X = rng.normal(0.0, 1.0, (n, 14))
    y = X @ rng.normal(0.0, 1.0, 14) + rng.normal(0.0, 0.3, n)
    idx = np.arange(n, dtype=np.int64)
    feats = np.arange(14, dtype=np.int64)
    args = (X, y, idx, feats, 1)
    return "split_regression", kernels.split_regression_jit, \
        kernels.split_regression_numpy, args


def _case_tree_route(scale: float):
    # complete binary tree, depth 10: nodes 0..1022 internal, rest leaves
    rng = np.random.default_rng(SEED + 2)
    depth = 10
    n_internal = 2 ** depth - 1
    n_nodes = 2 ** (depth + 1) - 1
    feat = np.full(n_nodes, -1, dtype=np.int64)
    feat[:n_internal] = rng.integers(0, 14, n_internal)
    thr = rng.normal(0.0, 1.0, n_nodes)
    left = 2 * np.arange(n_nodes, dtype=np.int64) + 1
    right = left + 1
    X = rng.normal(0.0, 1.0, (int(100000 * scale), 14))
    args = (feat, thr, left, right, X)
    return "tree_route", kernels.tree_route_jit, kernels.tree_route_numpy, args


def _case_knn_search(scale: float):
    rng = np.random.default_rng(SEED + 3)
    train = rng.normal(0.0, 1.0, (int(4000 * scale), 14))
    queries = rng.normal(0.0, 1.0, (int(2000 * scale), 14))
    args = (train, queries, 5)
    return "knn_search", kernels.knn_search_jit, kernels.knn_search_numpy, args


def _epoch_case(name, jit_fn, py_fn, with_eps: bool, scale: float):
    rng = np.random.default_rng(SEED + 4)
    n = int(20000 * scale)
    X = rng.normal(0.0, 1.0, (n, 14))
    if with_eps:
        y = X @ rng.normal(0.0, 1.0, 14) + rng.normal(0.0, 0.3, n)
    else:
        y = np.where(X[:, 0] > 0, 1.0, -1.0)
    order = rng.permutation(n).astype(np.int64)
    lam, t0 = 0.01, 99

    def run(fn):
        # the epoch mutates its buffers, so every call starts from zeros
        w = np.zeros(14)
        b = np.zeros(1)
        wavg = np.zeros(14)
        bavg = np.zeros(1)
        if with_eps:
            t = fn(X, y, order, w, b, wavg, bavg, lam, 0.1, t0)
        else:
            t = fn(X, y, order, w, b, wavg, bavg, lam, t0)
        return t, w, b, wavg, bavg

    return name, jit_fn, py_fn, run


def _bench_pair(name, jit_fn, other_fn, args, runs, warmup):
    if callable(args):
        call_jit = (lambda: args(jit_fn)) if jit_fn is not None else None
        call_other = lambda: args(other_fn)
    else:
        call_jit = (lambda: jit_fn(*args)) if jit_fn is not None else None
        call_other = lambda: other_fn(*args)

    t_numpy = _time(call_other, runs, warmup)
    row = {"numpy_s": t_numpy, "jit_s": None, "speedup": None, "match": None}
    if call_jit is not None:
        t_jit = _time(call_jit, runs, warmup)
        row["jit_s"] = t_jit
        row["speedup"] = t_numpy / t_jit if t_jit > 0 else float("inf")
        row["match"] = _exact(call_jit(), call_other())
    return name, row


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", type=int, default=RUNS)
    parser.add_argument("--warmup", type=int, default=WARMUP)
    parser.add_argument("--scale", type=float, default=1.0,
                        help="workload size multiplier")
    parser.add_argument("--json", metavar="PATH", help="also write results as JSON")
    args = parser.parse_args()

    cases = [
        _case_split_classification(args.scale),
        _case_split_regression(args.scale),
        _case_tree_route(args.scale),
        _case_knn_search(args.scale),
        _epoch_case("svm_epoch", kernels.svm_epoch_jit, kernels._svm_epoch_py,
                    False, args.scale),
        _epoch_case("svr_epoch", kernels.svr_epoch_jit, kernels._svr_epoch_py,
                    True, args.scale),
    ]

    have_jit = cases[0][1] is not None
    if not have_jit:
        print("numba unavailable; timing the numpy backend only", file=sys.stderr)

    results = {}
    print(f"{'kernel':<22} {'numpy':>10} {'jit':>10} {'speedup':>9}  match")
    for name, jit_fn, other_fn, payload in cases:
        name, row = _bench_pair(name, jit_fn, other_fn, payload,
                                args.runs, args.warmup)
        results[name] = row
        jit_s = f"{row['jit_s'] * 1e3:9.2f}ms" if row["jit_s"] is not None else "      n/a"
        speedup = f"{row['speedup']:8.1f}x" if row["speedup"] is not None else "     n/a"
        match = {True: "exact", False: "DIFFER", None: "n/a"}[row["match"]]
        print(f"{name:<22} {row['numpy_s'] * 1e3:8.2f}ms {jit_s} {speedup}  {match}")

    if any(r["match"] is False for r in results.values()):
        print("backend outputs differ; investigate before trusting timings",
              file=sys.stderr)
        return 1

    if args.json:
        doc = {
            "active_backend": kernels.backend_name(),
            "jit_available": have_jit,
            "scale": args.scale,
            "runs": args.runs,
            "warmup": args.warmup,
            "kernels": results,
        }
        with open(args.json, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"results written to {args.json}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
