"""Model-agnostic attributions: exact and sampled Shapley values with an
interventional coalition value, and LIME local linear surrogates.

The coalition value v(S) is the mean model output over a background set
with the explained row's values spliced in on S. Exact mode enumerates
all 2^M subsets with memoized values; sampled mode averages marginal
contributions over antithetic permutation pairs and distributes the
(tiny) efficiency residual uniformly. Models are passed either as a
TrainedModel or as any callable mapping a row matrix to a real vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ExplainError
from .models import TrainedModel, scalar_output


@dataclass(frozen=True)
class ShapConfig:
    background_size: int = 32
    mode: str = "exact"
    n_permutations: int = 2000
    exact_feature_cap: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ConfigError(f"shap mode must be exact or sampled, got {self.mode!r}")
        if self.n_permutations < 1:
            raise ConfigError("n_permutations must be >= 1")


@dataclass(frozen=True)
class Attribution:
    phi: np.ndarray
    base_value: float
    fx: float
    mode: str
    standard_errors: np.ndarray | None = None


def _as_fn(model):
    if isinstance(model, TrainedModel):
        return scalar_output(model)
    if callable(model):
        return lambda X: np.asarray(model(np.asarray(X, dtype=np.float64)),
                                    dtype=np.float64)
    raise ConfigError("model must be a TrainedModel or a callable")


def sample_background(rows: np.ndarray, size: int = 32, seed: int = 0) -> np.ndarray:
    """Seeded background draw from a training matrix (without replacement
    when possible)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 0:
        raise ConfigError("cannot sample a background from zero rows")
    rng = np.random.default_rng(seed)
    if rows.shape[0] <= size:
        return rows.copy()
    take = np.sort(rng.choice(rows.shape[0], size=size, replace=False))
    return rows[take]


def coalition_value(model, x, S, background) -> float:
    """Mean model output over background rows with x's values on S."""
    fn = _as_fn(model)
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ConfigError("background must be a non-empty row matrix")
    x = np.asarray(x, dtype=np.float64)
    z = background.copy()
    S = np.asarray(list(S), dtype=np.int64)
    if S.size:
        z[:, S] = x[S]
    return float(np.mean(fn(z)))


def _coalition_table(fn, x, background, masks: np.ndarray, M: int) -> np.ndarray:
    """v(mask) for every bitmask in one batched model call."""
    bg = background.shape[0]
    blocks = np.empty((masks.size, bg, M), dtype=np.float64)
    for i, mask in enumerate(masks):
        z = background.copy()
        for j in range(M):
            if mask >> j & 1:
                z[:, j] = x[j]
        blocks[i] = z
    flat = fn(blocks.reshape(masks.size * bg, M))
    return flat.reshape(masks.size, bg).mean(axis=1)


def shap_exact(model, x, background, config: ShapConfig = ShapConfig()) -> Attribution:
    """Full 2^M subset enumeration of phi_j = sum_S w(|S|) (v(S+j) - v(S))
    with w(s) = s!(M-1-s)!/M!."""
    fn = _as_fn(model)
    x = np.asarray(x, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ConfigError("background must be a non-empty row matrix")
    M = x.size
    if M > config.exact_feature_cap:
        raise ConfigError(
            f"{M} features exceed the exact cap {config.exact_feature_cap}; "
            "use sampled mode or raise exact_feature_cap")

    masks = np.arange(1 << M, dtype=np.int64)
    v = _coalition_table(fn, x, background, masks, M)

    fact = [math.factorial(i) for i in range(M + 1)]
    wgt = np.array([fact[s] * fact[M - 1 - s] / fact[M] for s in range(M)])
    sizes = np.array([int(m).bit_count() for m in masks])

    phi = np.zeros(M)
    for j in range(M):
        bit = 1 << j
        without = masks[(masks & bit) == 0]
        phi[j] = float(np.sum(wgt[sizes[without]] * (v[without | bit] - v[without])))
    return Attribution(phi=phi, base_value=float(v[0]), fx=float(v[-1]), mode="exact")


def shap_sampled(model, x, background, config: ShapConfig = ShapConfig(mode="sampled")) -> Attribution:
    """Antithetic permutation sampling of marginal contributions; the
    efficiency residual is spread uniformly and per-feature standard
    errors are reported."""
    fn = _as_fn(model)
    x = np.asarray(x, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ConfigError("background must be a non-empty row matrix")
    M = x.size
    bg = background.shape[0]
    n_perm = config.n_permutations

    perms = []
    pair = 0
    while len(perms) < n_perm:
        rng = np.random.default_rng([config.seed, pair])
        p = rng.permutation(M)
        perms.append(p)
        if len(perms) < n_perm:
            perms.append(p[::-1].copy())
        pair += 1

    samples = np.empty((n_perm, M))
    base = None
    fx = None
    for pi, perm in enumerate(perms):
        blocks = np.empty((M + 1, bg, M), dtype=np.float64)
        z = background.copy()
        blocks[0] = z
        for step, j in enumerate(perm):
            z = z.copy()
            z[:, j] = x[j]
            blocks[step + 1] = z
        means = fn(blocks.reshape((M + 1) * bg, M)).reshape(M + 1, bg).mean(axis=1)
        if base is None:
            base = float(means[0])
            fx = float(means[-1])
        samples[pi, perm] = np.diff(means)

    phi = samples.mean(axis=0)
    if n_perm > 1:
        se = samples.std(axis=0, ddof=1) / math.sqrt(n_perm)
    else:
        se = np.zeros(M)
    residual = (fx - base) - float(phi.sum())
    phi = phi + residual / M
    return Attribution(phi=phi, base_value=base, fx=fx, mode="sampled",
                       standard_errors=se)


def shap_values(model, x, background, config: ShapConfig = ShapConfig()) -> Attribution:
    """Mode dispatch used by the runner."""
    if config.mode == "exact":
        return shap_exact(model, x, background, config)
    return shap_sampled(model, x, background, config)


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    sigma: float | None = None   # kernel width; None = 0.75 * sqrt(M)
    n_features: int = 10         # surrogate size K
    ridge: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 100:
            raise ConfigError(f"lime needs n_samples >= 100, got {self.n_samples}")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigError(f"kernel width must be positive, got {self.sigma}")


@dataclass(frozen=True)
class LimeExplanation:
    feature_indices: np.ndarray  # selected features, ranked
    coefficients: np.ndarray     # surrogate weights for those features
    intercept: float
    fidelity_r2: float
    sigma: float
    fx: float


def lime_explain(model, x, config: LimeConfig = LimeConfig()) -> LimeExplanation:
    """Perturb around x with unit Gaussians (standardized feature space),
    weight by exp(-d^2/sigma^2), select the K features with largest
    absolute weighted correlation to the model output, and fit a weighted
    ridge surrogate. Fidelity is the weighted R^2 of the surrogate."""
    fn = _as_fn(model)
    x = np.asarray(x, dtype=np.float64)
    M = x.size
    sigma = config.sigma if config.sigma is not None else 0.75 * math.sqrt(M)

    rng = np.random.default_rng(config.seed)
    Z = x + rng.standard_normal((config.n_samples, M))
    d2 = np.sum((Z - x) ** 2, axis=1)
    # tiny sigma drives d2/sigma^2 to inf; exp then underflows to the zero
    # weights the error check below reports
    with np.errstate(over="ignore", divide="ignore"):
        w = np.exp(-d2 / (sigma * sigma))
    wsum = float(w.sum())
    if not np.isfinite(wsum) or wsum <= 0.0 or float(w.max()) < 1e-300:
        raise ExplainError("all perturbation weights vanished; increase the kernel width")

    y = fn(Z)
    fx = float(fn(x.reshape(1, -1))[0])

    zm = (w @ Z) / wsum
    ym = float(w @ y) / wsum
    Zc = Z - zm
    yc = y - ym
    cov = (w * yc) @ Zc / wsum
    var_z = (w @ (Zc * Zc)) / wsum
    var_y = float(w @ (yc * yc)) / wsum
    denom = np.sqrt(var_z * var_y)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, cov / denom, 0.0)

    K = min(config.n_features, M)
    selected = np.argsort(-np.abs(corr), kind="stable")[:K]
    selected = np.sort(selected)

    Xs = Zc[:, selected]
    A = (Xs * w[:, None]).T @ Xs + config.ridge * np.eye(K)
    b = (Xs * w[:, None]).T @ yc
    coef = np.linalg.solve(A, b)
    intercept = ym - float(zm[selected] @ coef)

    pred = Xs @ coef + ym
    rss = float(w @ ((y - pred) ** 2))
    tss = float(w @ (yc * yc))
    if tss <= 1e-300:
        fidelity = 1.0
    else:
        fidelity = max(0.0, min(1.0, 1.0 - rss / tss))

    return LimeExplanation(feature_indices=selected, coefficients=coef,
                           intercept=intercept, fidelity_r2=fidelity,
                           sigma=sigma, fx=fx)
