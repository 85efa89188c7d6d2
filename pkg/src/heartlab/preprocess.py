"""Fit-on-train preprocessing: encode, impute, outlier-filter, scale.

Statistics come from the training partition only. The fixed order is
label encoding, then median/mode imputation, then interquartile-range
row filtering (train rows only), then z-score scaling with population
(divide-by-n) standard deviations. Quantiles use linear interpolation
between order statistics. ``transform`` never drops rows; the filter is
applied to training data via ``transform_filtered`` or ``iqr_filter``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import (
    Dataset,
    KIND_CONTINUOUS,
)
from .errors import ConfigError, FitError, TransformError


@dataclass(frozen=True)
class PreprocessConfig:
    # iqr_columns None means every continuous feature column; [] disables
    iqr_columns: list | None = None
    iqr_factor: float = 1.5
    scale: bool = True


@dataclass(frozen=True)
class IqrBounds:
    column: str
    q1: float
    q3: float
    factor: float = 1.5

    def __post_init__(self):
        if not self.q1 <= self.q3:
            raise FitError(f"column {self.column!r}: q1 {self.q1} > q3 {self.q3}")

    @property
    def lower(self) -> float:
        return self.q1 - self.factor * (self.q3 - self.q1)

    @property
    def upper(self) -> float:
        return self.q3 + self.factor * (self.q3 - self.q1)


@dataclass(frozen=True)
class PreprocessorState:
    """Frozen statistics fitted on one training partition."""

    feature_names: list
    label_maps: dict          # column -> {text: code}, codes lexicographic
    medians: dict             # continuous column -> median of non-missing train cells
    modes: dict               # categorical/binary column -> most frequent code (tie: smallest)
    iqr_bounds: list          # IqrBounds, raw units, in config order
    means: np.ndarray         # per feature column, after imputation + filtering
    sds: np.ndarray           # population sd, 1.0 placeholder where excluded
    scaled: np.ndarray        # bool per column; constant columns are False
    constant_columns: list = field(default_factory=list)
    scale_enabled: bool = True


def _mode(values: np.ndarray) -> float:
    vals, counts = np.unique(values, return_counts=True)
    return float(vals[np.argmax(counts)])  # unique is sorted, argmax takes first


def fit_preprocessor(train: Dataset, config: PreprocessConfig = PreprocessConfig()) -> PreprocessorState:
    if train.n_rows == 0:
        raise FitError("cannot fit preprocessor on an empty training set")
    feat_cols = train.feature_columns()

    label_maps: dict = {}
    for name, cells in train.text_columns.items():
        seen = sorted({c for c in cells if c is not None})
        if not seen:
            raise FitError(f"column {name!r} has no observed values")
        label_maps[name] = {text: code for code, text in enumerate(seen)}

    encoded = _encode(label_maps, train)

    medians: dict = {}
    modes: dict = {}
    for j, col in enumerate(feat_cols):
        vals = encoded[:, j]
        present = vals[~np.isnan(vals)]
        if present.size == 0:
            raise FitError(f"column {col.name!r} has no observed values")
        if col.kind == KIND_CONTINUOUS:
            medians[col.name] = float(np.median(present))
        else:
            modes[col.name] = _mode(present)

    imputed = _impute(medians, modes, feat_cols, encoded)

    iqr_names = config.iqr_columns
    if iqr_names is None:
        iqr_names = [c.name for c in feat_cols if c.kind == KIND_CONTINUOUS]
    work = train.with_rows(imputed, labels=train.labels, targets=train.targets)
    filtered, bounds = iqr_filter(work, iqr_names, config.iqr_factor)

    means = filtered.rows.mean(axis=0)
    sds = np.sqrt(np.mean((filtered.rows - means) ** 2, axis=0))
    # constant detection by spread: the mean of n identical floats can carry
    # rounding noise, which would leave sd at ~1e-16 instead of exactly 0
    spread = filtered.rows.max(axis=0) - filtered.rows.min(axis=0)
    scaled = (sds > 0.0) & (spread > 0.0)
    constant = [c.name for c, ok in zip(feat_cols, scaled) if not ok]
    sds = np.where(scaled, sds, 1.0)

    return PreprocessorState(
        feature_names=[c.name for c in feat_cols],
        label_maps=label_maps,
        medians=medians,
        modes=modes,
        iqr_bounds=bounds,
        means=means,
        sds=sds,
        scaled=scaled,
        constant_columns=constant,
        scale_enabled=config.scale,
    )


def _encode(label_maps: dict, ds: Dataset) -> np.ndarray:
    """Resolve text columns to integer codes; returns a fresh matrix."""
    out = np.array(ds.rows, dtype=np.float64)
    feat_names = ds.feature_names()
    for name, cells in ds.text_columns.items():
        if name not in label_maps:
            raise TransformError(f"column {name!r} was numeric at fit time but has text now")
        mapping = label_maps[name]
        j = feat_names.index(name)
        for i, text in enumerate(cells):
            if text is None:
                out[i, j] = np.nan
            elif text in mapping:
                out[i, j] = mapping[text]
            else:
                raise TransformError(f"column {name!r}: unseen category {text!r}")
    for name, mapping in label_maps.items():
        if name in ds.text_columns:
            continue
        j = feat_names.index(name)
        col = out[:, j]
        ok = np.isnan(col) | (np.isin(col, list(mapping.values())))
        if not ok.all():
            bad = col[~ok][0]
            raise TransformError(f"column {name!r}: unseen category {bad!r}")
    return out


def _impute(medians: dict, modes: dict, feat_cols, encoded: np.ndarray) -> np.ndarray:
    out = encoded
    for j, col in enumerate(feat_cols):
        mask = np.isnan(out[:, j])
        if not mask.any():
            continue
        fill = medians.get(col.name) if col.kind == KIND_CONTINUOUS else modes.get(col.name)
        if fill is None:
            raise TransformError(f"no imputation statistic for column {col.name!r}")
        out[mask, j] = fill
    return out


def transform(state: PreprocessorState, ds: Dataset) -> Dataset:
    """Encode, impute and scale; never removes rows."""
    if ds.feature_names() != state.feature_names:
        raise TransformError("dataset schema does not match fitted state")
    encoded = _encode(state.label_maps, ds)
    imputed = _impute(state.medians, state.modes, ds.feature_columns(), encoded)
    if state.scale_enabled:
        imputed = np.where(state.scaled, (imputed - state.means) / state.sds, imputed)
    return ds.with_rows(imputed, labels=ds.labels, targets=ds.targets)


def iqr_filter(ds: Dataset, columns: list, factor: float = 1.5,
               bounds: list | None = None) -> tuple[Dataset, list]:
    """Drop rows strictly outside [q1 - factor*iqr, q3 + factor*iqr].

    Quantiles are computed on the given data with linear interpolation
    unless precomputed bounds are supplied (re-applying the same bounds
    is idempotent). Meant for training rows only.
    """
    by_name = {c.name: (j, c) for j, c in enumerate(ds.feature_columns())}
    for name in columns:
        if name not in by_name:
            raise ConfigError(f"unknown column for outlier filter: {name!r}")
        if by_name[name][1].kind != KIND_CONTINUOUS:
            raise ConfigError(f"outlier filter requires a continuous column, got {name!r}")

    if bounds is None:
        bounds = []
        for name in columns:
            j = by_name[name][0]
            col = ds.rows[:, j]
            col = col[~np.isnan(col)]
            if col.size == 0:
                raise FitError(f"column {name!r} has no observed values")
            q1, q3 = np.quantile(col, [0.25, 0.75])
            bounds.append(IqrBounds(column=name, q1=float(q1), q3=float(q3), factor=factor))
    else:
        missing = [b.column for b in bounds if b.column not in by_name]
        if missing:
            raise ConfigError(f"unknown column for outlier filter: {missing[0]!r}")

    keep = np.ones(ds.n_rows, dtype=bool)
    for b in bounds:
        col = ds.rows[:, by_name[b.column][0]]
        with np.errstate(invalid="ignore"):
            keep &= ~((col < b.lower) | (col > b.upper))
    return ds.take(np.nonzero(keep)[0]), bounds


def transform_filtered(state: PreprocessorState, train: Dataset) -> Dataset:
    """Training-partition variant of transform that also drops rows outside
    the fitted outlier bounds (bounds are in pre-scaling units)."""
    if train.feature_names() != state.feature_names:
        raise TransformError("dataset schema does not match fitted state")
    encoded = _encode(state.label_maps, train)
    imputed = _impute(state.medians, state.modes, train.feature_columns(), encoded)
    work = train.with_rows(imputed, labels=train.labels, targets=train.targets)
    names = [b.column for b in state.iqr_bounds]
    kept, _ = iqr_filter(work, names, bounds=state.iqr_bounds)
    rows = kept.rows
    if state.scale_enabled:
        rows = np.where(state.scaled, (rows - state.means) / state.sds, rows)
    return kept.with_rows(rows, labels=kept.labels, targets=kept.targets)
