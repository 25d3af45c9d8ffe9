"""Missing-value repair and per-slice statistics.

Each slice becomes one fixed-length feature vector: the chosen statistics of
every parameter's time series, ordered params-major / stats-minor. Feature
names ("<param>_<stat>") are a stable public contract used by downstream
files.

Conventions (documented, tested):
  * standard deviation uses the sample (n-1) denominator, 0 when n = 1;
  * skewness is m3/m2^(3/2) and kurtosis m4/m2^2 - 3 with population central
    moments, both 0 when m2 = 0 (constant series are legal inputs);
  * interpolation runs per parameter per slice, before any statistic.
"""

from __future__ import annotations

import enum
from typing import Iterable, Sequence

import numpy as np

from .core import FeatureRecord, MVTSSlice, to_superclass


class FeatureExtractionError(ValueError):
    """Raised with slice identity when a series cannot be repaired or summarized."""


class StatKind(enum.Enum):
    # Declaration order is the stable feature ordering.
    MEAN = "mean"
    STDDEV = "stddev"
    SKEWNESS = "skewness"
    KURTOSIS = "kurtosis"
    MEDIAN = "median"
    LAST_VALUE = "last"


STAT_ORDER: tuple[StatKind, ...] = tuple(StatKind)

# Named presets; FOUR is the four-number summary used by the feature-set
# comparison experiment.
FEATURE_SETS: dict[str, tuple[StatKind, ...]] = {
    "LAST": (StatKind.LAST_VALUE,),
    "STD": (StatKind.STDDEV,),
    "FOUR": (StatKind.STDDEV, StatKind.SKEWNESS, StatKind.KURTOSIS, StatKind.MEDIAN),
    "ALL": STAT_ORDER,
}


def resolve_feature_set(name: str) -> tuple[StatKind, ...]:
    try:
        stats = FEATURE_SETS[name.upper()]
    except KeyError:
        raise ValueError(
            f"unknown feature set {name!r}; choose from {sorted(FEATURE_SETS)}"
        ) from None
    return tuple(sorted(stats, key=STAT_ORDER.index))


def interpolate_missing(series: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Fill masked cells: linear interpolation inside, nearest value at edges.

    Requires at least one valid value; callers attach slice identity to the
    error when there is none.
    """
    series = np.asarray(series, dtype=float)
    missing = np.asarray(missing, dtype=bool)
    if series.shape != missing.shape or series.ndim != 1:
        raise ValueError("series and mask must be 1-D and of equal length")
    if not missing.any():
        return series.copy()
    valid = ~missing
    if not valid.any():
        raise FeatureExtractionError("all values missing; nothing to interpolate from")
    idx = np.arange(series.size)
    out = series.copy()
    # np.interp extends flat beyond the first/last valid sample, which is
    # exactly the edge rule.
    out[missing] = np.interp(idx[missing], idx[valid], series[valid])
    return out


def compute_stat(series: Sequence[float] | np.ndarray, kind: StatKind) -> float:
    """One statistic of a fully-observed series (length >= 1)."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("series must be 1-D and non-empty")
    n = x.size
    if kind is StatKind.LAST_VALUE:
        return float(x[-1])
    if kind is StatKind.MEDIAN:
        return float(np.median(x))
    if kind is StatKind.MEAN:
        return float(np.mean(x))
    # Constant series short-circuit keeps the m2 = 0 rule exact even when the
    # mean of identical floats would not reproduce the value bit-for-bit.
    if np.ptp(x) == 0.0:
        return 0.0
    if kind is StatKind.STDDEV:
        if n == 1:
            return 0.0
        return float(np.sqrt(np.sum((x - np.mean(x)) ** 2) / (n - 1)))
    d = x - np.mean(x)
    m2 = np.mean(d**2)
    if m2 == 0.0:
        return 0.0
    if kind is StatKind.SKEWNESS:
        return float(np.mean(d**3) / m2**1.5)
    if kind is StatKind.KURTOSIS:
        return float(np.mean(d**4) / m2**2 - 3.0)
    raise ValueError(f"unhandled statistic {kind}")


def feature_names(param_names: Sequence[str], stats: Sequence[StatKind]) -> tuple[str, ...]:
    return tuple(f"{p}_{s.value}" for p in param_names for s in stats)


def _stat_block(values: np.ndarray, stats: Sequence[StatKind]) -> np.ndarray:
    """Statistics of one fully-repaired slice, shape (n_params * n_stats,).

    Must agree with compute_stat() per series; kept vectorized across
    parameters because extraction dominates preprocessing time.
    """
    n = values.shape[0]
    const = np.ptp(values, axis=0) == 0.0
    mean = np.mean(values, axis=0)
    d = values - mean
    m2 = np.mean(d**2, axis=0)
    degenerate = const | (m2 == 0.0)
    safe_m2 = np.where(degenerate, 1.0, m2)

    cols: list[np.ndarray] = []
    for kind in stats:
        if kind is StatKind.MEAN:
            cols.append(mean)
        elif kind is StatKind.MEDIAN:
            cols.append(np.median(values, axis=0))
        elif kind is StatKind.LAST_VALUE:
            cols.append(values[-1, :])
        elif kind is StatKind.STDDEV:
            if n == 1:
                cols.append(np.zeros(values.shape[1]))
            else:
                std = np.sqrt(np.sum(d**2, axis=0) / (n - 1))
                cols.append(np.where(const, 0.0, std))
        elif kind is StatKind.SKEWNESS:
            skew = np.mean(d**3, axis=0) / safe_m2**1.5
            cols.append(np.where(degenerate, 0.0, skew))
        elif kind is StatKind.KURTOSIS:
            kurt = np.mean(d**4, axis=0) / safe_m2**2 - 3.0
            cols.append(np.where(degenerate, 0.0, kurt))
        else:
            raise ValueError(f"unhandled statistic {kind}")
    # stack as (n_stats, n_params) then transpose -> params-major flattening
    return np.asarray(cols).T.reshape(-1)


def repair_slice(s: MVTSSlice) -> np.ndarray:
    """Slice values with every masked cell filled; raises with identity."""
    if not s.missing.any():
        return s.values
    out = s.values.copy()
    for p in np.flatnonzero(s.missing.any(axis=0)):
        try:
            out[:, p] = interpolate_missing(s.values[:, p], s.missing[:, p])
        except FeatureExtractionError as exc:
            raise FeatureExtractionError(
                f"slice {s.uid}, parameter column {p}: {exc}"
            ) from None
    return out


def extract_features(
    slices: Iterable[MVTSSlice],
    feature_set: str | Sequence[StatKind] = "ALL",
    param_names: Sequence[str] | None = None,
    param_subset: Sequence[str] | None = None,
) -> list[FeatureRecord]:
    """One feature record per slice.

    ``param_names`` labels the slice columns (defaults to p01..pNN);
    ``param_subset`` optionally restricts extraction to the named columns.
    """
    if isinstance(feature_set, str):
        stats = resolve_feature_set(feature_set)
    else:
        stats = tuple(sorted(set(feature_set), key=STAT_ORDER.index))
        if not stats:
            raise ValueError("feature set must be non-empty")

    slices = list(slices)
    if not slices:
        return []
    n_params = slices[0].n_params
    shape = slices[0].values.shape
    for s in slices:
        if s.values.shape != shape:
            raise ValueError(
                f"inconsistent slice shape {s.values.shape} (expected {shape}) "
                f"for slice {s.uid}"
            )
    if param_names is None:
        param_names = default_param_names(n_params)
    elif len(param_names) != n_params:
        raise ValueError(f"{len(param_names)} param names for {n_params} params")

    if param_subset is None:
        cols = np.arange(n_params)
        kept_names = tuple(param_names)
    else:
        index = {name: i for i, name in enumerate(param_names)}
        unknown = [p for p in param_subset if p not in index]
        if unknown:
            raise ValueError(f"unknown parameters in subset: {unknown}")
        cols = np.asarray([index[p] for p in param_subset])
        kept_names = tuple(param_subset)
    names = feature_names(kept_names, stats)

    records = []
    for s in slices:
        vec = _stat_block(repair_slice(s)[:, cols], stats)
        records.append(
            FeatureRecord(
                slice_uid=s.uid,
                event_id=s.event_id,
                partition_id=s.partition_id,
                slice_index=s.slice_index,
                label=s.label,
                superclass=to_superclass(s.label),
                features=vec,
                feature_names=names,
            )
        )
    return records


def default_param_names(n_params: int) -> tuple[str, ...]:
    width = max(2, len(str(n_params)))
    return tuple(f"p{i + 1:0{width}d}" for i in range(n_params))


def feature_matrix(records: Sequence[FeatureRecord]) -> np.ndarray:
    """Stack records into an (n_records, n_features) float matrix."""
    if not records:
        return np.empty((0, 0))
    return np.vstack([r.features for r in records])
