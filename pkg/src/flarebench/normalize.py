"""Zero-one normalization of feature columns, with global or local extrema.

Global scope fits min/max over the union of the provided partitions (for an
experiment pair: both partitions jointly); local scope fits on a single
partition. Values outside the fitted range are deliberately NOT clamped:
out-of-range values reaching the classifier are part of what the local-vs-
global comparison measures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import FeatureRecord
from .features import feature_matrix


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class NormalizationStats:
    """Per-column extrema plus the scope they were fitted under.

    ``scope`` is "global" or "local"; ``fitted_on`` records the partitions
    (or other descriptor) the fit saw, for reproducibility audits.
    """

    feature_names: tuple[str, ...]
    minima: np.ndarray
    maxima: np.ndarray
    scope: str
    fitted_on: str

    def __post_init__(self) -> None:
        if len(self.feature_names) != self.minima.size or self.minima.size != self.maxima.size:
            raise NormalizationError("extrema arrays must match feature names")
        if np.any(self.minima > self.maxima):
            raise NormalizationError("per-column min must not exceed max")

    def save(self, path) -> None:
        payload = {
            "scope": self.scope,
            "fitted_on": self.fitted_on,
            "columns": {
                name: [float(lo), float(hi)]
                for name, lo, hi in zip(self.feature_names, self.minima, self.maxima)
            },
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "NormalizationStats":
        with open(path) as fh:
            payload = json.load(fh)
        names = tuple(payload["columns"])
        lo = np.array([payload["columns"][n][0] for n in names])
        hi = np.array([payload["columns"][n][1] for n in names])
        return cls(names, lo, hi, payload["scope"], payload["fitted_on"])


def fit_extrema(
    records: Sequence[FeatureRecord],
    scope: str = "global",
    fitted_on: str | None = None,
) -> NormalizationStats:
    """Column-wise min/max over all given records.

    The caller chooses which records embody the scope: pass the union of the
    pair's partitions for a global fit, one partition's records for a local
    fit. ``scope`` is recorded verbatim.
    """
    if not records:
        raise NormalizationError("cannot fit extrema on an empty record set")
    if scope not in ("global", "local"):
        raise NormalizationError(f"scope must be 'global' or 'local', got {scope!r}")
    names = records[0].feature_names
    for r in records:
        if r.feature_names != names:
            raise NormalizationError("records disagree on feature columns")
    mat = feature_matrix(records)
    if fitted_on is None:
        parts = sorted({r.partition_id for r in records})
        fitted_on = "partitions " + ",".join(map(str, parts))
    return NormalizationStats(
        feature_names=names,
        minima=mat.min(axis=0),
        maxima=mat.max(axis=0),
        scope=scope,
        fitted_on=fitted_on,
    )


def apply(records: Sequence[FeatureRecord], stats: NormalizationStats) -> list[FeatureRecord]:
    """x' = (x - min) / (max - min) per column; constant columns map to 0.

    Out-of-range inputs produce values outside [0, 1] unchanged.
    """
    if not records:
        return []
    if records[0].feature_names != stats.feature_names:
        raise NormalizationError(
            "normalization stats do not cover these feature columns"
        )
    span = stats.maxima - stats.minima
    degenerate = span == 0.0
    safe_span = np.where(degenerate, 1.0, span)
    out = []
    for r in records:
        scaled = (r.features - stats.minima) / safe_span
        scaled = np.where(degenerate, 0.0, scaled)
        out.append(replace(r, features=scaled))
    return out
