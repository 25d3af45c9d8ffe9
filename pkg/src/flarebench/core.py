"""Domain vocabulary shared by every module: flare classes, slices, partitions.

Class labels are opaque categories ordered by flare strength; no flux physics
is modeled. All types are immutable after construction and safe to share
across parallel workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class FlareClass(enum.Enum):
    """GOES-style flare class; N denotes flare-quiet / A-class events."""

    X = "X"
    M = "M"
    C = "C"
    B = "B"
    N = "N"

    @property
    def strength(self) -> int:
        return _STRENGTH[self]

    def __lt__(self, other: "FlareClass") -> bool:
        if not isinstance(other, FlareClass):
            return NotImplemented
        return self.strength < other.strength

    def __le__(self, other: "FlareClass") -> bool:
        if not isinstance(other, FlareClass):
            return NotImplemented
        return self.strength <= other.strength

    def __gt__(self, other: "FlareClass") -> bool:
        if not isinstance(other, FlareClass):
            return NotImplemented
        return self.strength > other.strength

    def __ge__(self, other: "FlareClass") -> bool:
        if not isinstance(other, FlareClass):
            return NotImplemented
        return self.strength >= other.strength


_STRENGTH = {
    FlareClass.X: 4,
    FlareClass.M: 3,
    FlareClass.C: 2,
    FlareClass.B: 1,
    FlareClass.N: 0,
}

# Canonical strongest-first ordering used for counts, plans and reports.
CLASS_ORDER: tuple[FlareClass, ...] = (
    FlareClass.X,
    FlareClass.M,
    FlareClass.C,
    FlareClass.B,
    FlareClass.N,
)


class SuperClass(enum.Enum):
    """Binary grouping: strong (X, M) vs weak/quiet (C, B, N) events."""

    XM = "XM"
    CBN = "CBN"


_SUPER = {
    FlareClass.X: SuperClass.XM,
    FlareClass.M: SuperClass.XM,
    FlareClass.C: SuperClass.CBN,
    FlareClass.B: SuperClass.CBN,
    FlareClass.N: SuperClass.CBN,
}


def to_superclass(c: FlareClass | SuperClass) -> SuperClass:
    """Map a flare class onto its binary super-class (idempotent on SuperClass)."""
    if isinstance(c, SuperClass):
        return c
    return _SUPER[c]


def make_slice_uid(partition_id: int, event_id: str, slice_index: int) -> str:
    """Deterministic unique id for one slice, stable across runs."""
    return f"{partition_id}:{event_id}:{slice_index}"


@dataclass(frozen=True)
class MVTSSlice:
    """One fixed-length multichannel window of an event's parameter history.

    ``values`` has shape (steps_per_slice, n_params) in raw parameter units;
    ``missing`` is a boolean matrix of the same shape flagging absent cells
    (the corresponding value entries are NaN). Consecutive ``slice_index``
    values of one event form a contiguous range starting at 0.
    """

    event_id: str
    partition_id: int
    slice_index: int
    label: FlareClass
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.missing.shape:
            raise ValueError(
                f"values shape {self.values.shape} != missing-mask shape "
                f"{self.missing.shape} for slice {self.uid}"
            )
        if self.values.ndim != 2:
            raise ValueError(f"slice values must be 2-D, got {self.values.ndim}-D")

    @property
    def uid(self) -> str:
        return make_slice_uid(self.partition_id, self.event_id, self.slice_index)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_params(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FeatureRecord:
    """Fixed-length feature vector extracted from one slice.

    ``feature_names`` follows the "<param>_<stat>" convention and is shared
    (same tuple object) across all records of one extraction run.
    """

    slice_uid: str
    event_id: str
    partition_id: int
    slice_index: int
    label: FlareClass
    superclass: SuperClass
    features: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.features) != len(self.feature_names):
            raise ValueError(
                f"{len(self.features)} features but {len(self.feature_names)} "
                f"names for slice {self.slice_uid}"
            )


@dataclass(frozen=True)
class ClassCounts:
    """Multiset counts per flare class; super-class counts are derived sums."""

    x: int = 0
    m: int = 0
    c: int = 0
    b: int = 0
    n: int = 0

    def __post_init__(self) -> None:
        for cls in CLASS_ORDER:
            if self.of(cls) < 0:
                raise ValueError(f"negative count for class {cls.value}")

    def of(self, cls: FlareClass) -> int:
        return getattr(self, cls.value.lower())

    @property
    def xm(self) -> int:
        return self.x + self.m

    @property
    def cbn(self) -> int:
        return self.c + self.b + self.n

    @property
    def total(self) -> int:
        return self.xm + self.cbn

    def of_super(self, sc: SuperClass) -> int:
        return self.xm if sc is SuperClass.XM else self.cbn

    def as_dict(self) -> dict[FlareClass, int]:
        return {cls: self.of(cls) for cls in CLASS_ORDER}

    @classmethod
    def from_targets(cls, targets: dict[FlareClass, int]) -> "ClassCounts":
        return cls(
            x=targets.get(FlareClass.X, 0),
            m=targets.get(FlareClass.M, 0),
            c=targets.get(FlareClass.C, 0),
            b=targets.get(FlareClass.B, 0),
            n=targets.get(FlareClass.N, 0),
        )


def count_classes(records: Iterable) -> ClassCounts:
    """Exact multiset counts of ``label`` over any labeled items.

    Accepts bare FlareClass values or objects with a ``label`` attribute.
    """
    tally = {cls: 0 for cls in CLASS_ORDER}
    for rec in records:
        label = rec if isinstance(rec, FlareClass) else rec.label
        tally[label] += 1
    return ClassCounts.from_targets(tally)

