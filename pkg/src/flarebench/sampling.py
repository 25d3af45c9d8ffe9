"""The seven resampling strategies plus class-weight computation.

Every strategy balances the two super-classes (|XM'| = |CBN'|) except OS4,
whose defining constraint (all five classes equal to |N|) forces a 2:3
super-class ratio. Sub-class splits that do not divide evenly hand the
remainder to C first, then B, then N (for the XM side: X then M); fractional
proportional targets are settled by largest-remainder so super-class totals
come out exact.

Undersampling selects uniformly without replacement; oversampling keeps all
originals and replicates uniformly with replacement. Both are deterministic
given the seed. Plans are meant for TRAINING data only; the experiment
harness refuses to resample test sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CLASS_ORDER, ClassCounts, FlareClass, SuperClass, count_classes

STRATEGIES = ("US1", "US2", "US3", "OS1", "OS2", "OS3", "OS4")

# Remainder priority for 3-way CBN splits and 2-way XM splits.
_CBN_PRIORITY = (FlareClass.C, FlareClass.B, FlareClass.N)
_XM_PRIORITY = (FlareClass.X, FlareClass.M)


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingPlan:
    """Per-class target counts for one strategy applied to given counts."""

    strategy: str
    source: ClassCounts
    targets: ClassCounts
    base_note: str

    def target(self, cls: FlareClass) -> int:
        return self.targets.of(cls)


@dataclass(frozen=True)
class ClassWeights:
    """Per-super-class penalty multipliers; mode is 'balanced' or 'ratio'."""

    w_xm: float
    w_cbn: float
    mode: str

    def __post_init__(self) -> None:
        if self.w_xm <= 0 or self.w_cbn <= 0:
            raise ValueError("class weights must be positive")

    def of(self, sc: SuperClass) -> float:
        return self.w_xm if sc is SuperClass.XM else self.w_cbn

    @classmethod
    def unit(cls) -> "ClassWeights":
        return cls(1.0, 1.0, "unit")


def _equal_split(total: int, members: Sequence[FlareClass]) -> dict[FlareClass, int]:
    """Split ``total`` into equal targets, remainder by priority order."""
    base, rem = divmod(total, len(members))
    return {cls: base + (1 if i < rem else 0) for i, cls in enumerate(members)}


def _proportional_split(
    total: int, counts: ClassCounts, members: Sequence[FlareClass]
) -> dict[FlareClass, int]:
    """Scale members to sum to ``total`` preserving proportions.

    Largest-remainder rounding; ties broken by the priority order so the
    result is deterministic.
    """
    weights = np.array([counts.of(cls) for cls in members], dtype=float)
    group = weights.sum()
    if group <= 0:
        raise SamplingError("cannot scale an empty class group")
    quotas = weights * (total / group)
    floors = np.floor(quotas).astype(int)
    leftover = total - int(floors.sum())
    # stable sort on (-remainder, priority index) hands ties to C before B
    # before N (X before M on the XM side)
    order = sorted(range(len(members)), key=lambda i: (-(quotas[i] - floors[i]), i))
    out = {cls: int(floors[i]) for i, cls in enumerate(members)}
    for i in order[:leftover]:
        out[members[i]] += 1
    return out


def _require(counts: ClassCounts, cls: FlareClass, strategy: str) -> None:
    if counts.of(cls) == 0:
        raise SamplingError(
            f"{strategy} requires a non-empty {cls.value} class (base class)"
        )


def make_plan(counts: ClassCounts, strategy: str) -> SamplingPlan:
    """Target counts for one strategy given the training class counts."""
    strategy = strategy.upper()
    targets: dict[FlareClass, int]

    if strategy == "NONE":
        targets = counts.as_dict()
        note = "no resampling"

    elif strategy == "US1":
        # CBN shrunk onto |XM| preserving internal proportions; XM untouched.
        if counts.xm == 0:
            raise SamplingError("US1 requires a non-empty XM super-class")
        if counts.cbn == 0:
            raise SamplingError("US1 requires a non-empty CBN super-class")
        targets = {FlareClass.X: counts.x, FlareClass.M: counts.m}
        targets.update(_proportional_split(counts.xm, counts, _CBN_PRIORITY))
        note = "base: XM super-class (proportions preserved in CBN)"

    elif strategy == "US2":
        _require(counts, FlareClass.X, strategy)
        targets = {FlareClass.X: counts.x, FlareClass.M: counts.x}
        targets.update(_equal_split(2 * counts.x, _CBN_PRIORITY))
        note = "base: X class (1:1 at sub-class and super-class level)"

    elif strategy == "US3":
        _require(counts, FlareClass.M, strategy)
        targets = {FlareClass.X: counts.m, FlareClass.M: counts.m}
        targets.update(_equal_split(2 * counts.m, _CBN_PRIORITY))
        note = "base: M class (X oversampled up to |M|)"

    elif strategy == "OS1":
        # XM grown onto |CBN| preserving internal ratios; CBN untouched.
        if counts.xm == 0:
            raise SamplingError("OS1 requires a non-empty XM super-class")
        if counts.cbn == 0:
            raise SamplingError("OS1 requires a non-empty CBN super-class")
        targets = {
            FlareClass.C: counts.c,
            FlareClass.B: counts.b,
            FlareClass.N: counts.n,
        }
        targets.update(_proportional_split(counts.cbn, counts, _XM_PRIORITY))
        note = "base: CBN super-class (ratios preserved in XM)"

    elif strategy == "OS2":
        n_target = 3 * counts.c - (counts.c + counts.b)
        if n_target < 0:
            raise SamplingError(
                f"OS2 infeasible: 3|C| - (|C|+|B|) = {n_target} is negative"
            )
        if counts.xm == 0:
            raise SamplingError("OS2 requires a non-empty XM super-class")
        targets = {FlareClass.C: counts.c, FlareClass.B: counts.b, FlareClass.N: n_target}
        new_cbn = counts.c + counts.b + n_target
        targets.update(_proportional_split(new_cbn, counts, _XM_PRIORITY))
        note = "base: C,B classes (N suppressed to 3|C| - (|C|+|B|))"

    elif strategy == "OS3":
        _require(counts, FlareClass.C, strategy)
        targets = {
            FlareClass.C: counts.c,
            FlareClass.B: counts.c,
            FlareClass.N: counts.c,
        }
        targets.update(_equal_split(3 * counts.c, _XM_PRIORITY))
        note = "base: C class (B, N undersampled; X, M oversampled)"

    elif strategy == "OS4":
        _require(counts, FlareClass.N, strategy)
        targets = {cls: counts.n for cls in CLASS_ORDER}
        note = "base: N class (all five classes equalized; super-classes 2:3)"

    else:
        raise SamplingError(f"unknown sampling strategy {strategy!r}")

    return SamplingPlan(
        strategy=strategy,
        source=counts,
        targets=ClassCounts.from_targets(targets),
        base_note=note,
    )


def execute_plan(records: Sequence, plan: SamplingPlan, seed) -> list:
    """Materialize a plan on labeled records; deterministic given seed.

    Classes marked for undersampling in the plan are drawn without
    replacement; classes marked for oversampling keep every original plus
    uniform replicates. A mismatch between the records and the plan's source
    counts (e.g. an undersample target exceeding what is available) is
    strategy misuse and raises.
    """
    rng = np.random.default_rng(seed)
    by_class: dict[FlareClass, list] = {cls: [] for cls in CLASS_ORDER}
    for rec in records:
        by_class[rec.label].append(rec)

    out: list = []
    for cls in CLASS_ORDER:
        pool = by_class[cls]
        avail = len(pool)
        target = plan.target(cls)
        planned_from = plan.source.of(cls)
        if target == avail:
            out.extend(pool)
            continue
        if target < avail:
            if planned_from < target:
                raise SamplingError(
                    f"{plan.strategy}: oversample target {target} for class "
                    f"{cls.value} is below the {avail} records available"
                )
            picked = rng.choice(avail, size=target, replace=False)
            out.extend(pool[i] for i in sorted(picked))
        else:
            if planned_from > target:
                raise SamplingError(
                    f"{plan.strategy}: undersample target {target} for class "
                    f"{cls.value} exceeds the {avail} records available"
                )
            if avail == 0:
                raise SamplingError(
                    f"{plan.strategy}: cannot oversample empty class {cls.value}"
                )
            extra = rng.choice(avail, size=target - avail, replace=True)
            out.extend(pool)
            out.extend(pool[i] for i in extra)
    return out


def compute_weights(counts: ClassCounts, mode: str = "balanced") -> ClassWeights:
    """Super-class penalty weights from training counts.

    balanced: w_j = n / (k * n_j) with k = 2 classes, n the total count.
    ratio:    w_XM = |CBN| / |XM|, w_CBN = 1.
    """
    if counts.xm == 0 or counts.cbn == 0:
        raise SamplingError("class weights need both super-classes non-empty")
    if mode == "balanced":
        n = counts.total
        return ClassWeights(w_xm=n / (2 * counts.xm), w_cbn=n / (2 * counts.cbn), mode=mode)
    if mode == "ratio":
        return ClassWeights(w_xm=counts.cbn / counts.xm, w_cbn=1.0, mode=mode)
    raise SamplingError(f"unknown weight mode {mode!r}")


def plan_counts(records: Sequence) -> ClassCounts:
    return count_classes(records)
