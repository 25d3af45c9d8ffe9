"""Partition-aware experiment orchestration.

Multifold trials train on one partition and test on a different one; unifold
trials split a single partition into stratified random folds (the practice
the data-split experiment exists to indict). Every trial runs the same
pipeline: fit normalization, apply it, resample the TRAINING side only,
compute class weights if the remedy asks for them, train the SVM, score on
the untouched test set. Train/test id sets are asserted disjoint on every
trial, and the harness refuses to resample anything tagged as a test set.

Per-trial seeds are derived from the master seed and the trial coordinates,
so results do not depend on scheduling order or worker count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .core import CLASS_ORDER, FeatureRecord, SuperClass, count_classes
from .features import FEATURE_SETS, feature_matrix
from .metrics import ConfusionMatrix, confusion, score_all
from .normalize import apply as apply_normalization
from .normalize import fit_extrema
from .sampling import (
    STRATEGIES,
    ClassWeights,
    compute_weights,
    execute_plan,
    make_plan,
)
from .svm import SvmConfig, predict, train

EXPERIMENT_IDS = ("Z", "A", "B", "C", "D", "E", "F", "G")
REMEDIES = ("none", "weights") + STRATEGIES
NORMALIZATIONS = ("global", "local")

# repeats per experiment: stochastic resampling remedies get 10, deterministic
# pipelines get 1
DEFAULT_REPEATS = {"Z": 1, "A": 10, "B": 10, "C": 1, "D": 1, "E": 1, "F": 10, "G": 10}

_STAGES = ("assemble", "normalize", "resample", "weights", "train", "evaluate")


class LeakageError(RuntimeError):
    """Train/test contamination: overlapping ids or test-set resampling."""


class TrialError(RuntimeError):
    """A pipeline stage failed; carries the stage name for the trial log."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class TrialSpec:
    experiment: str
    train_partition: int
    test_partition: int
    remedy: str = "none"
    weight_mode: str | None = None
    normalization: str = "global"
    feature_set: str = "LAST"
    repeat: int = 0
    seed: int = 0
    fold: int | None = None
    n_folds: int = 10
    fold_seed: int = 0

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENT_IDS:
            raise ValueError(f"unknown experiment id {self.experiment!r}")
        if self.remedy not in REMEDIES:
            raise ValueError(f"unknown remedy {self.remedy!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.feature_set.upper() not in FEATURE_SETS:
            raise ValueError(f"unknown feature set {self.feature_set!r}")
        if self.fold is None:
            if self.train_partition == self.test_partition:
                raise ValueError("multifold trials need distinct train/test partitions")
        else:
            if self.train_partition != self.test_partition:
                raise ValueError("unifold trials operate within one partition")
            if not 0 <= self.fold < self.n_folds:
                raise ValueError(f"fold {self.fold} outside 0..{self.n_folds - 1}")
        if self.remedy == "weights" and self.weight_mode not in ("ratio", "balanced"):
            raise ValueError("weights remedy needs weight_mode 'ratio' or 'balanced'")

    @property
    def remedy_label(self) -> str:
        if self.remedy == "weights":
            return f"weights:{self.weight_mode}"
        return self.remedy

    @property
    def is_unifold(self) -> bool:
        return self.fold is not None


@dataclass(frozen=True)
class TrialResult:
    spec: TrialSpec
    confusion: ConfusionMatrix
    scores: dict[str, float]
    wall_time: float


@dataclass(frozen=True)
class TrialFailure:
    spec: TrialSpec
    stage: str
    message: str


def derive_seed(master_seed: int, *coords: int) -> int:
    """Splittable per-trial seed; independent of trial scheduling order."""
    seq = np.random.SeedSequence([int(master_seed)] + [int(c) & 0xFFFFFFFF for c in coords])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def multifold_matrix(partitions: Sequence[int]) -> list[tuple[int, int]]:
    """All ordered (train, test) pairs with train != test."""
    parts = sorted(set(partitions))
    if len(parts) < 2:
        raise ValueError("multifold evaluation needs at least two partitions")
    return [(a, b) for a in parts for b in parts if a != b]


def unifold_folds(
    records: Sequence[FeatureRecord], k: int = 10, seed: int = 0
) -> list[list[FeatureRecord]]:
    """k disjoint folds of one partition, stratified by flare class.

    Fold sizes differ by at most one record per class; the union of the
    folds is the input.
    """
    if k < 2:
        raise ValueError("need at least two folds")
    counts = count_classes(records)
    for cls in CLASS_ORDER:
        if 0 < counts.of(cls) < k:
            raise ValueError(
                f"class {cls.value} has only {counts.of(cls)} records, fewer than "
                f"k={k} folds; use fewer folds"
            )
    rng = np.random.default_rng(seed)
    folds: list[list[FeatureRecord]] = [[] for _ in range(k)]
    for cls in CLASS_ORDER:
        members = [r for r in records if r.label is cls]
        if not members:
            continue
        order = rng.permutation(len(members))
        for slot, idx in enumerate(order):
            folds[slot % k].append(members[idx])
    return folds


def _assert_disjoint(train: Sequence[FeatureRecord], test: Sequence[FeatureRecord]) -> None:
    overlap = {r.slice_uid for r in train} & {r.slice_uid for r in test}
    if overlap:
        example = sorted(overlap)[:3]
        raise LeakageError(
            f"{len(overlap)} slice ids appear in both train and test sets "
            f"(e.g. {example})"
        )


def resample_records(
    records: Sequence[FeatureRecord], strategy: str, seed: int, role: str = "train"
) -> list[FeatureRecord]:
    """Resample a record set; refuses anything that is not training data."""
    if role != "train":
        raise LeakageError(
            f"refusing to resample a {role!r} set: sampling is restricted to "
            "training data"
        )
    plan = make_plan(count_classes(records), strategy)
    return execute_plan(records, plan, seed)


def _superclass_labels(records: Sequence[FeatureRecord]) -> np.ndarray:
    return np.array(
        [1 if r.superclass is SuperClass.XM else -1 for r in records], dtype=int
    )


def run_trial(
    spec: TrialSpec,
    features_by_partition: Mapping[int, Sequence[FeatureRecord]],
    svm_config: SvmConfig | None = None,
    norm_all_partitions: bool = False,
) -> TrialResult:
    """Execute one trial; raises TrialError with the failing stage's name."""
    started = time.perf_counter()
    svm_config = svm_config or SvmConfig()
    stage = "assemble"
    try:
        if spec.is_unifold:
            partition = list(features_by_partition[spec.train_partition])
            folds = unifold_folds(partition, k=spec.n_folds, seed=spec.fold_seed)
            test = folds[spec.fold]
            tra = [r for i, f in enumerate(folds) if i != spec.fold for r in f]
        else:
            tra = list(features_by_partition[spec.train_partition])
            test = list(features_by_partition[spec.test_partition])
        if not tra or not test:
            raise ValueError("empty train or test set")
        _assert_disjoint(tra, test)

        stage = "normalize"
        if spec.normalization == "global":
            if norm_all_partitions:
                pool = [r for recs in features_by_partition.values() for r in recs]
                fitted_on = "all partitions"
            else:
                pool = tra + test
                fitted_on = (
                    f"partitions {spec.train_partition},{spec.test_partition}"
                    if not spec.is_unifold
                    else f"partition {spec.train_partition}"
                )
            stats = fit_extrema(pool, scope="global", fitted_on=fitted_on)
            tra = apply_normalization(tra, stats)
            test = apply_normalization(test, stats)
        else:
            stats_train = fit_extrema(
                tra, scope="local", fitted_on=f"partition {spec.train_partition} (train side)"
            )
            stats_test = fit_extrema(
                test, scope="local", fitted_on=f"partition {spec.test_partition} (test side)"
            )
            tra = apply_normalization(tra, stats_train)
            test = apply_normalization(test, stats_test)

        stage = "resample"
        if spec.remedy in STRATEGIES:
            tra = resample_records(
                tra, spec.remedy, derive_seed(spec.seed, 1), role="train"
            )

        stage = "weights"
        weights = ClassWeights.unit()
        if spec.remedy == "weights":
            weights = compute_weights(count_classes(tra), spec.weight_mode)
        config = replace(svm_config, class_weights=weights)

        stage = "train"
        model = train(
            feature_matrix(tra),
            _superclass_labels(tra),
            config,
            seed=derive_seed(spec.seed, 2),
        )

        stage = "evaluate"
        preds = predict(model, feature_matrix(test))
        cm = confusion(preds, _superclass_labels(test))
        if cm.total != len(test):
            raise LeakageError(
                f"test confusion total {cm.total} != untouched test size {len(test)}"
            )
        scores = score_all(cm)
    except Exception as exc:
        raise TrialError(stage, str(exc)) from exc

    return TrialResult(
        spec=spec,
        confusion=cm,
        scores=scores,
        wall_time=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# experiment planning


def plan_experiment(
    experiment: str,
    partitions: Sequence[int],
    master_seed: int,
    repeats: int | None = None,
    k_folds: int = 10,
    remedy_override: str | None = None,
    normalization_override: str | None = None,
    feature_set_override: str | None = None,
) -> list[TrialSpec]:
    """The trial list for one experiment id, with optional overrides."""
    experiment = experiment.upper()
    if experiment not in EXPERIMENT_IDS:
        raise ValueError(f"unknown experiment id {experiment!r}")
    pairs = multifold_matrix(partitions)
    exp_ord = EXPERIMENT_IDS.index(experiment)

    def make(
        train: int,
        test: int,
        remedy: str,
        repeat: int,
        normalization: str = "global",
        feature_set: str = "LAST",
        weight_mode: str | None = None,
        fold: int | None = None,
        fold_seed: int = 0,
        variant: int = 0,
    ) -> TrialSpec:
        if remedy_override is not None:
            remedy, weight_mode = _parse_remedy(remedy_override)
        if normalization_override is not None:
            normalization = normalization_override
        if feature_set_override is not None:
            feature_set = feature_set_override
        return TrialSpec(
            experiment=experiment,
            train_partition=train,
            test_partition=test,
            remedy=remedy,
            weight_mode=weight_mode,
            normalization=normalization,
            feature_set=feature_set,
            repeat=repeat,
            seed=derive_seed(
                master_seed, exp_ord, train, test, repeat, variant, -1 if fold is None else fold
            ),
            fold=fold,
            n_folds=k_folds,
            fold_seed=fold_seed,
        )

    specs: list[TrialSpec] = []
    if experiment == "Z":
        specs = [make(a, b, "none", 0) for a, b in pairs]
    elif experiment == "A":
        reps = repeats or DEFAULT_REPEATS["A"]
        specs = [make(a, b, "US2", r) for r in range(reps) for a, b in pairs]
    elif experiment == "B":
        reps = repeats or DEFAULT_REPEATS["B"]
        specs = [make(a, b, "OS3", r) for r in range(reps) for a, b in pairs]
    elif experiment == "C":
        specs = [make(a, b, "weights", 0, weight_mode="ratio") for a, b in pairs]
    elif experiment == "D":
        # unifold arm: k stratified folds per partition, weights in play
        for p in sorted(set(partitions)):
            fold_seed = derive_seed(master_seed, exp_ord, p, p, 0, 7)
            for i in range(k_folds):
                specs.append(
                    make(
                        p,
                        p,
                        "weights",
                        0,
                        weight_mode="ratio",
                        fold=i,
                        fold_seed=fold_seed,
                    )
                )
        # multifold arm, identically equipped
        specs.extend(make(a, b, "weights", 0, weight_mode="ratio") for a, b in pairs)
    elif experiment == "E":
        for variant, norm in enumerate(NORMALIZATIONS):
            specs.extend(
                make(a, b, "none", 0, normalization=norm, variant=variant)
                for a, b in pairs
            )
    elif experiment == "F":
        reps = repeats or DEFAULT_REPEATS["F"]
        for variant, strategy in enumerate(("OS1", "OS3")):
            specs.extend(
                make(a, b, strategy, r, variant=variant)
                for r in range(reps)
                for a, b in pairs
            )
    elif experiment == "G":
        reps = repeats or DEFAULT_REPEATS["G"]
        for variant, fs in enumerate(("LAST", "STD", "FOUR")):
            specs.extend(
                make(a, b, "US2", r, feature_set=fs, variant=variant)
                for r in range(reps)
                for a, b in pairs
            )
    return specs


def _parse_remedy(text: str) -> tuple[str, str | None]:
    """'US2' -> ('US2', None); 'weights:ratio' -> ('weights', 'ratio')."""
    if text.startswith("weights"):
        mode = text.split(":", 1)[1] if ":" in text else "ratio"
        return "weights", mode
    return text, None


def spec_sort_key(spec: TrialSpec):
    return (
        spec.experiment,
        spec.remedy_label,
        spec.normalization,
        spec.feature_set,
        spec.train_partition,
        spec.test_partition,
        -1 if spec.fold is None else spec.fold,
        spec.repeat,
    )


# ---------------------------------------------------------------------------
# parallel execution

_WORKER_STATE: dict = {}


def _init_worker(features_by_partition, svm_config, norm_all) -> None:
    _WORKER_STATE["features"] = features_by_partition
    _WORKER_STATE["svm_config"] = svm_config
    _WORKER_STATE["norm_all"] = norm_all


def _run_one(spec: TrialSpec):
    try:
        return run_trial(
            spec,
            _WORKER_STATE["features"],
            _WORKER_STATE["svm_config"],
            _WORKER_STATE["norm_all"],
        )
    except TrialError as exc:
        return TrialFailure(spec=spec, stage=exc.stage, message=str(exc))


def run_trials(
    specs: Sequence[TrialSpec],
    features_by_partition: Mapping[int, Sequence[FeatureRecord]],
    svm_config: SvmConfig | None = None,
    jobs: int = 1,
    norm_all_partitions: bool = False,
) -> tuple[list[TrialResult], list[TrialFailure]]:
    """Run trials (optionally in a worker pool) and return (results, failures).

    Output is sorted canonically so it does not depend on worker scheduling.
    """
    svm_config = svm_config or SvmConfig()
    if jobs <= 1:
        _init_worker(features_by_partition, svm_config, norm_all_partitions)
        outcomes = [_run_one(s) for s in specs]
    else:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        with ctx.Pool(
            processes=jobs,
            initializer=_init_worker,
            initargs=(features_by_partition, svm_config, norm_all_partitions),
        ) as pool:
            outcomes = pool.map(_run_one, specs, chunksize=1)

    results = [o for o in outcomes if isinstance(o, TrialResult)]
    failures = [o for o in outcomes if isinstance(o, TrialFailure)]
    results.sort(key=lambda r: spec_sort_key(r.spec))
    failures.sort(key=lambda f: spec_sort_key(f.spec))
    return results, failures


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class Aggregate:
    experiment: str
    remedy: str
    normalization: str
    feature_set: str
    train_partition: int
    test_partition: int
    n_trials: int
    tss_mean: float
    tss_var: float


def aggregate(results: Sequence[TrialResult]) -> list[Aggregate]:
    """Mean and sample variance of TSS per (experiment, arm, partition pair).

    Unifold trials collapse over folds, so one partition yields a single
    aggregate row.
    """
    grouped: dict[tuple, list[float]] = {}
    for r in results:
        key = (
            r.spec.experiment,
            r.spec.remedy_label,
            r.spec.normalization,
            r.spec.feature_set,
            r.spec.train_partition,
            r.spec.test_partition,
        )
        grouped.setdefault(key, []).append(r.scores["tss"])
    out = []
    for key in sorted(grouped):
        values = np.asarray(grouped[key], dtype=float)
        if np.all(values == values[0]):
            # constant repeats report their exact value with zero spread
            mean, var = float(values[0]), 0.0
        else:
            mean = float(np.mean(values))
            var = float(np.var(values, ddof=1)) if values.size > 1 else 0.0
        out.append(Aggregate(*key, n_trials=values.size, tss_mean=mean, tss_var=var))
    return out
