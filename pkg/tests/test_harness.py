import numpy as np
import pytest

from flarebench.core import CLASS_ORDER, FlareClass, count_classes
from flarebench.features import extract_features
from flarebench.harness import (
    DEFAULT_REPEATS,
    LeakageError,
    TrialError,
    TrialSpec,
    aggregate,
    derive_seed,
    multifold_matrix,
    plan_experiment,
    resample_records,
    run_trial,
    run_trials,
    unifold_folds,
)
from flarebench.svm import SvmConfig
from flarebench.synthgen import GenConfig, generate

EVENTS = {
    FlareClass.X: 2,
    FlareClass.M: 3,
    FlareClass.C: 8,
    FlareClass.B: 10,
    FlareClass.N: 12,
}


@pytest.fixture(scope="module")
def feature_spaces():
    cfg = GenConfig(
        seed=21,
        n_partitions=3,
        events_per_class=EVENTS,
        n_params=6,
        steps_per_slice=16,
        slices_per_event=4,
        amplitudes=(1.0, 1.4, 0.6),
    )
    ds = generate(cfg)
    return {
        p: extract_features(ds.slices_by_partition[p], "LAST", ds.param_names)
        for p in ds.partitions
    }


FAST_SVM = SvmConfig(c=10.0, gamma=0.05)


# --- pair matrix ----------------------------------------------------------------


def test_multifold_matrix_five_partitions():
    pairs = multifold_matrix([1, 2, 3, 4, 5])
    assert len(pairs) == 20
    assert len(set(pairs)) == 20
    assert all(a != b for a, b in pairs)


def test_multifold_matrix_two_partitions():
    assert multifold_matrix([1, 2]) == [(1, 2), (2, 1)]


def test_multifold_matrix_requires_two():
    with pytest.raises(ValueError):
        multifold_matrix([3])


# --- folds ----------------------------------------------------------------------


def test_unifold_sizes_and_partition(feature_spaces):
    records = feature_spaces[1]
    folds = unifold_folds(records, k=4, seed=3)
    assert len(folds) == 4
    sizes = [len(f) for f in folds]
    assert sum(sizes) == len(records)
    ids = [r.slice_uid for f in folds for r in f]
    assert len(set(ids)) == len(ids)  # pairwise disjoint
    assert set(ids) == {r.slice_uid for r in records}  # union = input


def test_unifold_stratification(feature_spaces):
    records = feature_spaces[1]
    k = 4
    folds = unifold_folds(records, k=k, seed=3)
    for cls in CLASS_ORDER:
        per_fold = [sum(1 for r in f if r.label is cls) for f in folds]
        assert max(per_fold) - min(per_fold) <= 1
    # XM fraction within one record of the global fraction per fold
    total_frac = sum(1 for r in records if r.label in (FlareClass.X, FlareClass.M))
    for f in folds:
        xm = sum(1 for r in f if r.label in (FlareClass.X, FlareClass.M))
        assert abs(xm - total_frac * len(f) / len(records)) <= 1.0001


def test_unifold_small_class_rejected(feature_spaces):
    with pytest.raises(ValueError, match="fewer folds"):
        unifold_folds(feature_spaces[1], k=10, seed=0)  # only 8 X slices


def test_unifold_deterministic(feature_spaces):
    a = unifold_folds(feature_spaces[1], k=4, seed=5)
    b = unifold_folds(feature_spaces[1], k=4, seed=5)
    assert [[r.slice_uid for r in f] for f in a] == [[r.slice_uid for r in f] for f in b]


# --- trials ----------------------------------------------------------------------


def test_run_trial_baseline(feature_spaces):
    spec = TrialSpec(experiment="Z", train_partition=1, test_partition=2, seed=9)
    res = run_trial(spec, feature_spaces, FAST_SVM)
    assert res.confusion.total == len(feature_spaces[2])
    assert -1.0 <= res.scores["tss"] <= 1.0
    assert res.wall_time > 0


def test_constructed_separability_reaches_high_skill():
    # phi = 0 with a class signal ten times the noise scale: classes nearly
    # separable, so even the no-remedy baseline must score TSS >= 0.95 on a
    # cross-partition test
    cfg = GenConfig(
        seed=33,
        n_partitions=2,
        events_per_class=EVENTS,
        n_params=6,
        steps_per_slice=16,
        slices_per_event=4,
        ar_coefficient=0.0,
        class_signal=10.0,
        spike_rate=0.0,
        amplitudes=(1.0, 1.2),
    )
    ds = generate(cfg)
    spaces = {
        p: extract_features(ds.slices_by_partition[p], "LAST", ds.param_names)
        for p in ds.partitions
    }
    spec = TrialSpec(experiment="Z", train_partition=1, test_partition=2, seed=1)
    res = run_trial(spec, spaces)
    assert res.scores["tss"] >= 0.95


def test_run_trial_applies_remedy_to_training_only(feature_spaces):
    spec = TrialSpec(
        experiment="A", train_partition=1, test_partition=3, remedy="US2", seed=10
    )
    res = run_trial(spec, feature_spaces, FAST_SVM)
    # test set untouched: confusion totals the whole test partition
    assert res.confusion.total == len(feature_spaces[3])


def test_run_trial_deterministic(feature_spaces):
    spec = TrialSpec(
        experiment="A", train_partition=2, test_partition=1, remedy="US2", seed=77
    )
    r1 = run_trial(spec, feature_spaces, FAST_SVM)
    r2 = run_trial(spec, feature_spaces, FAST_SVM)
    assert r1.confusion == r2.confusion
    assert r1.scores == r2.scores


def test_run_trial_unifold(feature_spaces):
    spec = TrialSpec(
        experiment="D",
        train_partition=2,
        test_partition=2,
        remedy="weights",
        weight_mode="ratio",
        fold=1,
        n_folds=4,
        fold_seed=13,
        seed=14,
    )
    res = run_trial(spec, feature_spaces, FAST_SVM)
    folds = unifold_folds(feature_spaces[2], k=4, seed=13)
    assert res.confusion.total == len(folds[1])


def test_trial_error_carries_stage(feature_spaces):
    # OS2 infeasible for these counts: 3|C| - (|C|+|B|) = 96 - 72... compute
    counts = count_classes(feature_spaces[1])
    infeasible = 3 * counts.c - (counts.c + counts.b) < 0
    spec = TrialSpec(
        experiment="A", train_partition=1, test_partition=2, remedy="OS2", seed=1
    )
    if infeasible:
        with pytest.raises(TrialError) as err:
            run_trial(spec, feature_spaces, FAST_SVM)
        assert err.value.stage == "resample"
    else:
        run_trial(spec, feature_spaces, FAST_SVM)


def test_leakage_guard_on_overlapping_ids(feature_spaces):
    # rig partition 2 to contain a record of partition 1
    rigged = dict(feature_spaces)
    rigged[2] = list(feature_spaces[2]) + [feature_spaces[1][0]]
    spec = TrialSpec(experiment="Z", train_partition=1, test_partition=2, seed=3)
    with pytest.raises(TrialError, match="train and test"):
        run_trial(spec, rigged, FAST_SVM)


def test_resample_refuses_test_role(feature_spaces):
    with pytest.raises(LeakageError, match="refusing"):
        resample_records(feature_spaces[1], "US2", seed=0, role="test")


def test_run_trials_parallel_matches_serial(feature_spaces):
    specs = plan_experiment("Z", [1, 2, 3], master_seed=5)
    serial, f1 = run_trials(specs, feature_spaces, FAST_SVM, jobs=1)
    parallel, f2 = run_trials(specs, feature_spaces, FAST_SVM, jobs=2)
    assert not f1 and not f2
    assert [r.spec for r in serial] == [r.spec for r in parallel]
    assert [r.confusion for r in serial] == [r.confusion for r in parallel]


def test_run_trials_collects_failures(feature_spaces):
    # drop most C records from partition 1 so OS2's N target goes negative
    rigged = dict(feature_spaces)
    c_records = [r for r in feature_spaces[1] if r.label is FlareClass.C]
    others = [r for r in feature_spaces[1] if r.label is not FlareClass.C]
    rigged[1] = others + c_records[:4]
    counts = count_classes(rigged[1])
    assert 3 * counts.c - (counts.c + counts.b) < 0
    specs = [
        TrialSpec(experiment="A", train_partition=1, test_partition=2, remedy="OS2", seed=1),
        TrialSpec(experiment="A", train_partition=1, test_partition=3, remedy="US2", seed=2),
    ]
    results, failures = run_trials(specs, rigged, FAST_SVM)
    assert len(results) == 1
    assert len(failures) == 1
    assert failures[0].stage == "resample"


# --- planning --------------------------------------------------------------------


def test_plan_counts_per_experiment():
    partitions = [1, 2, 3, 4, 5]
    assert len(plan_experiment("Z", partitions, 0)) == 20
    assert len(plan_experiment("A", partitions, 0)) == 200
    assert len(plan_experiment("B", partitions, 0)) == 200
    assert len(plan_experiment("C", partitions, 0)) == 20
    assert len(plan_experiment("D", partitions, 0)) == 70  # 50 unifold + 20 multifold
    assert len(plan_experiment("E", partitions, 0)) == 40
    assert len(plan_experiment("F", partitions, 0)) == 400
    assert len(plan_experiment("G", partitions, 0)) == 600


def test_plan_repeat_override():
    specs = plan_experiment("A", [1, 2, 3, 4, 5], 0, repeats=2)
    assert len(specs) == 40


def test_plan_d_shares_fold_seed_within_partition():
    specs = plan_experiment("D", [1, 2], 0, k_folds=3)
    uni = [s for s in specs if s.is_unifold and s.train_partition == 1]
    assert len(uni) == 3
    assert len({s.fold_seed for s in uni}) == 1
    assert sorted(s.fold for s in uni) == [0, 1, 2]


def test_plan_seeds_are_distinct_and_order_independent():
    specs = plan_experiment("A", [1, 2, 3, 4, 5], master_seed=42)
    seeds = [s.seed for s in specs]
    assert len(set(seeds)) == len(seeds)
    again = plan_experiment("A", [1, 2, 3, 4, 5], master_seed=42)
    assert seeds == [s.seed for s in again]


def test_derive_seed_stable():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 2, 4)


def test_default_repeats_match_stochasticity():
    assert DEFAULT_REPEATS["A"] == 10
    assert DEFAULT_REPEATS["C"] == 1


def test_spec_validation():
    with pytest.raises(ValueError):
        TrialSpec(experiment="Q", train_partition=1, test_partition=2)
    with pytest.raises(ValueError):
        TrialSpec(experiment="Z", train_partition=1, test_partition=1)
    with pytest.raises(ValueError):
        TrialSpec(experiment="D", train_partition=1, test_partition=2, fold=0)
    with pytest.raises(ValueError):
        TrialSpec(
            experiment="C", train_partition=1, test_partition=2, remedy="weights"
        )


# --- aggregation -----------------------------------------------------------------


def _result_with_tss(spec, tss_value):
    from flarebench.harness import TrialResult
    from flarebench.metrics import ConfusionMatrix

    cm = ConfusionMatrix(tp=1, fp=1, tn=1, fn=1)
    scores = {"tss": tss_value, "hss": 0.0, "accuracy": 0.5, "precision": 0.5,
              "recall": 0.5, "f1": 0.5}
    return TrialResult(spec, cm, scores, 0.0)


def test_aggregate_constant_repeats():
    spec = lambda r: TrialSpec(
        experiment="A", train_partition=1, test_partition=2, remedy="US2", repeat=r
    )
    rows = aggregate([_result_with_tss(spec(r), 0.7) for r in range(3)])
    assert len(rows) == 1
    assert rows[0].tss_mean == pytest.approx(0.7)
    assert rows[0].tss_var == 0.0
    assert rows[0].n_trials == 3


def test_aggregate_two_repeats_hand_value():
    spec = lambda r: TrialSpec(
        experiment="A", train_partition=1, test_partition=2, remedy="US2", repeat=r
    )
    rows = aggregate([_result_with_tss(spec(0), 0.6), _result_with_tss(spec(1), 0.8)])
    assert rows[0].tss_mean == pytest.approx(0.7, abs=1e-12)
    assert rows[0].tss_var == pytest.approx(0.02, abs=1e-12)


def test_aggregate_matches_numpy_recount():
    rng = np.random.default_rng(0)
    values = rng.uniform(-1, 1, size=10)
    spec = lambda r: TrialSpec(
        experiment="B", train_partition=2, test_partition=3, remedy="OS3", repeat=r
    )
    rows = aggregate([_result_with_tss(spec(r), v) for r, v in enumerate(values)])
    assert rows[0].tss_mean == pytest.approx(float(np.mean(values)), abs=1e-12)
    assert rows[0].tss_var == pytest.approx(float(np.var(values, ddof=1)), abs=1e-12)


def test_aggregate_collapses_unifold_folds():
    specs = [
        TrialSpec(
            experiment="D",
            train_partition=1,
            test_partition=1,
            remedy="weights",
            weight_mode="ratio",
            fold=i,
            n_folds=4,
        )
        for i in range(4)
    ]
    rows = aggregate([_result_with_tss(s, 0.5 + 0.01 * i) for i, s in enumerate(specs)])
    assert len(rows) == 1
    assert rows[0].n_trials == 4
