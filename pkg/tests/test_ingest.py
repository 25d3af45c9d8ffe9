import os

import numpy as np
import pytest

from flarebench.core import FeatureRecord, FlareClass, SuperClass
from flarebench.features import extract_features
from flarebench.ingest import (
    DataFormatError,
    DatasetManifest,
    read_dataset,
    read_features,
    read_manifest,
    read_slices,
    read_trials,
    write_dataset,
    write_features,
    write_manifest,
    write_slices,
    write_trials,
)
from flarebench.metrics import ConfusionMatrix
from flarebench.synthgen import GenConfig, generate, inject_missing
from test_synthgen import small_config


@pytest.fixture(scope="module")
def small_dataset():
    return inject_missing(generate(small_config()), 0.002, seed=4)


def test_dataset_roundtrip(tmp_path, small_dataset):
    data_dir = str(tmp_path / "data")
    manifest = write_dataset(small_dataset, data_dir)
    assert manifest.partitions == small_dataset.partitions
    back = read_dataset(data_dir)
    assert back.n_params == small_dataset.n_params
    for p in small_dataset.partitions:
        orig = small_dataset.slices_by_partition[p]
        got = back.slices_by_partition[p]
        assert len(got) == len(orig)
        for a, b in zip(orig, got):
            assert a.uid == b.uid
            assert a.label is b.label
            assert np.array_equal(a.missing, b.missing)
            assert np.array_equal(
                a.values[~a.missing], b.values[~b.missing]
            )  # exact float round trip


def test_write_twice_is_byte_identical(tmp_path, small_dataset):
    d1, d2 = str(tmp_path / "a"), str(tmp_path / "b")
    write_dataset(small_dataset, d1)
    write_dataset(small_dataset, d2)
    for name in sorted(os.listdir(d1)):
        with open(os.path.join(d1, name), "rb") as f1, open(
            os.path.join(d2, name), "rb"
        ) as f2:
            assert f1.read() == f2.read(), name


def test_missing_cells_written_as_empty(tmp_path, small_dataset):
    data_dir = str(tmp_path / "data")
    write_dataset(small_dataset, data_dir)
    some_missing = any(
        s.missing.any()
        for p in small_dataset.partitions
        for s in small_dataset.slices_by_partition[p]
    )
    assert some_missing
    text = open(os.path.join(data_dir, "raw_p1.csv")).read()
    assert ",," in text or text.rstrip().endswith(",")


def test_reader_rejects_malformed_float(tmp_path, small_dataset):
    data_dir = str(tmp_path / "data")
    write_dataset(small_dataset, data_dir)
    path = os.path.join(data_dir, "raw_p1.csv")
    lines = open(path).read().splitlines()
    parts = lines[3].split(",")
    parts[-1] = "not-a-number"
    lines[3] = ",".join(parts)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    manifest = read_manifest(data_dir)
    with pytest.raises(DataFormatError, match=r"raw_p1\.csv:4"):
        read_slices(manifest, 1, data_dir)


def test_reader_rejects_missing_step_row(tmp_path, small_dataset):
    data_dir = str(tmp_path / "data")
    write_dataset(small_dataset, data_dir)
    path = os.path.join(data_dir, "raw_p1.csv")
    lines = open(path).read().splitlines()
    del lines[5]  # drop one timestep of the first slice
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    manifest = read_manifest(data_dir)
    with pytest.raises(DataFormatError):
        read_slices(manifest, 1, data_dir)


def test_reader_rejects_wrong_partition_rows(tmp_path, small_dataset):
    data_dir = str(tmp_path / "data")
    write_dataset(small_dataset, data_dir)
    manifest = read_manifest(data_dir)
    # point partition 1 at partition 2's file
    files = dict(manifest.partition_files)
    files[1] = files[2]
    bad = DatasetManifest(
        n_params=manifest.n_params,
        steps_per_slice=manifest.steps_per_slice,
        param_names=manifest.param_names,
        partition_files=files,
    )
    with pytest.raises(DataFormatError, match="partition"):
        read_slices(bad, 1, data_dir)


def test_manifest_missing_file_detected(tmp_path, small_dataset):
    data_dir = str(tmp_path / "data")
    manifest = write_dataset(small_dataset, data_dir)
    os.remove(os.path.join(data_dir, manifest.partition_files[2]))
    with pytest.raises(DataFormatError, match="missing file"):
        read_manifest(data_dir)


def test_event_in_two_partitions_detected(tmp_path, small_dataset):
    data_dir = str(tmp_path / "data")
    manifest = write_dataset(small_dataset, data_dir)
    # copy partition 1's file over partition 2, then fix the partition column
    p1 = os.path.join(data_dir, manifest.partition_files[1])
    p2 = os.path.join(data_dir, manifest.partition_files[2])
    lines = open(p1).read().splitlines()
    fixed = [lines[0]]
    for line in lines[1:]:
        parts = line.split(",")
        parts[1] = "2"
        fixed.append(",".join(parts))
    with open(p2, "w") as fh:
        fh.write("\n".join(fixed) + "\n")
    with pytest.raises(DataFormatError, match="partitions 1 and 2"):
        read_dataset(data_dir)


# --- features -----------------------------------------------------------------


@pytest.fixture(scope="module")
def feature_records(small_dataset):
    slices = [
        s for p in small_dataset.partitions for s in small_dataset.slices_by_partition[p]
    ]
    return extract_features(slices, "ALL")


def test_feature_roundtrip_exact(tmp_path, feature_records):
    path = str(tmp_path / "features.csv")
    write_features(feature_records, path)
    back = read_features(path)
    assert len(back) == len(feature_records)
    for a, b in zip(feature_records, back):
        assert a.slice_uid == b.slice_uid
        assert a.label is b.label
        assert a.superclass is b.superclass
        assert a.feature_names == b.feature_names
        assert np.array_equal(a.features, b.features)


def test_feature_header_dimensionality(tmp_path, feature_records):
    path = str(tmp_path / "features.csv")
    write_features(feature_records, path)
    header = open(path).readline().rstrip("\n").split(",")
    assert len(header) == 6 + 4 * 6  # meta cols + 4 params x 6 stats


def test_feature_file_empty_records(tmp_path):
    path = str(tmp_path / "features.csv")
    write_features([], path)
    assert open(path).read().strip() == "slice_uid,partition_id,event_id,slice_index,class,superclass"
    assert read_features(path) == []


def test_duplicate_uid_rejected_on_write(tmp_path, feature_records):
    path = str(tmp_path / "features.csv")
    with pytest.raises(DataFormatError, match="duplicate"):
        write_features([feature_records[0], feature_records[0]], path)


def test_duplicate_uid_rejected_on_read(tmp_path, feature_records):
    path = str(tmp_path / "features.csv")
    write_features(feature_records[:3], path)
    lines = open(path).read().splitlines()
    lines.append(lines[1])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        read_features(path)


def test_random_records_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    names = tuple(f"p{i}_mean" for i in range(5))
    records = [
        FeatureRecord(
            slice_uid=f"1:e{i}:0",
            event_id=f"e{i}",
            partition_id=1,
            slice_index=0,
            label=FlareClass.X if i % 7 == 0 else FlareClass.B,
            superclass=SuperClass.XM if i % 7 == 0 else SuperClass.CBN,
            features=rng.normal(scale=10.0 ** rng.integers(-8, 8), size=5),
            feature_names=names,
        )
        for i in range(100)
    ]
    path = str(tmp_path / "f.csv")
    write_features(records, path)
    back = read_features(path)
    for a, b in zip(records, back):
        assert np.array_equal(a.features, b.features)


# --- trials -------------------------------------------------------------------


def _fake_results(n):
    from flarebench.harness import TrialResult, TrialSpec

    out = []
    for i in range(n):
        pair = [(a, b) for a in range(1, 6) for b in range(1, 6) if a != b][i % 20]
        spec = TrialSpec(
            experiment="A",
            train_partition=pair[0],
            test_partition=pair[1],
            remedy="US2",
            repeat=i // 20,
            seed=1000 + i,
        )
        cm = ConfusionMatrix(tp=5 + i % 3, fp=2, tn=90, fn=3)
        from flarebench.metrics import score_all

        out.append(TrialResult(spec, cm, score_all(cm), wall_time=0.0))
    return out


def test_trials_row_count_matches(tmp_path):
    path = str(tmp_path / "results.csv")
    write_trials(_fake_results(200), path)
    frame = read_trials(path)
    assert len(frame) == 200


def test_trials_header_only_when_empty(tmp_path):
    path = str(tmp_path / "results.csv")
    write_trials([], path)
    content = open(path).read().strip().splitlines()
    assert len(content) == 1
    assert content[0].startswith("experiment,train_partition")


def test_trials_reparse_matches_memory(tmp_path):
    results = _fake_results(10)
    path = str(tmp_path / "results.csv")
    write_trials(results, path)
    frame = read_trials(path)
    for res, row in zip(results, frame.itertuples(index=False)):
        assert row.experiment == res.spec.experiment
        assert row.train_partition == res.spec.train_partition
        assert row.TP == res.confusion.tp
        assert row.tss == pytest.approx(res.scores["tss"], abs=0)
        assert row.seed == res.spec.seed


def test_trials_append_safe(tmp_path):
    path = str(tmp_path / "results.csv")
    write_trials(_fake_results(5), path)
    write_trials(_fake_results(5), path, append=True)
    frame = read_trials(path)
    assert len(frame) == 10
