"""On-disk formats for raw slices, feature datasets, and trial results.

All three formats are comma-delimited text with a mandatory header row.
Reals are serialized in decimal scientific notation with 18 significant
digits, so every float64 round-trips exactly; an empty cell in a raw slice
file means a missing value. Readers reject shape inconsistencies instead of
truncating.

Raw slice format (one file per partition, long form, one row per timestep):
    event_id,partition_id,class,slice_index,step,<param>,...

Feature format (one row per slice):
    slice_uid,partition_id,event_id,slice_index,class,superclass,<param>_<stat>,...

Results format (one row per trial):
    experiment,train_partition,test_partition,repeat,remedy,normalization,
    feature_set,seed,TP,FP,TN,FN,tss,hss,accuracy,precision,recall,f1
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .core import FeatureRecord, FlareClass, MVTSSlice, SuperClass, to_superclass
from .synthgen import Dataset

FORMAT_VERSION = "1"
FLOAT_FMT = "%.17e"

RAW_META_COLS = ["event_id", "partition_id", "class", "slice_index", "step"]
FEATURE_META_COLS = [
    "slice_uid",
    "partition_id",
    "event_id",
    "slice_index",
    "class",
    "superclass",
]
RESULT_COLS = [
    "experiment",
    "train_partition",
    "test_partition",
    "repeat",
    "remedy",
    "normalization",
    "feature_set",
    "seed",
    "TP",
    "FP",
    "TN",
    "FN",
    "tss",
    "hss",
    "accuracy",
    "precision",
    "recall",
    "f1",
]


class DataFormatError(ValueError):
    """Malformed or inconsistent on-disk data; message carries file context."""


@dataclass(frozen=True)
class DatasetManifest:
    n_params: int
    steps_per_slice: int
    param_names: tuple[str, ...]
    partition_files: dict[int, str]
    format_version: str = FORMAT_VERSION

    def __post_init__(self) -> None:
        if len(self.param_names) != self.n_params:
            raise DataFormatError(
                f"manifest lists {len(self.param_names)} param names "
                f"for n_params={self.n_params}"
            )

    @property
    def partitions(self) -> list[int]:
        return sorted(self.partition_files)


def manifest_path(data_dir: str) -> str:
    return os.path.join(data_dir, "manifest.json")


def write_manifest(manifest: DatasetManifest, data_dir: str) -> str:
    path = manifest_path(data_dir)
    payload = {
        "format_version": manifest.format_version,
        "n_params": manifest.n_params,
        "steps_per_slice": manifest.steps_per_slice,
        "param_names": list(manifest.param_names),
        "partition_files": {str(p): f for p, f in sorted(manifest.partition_files.items())},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(data_dir: str) -> DatasetManifest:
    path = manifest_path(data_dir)
    if not os.path.exists(path):
        raise DataFormatError(f"no manifest at {path}")
    with open(path) as fh:
        payload = json.load(fh)
    manifest = DatasetManifest(
        n_params=int(payload["n_params"]),
        steps_per_slice=int(payload["steps_per_slice"]),
        param_names=tuple(payload["param_names"]),
        partition_files={int(p): f for p, f in payload["partition_files"].items()},
        format_version=str(payload["format_version"]),
    )
    for p, fname in manifest.partition_files.items():
        full = os.path.join(data_dir, fname)
        if not os.path.exists(full):
            raise DataFormatError(f"manifest references missing file {full} (partition {p})")
    return manifest


def _format_float_block(block: np.ndarray) -> list[list[str]]:
    """Scientific-notation strings; NaN becomes the empty cell."""
    flat = [("" if np.isnan(v) else FLOAT_FMT % v) for v in block.ravel()]
    n = block.shape[1]
    return [flat[i : i + n] for i in range(0, len(flat), n)]


def write_slices(slices: Sequence[MVTSSlice], path: str, param_names: Sequence[str]) -> None:
    """Write one partition's slices in the long-form raw format."""
    row_fmt = ",".join([FLOAT_FMT] * len(param_names))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RAW_META_COLS + list(param_names)) + "\n")
        for s in slices:
            if s.n_params != len(param_names):
                raise DataFormatError(
                    f"slice {s.uid} has {s.n_params} params, header has {len(param_names)}"
                )
            if any(ch in s.event_id for ch in ',"\n'):
                raise DataFormatError(f"event id {s.event_id!r} is not CSV-safe")
            prefix = f"{s.event_id},{s.partition_id},{s.label.value},{s.slice_index},"
            if s.missing.any():
                values = s.values.copy()
                values[s.missing] = np.nan
                text = _format_float_block(values)
                lines = [
                    f"{prefix}{step}," + ",".join(cells)
                    for step, cells in enumerate(text)
                ]
            else:
                lines = [
                    f"{prefix}{step}," + row_fmt % tuple(row)
                    for step, row in enumerate(s.values)
                ]
            fh.write("\n".join(lines) + "\n")


def write_dataset(dataset: Dataset, data_dir: str) -> DatasetManifest:
    """Write manifest plus one raw file per partition."""
    os.makedirs(data_dir, exist_ok=True)
    partition_files = {p: f"raw_p{p}.csv" for p in dataset.partitions}
    for p, fname in partition_files.items():
        write_slices(
            dataset.slices_by_partition[p],
            os.path.join(data_dir, fname),
            dataset.param_names,
        )
    manifest = DatasetManifest(
        n_params=dataset.n_params,
        steps_per_slice=dataset.steps_per_slice,
        param_names=dataset.param_names,
        partition_files=partition_files,
    )
    write_manifest(manifest, data_dir)
    return manifest


def _locate_bad_cell(path: str, n_meta: int, n_params: int) -> str:
    """Best-effort diagnosis of the first malformed row for error messages."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return f"{path}: file is empty"
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_meta + n_params:
                return f"{path}:{lineno}: expected {n_meta + n_params} columns, found {len(row)}"
            for col in (1, 3, 4):
                try:
                    int(row[col])
                except ValueError:
                    return f"{path}:{lineno}: non-integer value {row[col]!r} in column {col + 1}"
            if row[2] not in FlareClass.__members__:
                return f"{path}:{lineno}: unknown class label {row[2]!r}"
            for col in range(n_meta, n_meta + n_params):
                cell = row[col]
                if cell == "":
                    continue
                try:
                    float(cell)
                except ValueError:
                    return f"{path}:{lineno}: unparseable value {cell!r} in column {col + 1}"
    return f"{path}: malformed content"


def read_slices(manifest: DatasetManifest, partition_id: int, data_dir: str) -> list[MVTSSlice]:
    """Read one partition: slices grouped by event, ordered by slice index."""
    if partition_id not in manifest.partition_files:
        raise DataFormatError(f"manifest has no partition {partition_id}")
    path = os.path.join(data_dir, manifest.partition_files[partition_id])
    dtypes: dict[str, object] = {
        "event_id": str,
        "partition_id": np.int64,
        "class": str,
        "slice_index": np.int64,
        "step": np.int64,
    }
    for name in manifest.param_names:
        dtypes[name] = np.float64
    try:
        frame = pd.read_csv(path, dtype=dtypes, float_precision="round_trip")
    except (ValueError, pd.errors.ParserError):
        raise DataFormatError(
            _locate_bad_cell(path, len(RAW_META_COLS), manifest.n_params)
        ) from None
    expected_cols = RAW_META_COLS + list(manifest.param_names)
    if list(frame.columns) != expected_cols:
        raise DataFormatError(
            f"{path}: header {list(frame.columns)[:8]}... does not match manifest columns"
        )
    bad_class = ~frame["class"].isin(FlareClass.__members__)
    if bad_class.any():
        row = int(np.flatnonzero(bad_class.to_numpy())[0])
        raise DataFormatError(
            f"{path}:{row + 2}: unknown class label {frame['class'].iloc[row]!r}"
        )
    if (frame["partition_id"] != partition_id).any():
        raise DataFormatError(
            f"{path}: contains rows for a partition other than {partition_id}"
        )

    steps = manifest.steps_per_slice
    if len(frame) == 0:
        return []
    if len(frame) % steps != 0:
        raise DataFormatError(
            f"{path}: {len(frame)} rows is not a multiple of steps_per_slice={steps}"
        )
    values_block = frame[list(manifest.param_names)].to_numpy(dtype=float)

    # order rows (event in first-appearance order, slice_index, step) and cut
    # into fixed-size blocks; any duplicate/missing step breaks the pattern
    event_codes, event_ids = pd.factorize(frame["event_id"])
    slice_idx = frame["slice_index"].to_numpy()
    step = frame["step"].to_numpy()
    order = np.lexsort((step, slice_idx, event_codes))
    ec = event_codes[order].reshape(-1, steps)
    si = slice_idx[order].reshape(-1, steps)
    st = step[order].reshape(-1, steps)
    vals = values_block[order].reshape(-1, steps, manifest.n_params)
    if (ec != ec[:, :1]).any() or (si != si[:, :1]).any() or (st != np.arange(steps)).any():
        bad = np.flatnonzero(
            (ec != ec[:, :1]).any(axis=1)
            | (si != si[:, :1]).any(axis=1)
            | (st != np.arange(steps)).any(axis=1)
        )[0]
        raise DataFormatError(
            f"{path}: event {event_ids[ec[bad, 0]]} slice {si[bad, 0]} does not "
            f"consist of exactly steps 0..{steps - 1}"
        )
    block_event = ec[:, 0]
    block_slice = si[:, 0]

    class_codes = frame["class"].to_numpy()[order].reshape(-1, steps)[:, 0]
    labels_by_event: dict[int, FlareClass] = {}
    slices: list[MVTSSlice] = []
    for b in range(len(block_event)):
        e = int(block_event[b])
        label = FlareClass(class_codes[b])
        prev = labels_by_event.setdefault(e, label)
        if prev is not label:
            raise DataFormatError(
                f"{path}: event {event_ids[e]} has conflicting class labels"
            )
        block = vals[b]
        slices.append(
            MVTSSlice(
                event_id=str(event_ids[e]),
                partition_id=partition_id,
                slice_index=int(block_slice[b]),
                label=label,
                values=block,
                missing=np.isnan(block),
            )
        )

    # slice indices of each event must be a contiguous range from 0
    for e in range(len(event_ids)):
        mine = block_slice[block_event == e]
        if not np.array_equal(mine, np.arange(mine.size)):
            raise DataFormatError(
                f"{path}: event {event_ids[e]} slice indices are not contiguous from 0"
            )
    return slices


def read_dataset(data_dir: str) -> Dataset:
    """Read every partition and cross-check that no event spans partitions."""
    manifest = read_manifest(data_dir)
    slices_by_partition = {
        p: read_slices(manifest, p, data_dir) for p in manifest.partitions
    }
    seen: dict[str, int] = {}
    for p, slices in slices_by_partition.items():
        for s in slices:
            prev = seen.setdefault(s.event_id, p)
            if prev != p:
                raise DataFormatError(
                    f"event {s.event_id} appears in partitions {prev} and {p}"
                )
    return Dataset(
        n_params=manifest.n_params,
        steps_per_slice=manifest.steps_per_slice,
        param_names=manifest.param_names,
        slices_by_partition=slices_by_partition,
    )


def write_features(records: Sequence[FeatureRecord], path: str) -> None:
    """One row per slice; rejects duplicate slice uids."""
    names: tuple[str, ...] = records[0].feature_names if records else ()
    seen: set[str] = set()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_META_COLS + list(names))
        for r in records:
            if r.feature_names != names:
                raise DataFormatError(
                    f"record {r.slice_uid} disagrees on feature columns"
                )
            if r.slice_uid in seen:
                raise DataFormatError(f"duplicate slice_uid {r.slice_uid}")
            seen.add(r.slice_uid)
            writer.writerow(
                [
                    r.slice_uid,
                    r.partition_id,
                    r.event_id,
                    r.slice_index,
                    r.label.value,
                    r.superclass.value,
                ]
                + [FLOAT_FMT % v for v in r.features]
            )


def read_features(path: str) -> list[FeatureRecord]:
    if not os.path.exists(path):
        raise DataFormatError(f"no feature file at {path}")
    frame = pd.read_csv(
        path,
        float_precision="round_trip",
        dtype={
            "slice_uid": str,
            "partition_id": np.int64,
            "event_id": str,
            "slice_index": np.int64,
            "class": str,
            "superclass": str,
        },
    )
    if list(frame.columns[: len(FEATURE_META_COLS)]) != FEATURE_META_COLS:
        raise DataFormatError(f"{path}: unexpected feature-file header")
    names = tuple(frame.columns[len(FEATURE_META_COLS) :])
    if frame["slice_uid"].duplicated().any():
        dup = frame["slice_uid"][frame["slice_uid"].duplicated()].iloc[0]
        raise DataFormatError(f"{path}: duplicate slice_uid {dup}")
    block = frame[list(names)].to_numpy(dtype=float)
    if np.isnan(block).any():
        raise DataFormatError(f"{path}: feature values must not be missing")
    records = []
    for i, row in enumerate(frame.itertuples(index=False)):
        label = FlareClass(row[4])
        superclass = SuperClass(row[5])
        if to_superclass(label) is not superclass:
            raise DataFormatError(
                f"{path}: slice {row[0]} superclass {superclass.value} "
                f"inconsistent with class {label.value}"
            )
        records.append(
            FeatureRecord(
                slice_uid=row[0],
                partition_id=int(row[1]),
                event_id=row[2],
                slice_index=int(row[3]),
                label=label,
                superclass=superclass,
                features=block[i],
                feature_names=names,
            )
        )
    return records


def _trial_row(result) -> list:
    spec = result.spec
    cm = result.confusion
    scores = result.scores
    return [
        spec.experiment,
        spec.train_partition,
        spec.test_partition,
        spec.repeat if spec.fold is None else spec.fold,
        spec.remedy_label,
        spec.normalization,
        spec.feature_set,
        spec.seed,
        cm.tp,
        cm.fp,
        cm.tn,
        cm.fn,
    ] + [FLOAT_FMT % scores[k] for k in ("tss", "hss", "accuracy", "precision", "recall", "f1")]


def write_trials(results: Sequence, path: str, append: bool = False) -> None:
    """One row per trial; append mode skips the header when the file exists.

    For unifold trials (train == test partition) the repeat column carries
    the fold index.
    """
    fresh = not (append and os.path.exists(path) and os.path.getsize(path) > 0)
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(RESULT_COLS)
        for result in results:
            writer.writerow(_trial_row(result))


def read_trials(path: str) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"experiment": str, "remedy": str})
    if list(frame.columns) != RESULT_COLS:
        raise DataFormatError(f"{path}: unexpected results header")
    return frame
