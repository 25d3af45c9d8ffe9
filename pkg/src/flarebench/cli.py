"""Command-line entry point: gen, extract, run, report.

Configuration comes from flags, optionally backed by a key=value config file
(flags win). Exit codes: 0 success, 2 configuration error, 3 data error,
4 one or more trials failed.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .core import CLASS_ORDER
from .features import extract_features, feature_names, resolve_feature_set
from .harness import (
    EXPERIMENT_IDS,
    REMEDIES,
    aggregate,
    derive_seed,
    plan_experiment,
    run_trials,
    spec_sort_key,
)
from .ingest import (
    FLOAT_FMT,
    DataFormatError,
    read_dataset,
    read_features,
    read_manifest,
    read_trials,
    write_dataset,
    write_features,
    write_trials,
)
from .sampling import SamplingError
from .svm import SvmConfig
from .synthgen import GenConfig, GenerationError, generate, inject_missing

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRIALS = 4


class ConfigError(ValueError):
    pass


def _parse_config_file(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merge_config(args: argparse.Namespace) -> None:
    """Fill in unset flags from the config file; flags always win."""
    if not getattr(args, "config", None):
        return
    file_values = _parse_config_file(args.config)
    for key, value in file_values.items():
        if not hasattr(args, key):
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, key) is None:
            setattr(args, key, value)


def _csv_ints(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v != ""]


def _csv_floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v != ""]


def _csv_names(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        tokens = []
        for item in text:
            tokens.extend(str(item).split(","))
    else:
        tokens = str(text).split(",")
    return [t.strip() for t in tokens if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flarebench",
        description="Generate synthetic flare-style MVTS data, extract features, "
        "and run the class-imbalance / data-split experiment matrix.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file; flags win")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--data-dir", dest="data_dir", default=None)
    common.add_argument("--out-dir", dest="out_dir", default=None)

    gen = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    gen.add_argument("--partitions", type=int, default=None)
    gen.add_argument(
        "--events",
        default=None,
        help="events per class per partition as X,M,C,B,N (e.g. 4,16,80,120,180)",
    )
    gen.add_argument("--n-params", dest="n_params", type=int, default=None)
    gen.add_argument("--steps", type=int, default=None, help="steps per slice")
    gen.add_argument("--slices-per-event", dest="slices_per_event", type=int, default=None)
    gen.add_argument("--stride", type=int, default=None)
    gen.add_argument("--phi", type=float, default=None, help="AR coefficient")
    gen.add_argument("--sigma", type=float, default=None, help="innovation scale")
    gen.add_argument("--class-signal", dest="class_signal", type=float, default=None)
    gen.add_argument("--amplitudes", default=None, help="per-partition multipliers")
    gen.add_argument("--noise-gain", dest="noise_gain", type=float, default=None)
    gen.add_argument("--event-coherence", dest="event_coherence", type=float, default=None)
    gen.add_argument("--missing-rate", dest="missing_rate", type=float, default=None)

    ext = sub.add_parser("extract", parents=[common], help="extract feature files")
    ext.add_argument(
        "--features",
        default=None,
        help="comma-separated feature sets (LAST, STD, FOUR, ALL); default ALL",
    )

    run = sub.add_parser("run", parents=[common], help="run experiments")
    run.add_argument("experiments", nargs="*", help="experiment ids Z..G")
    run.add_argument(
        "--experiments",
        dest="experiments_flag",
        default=None,
        help="comma-separated experiment ids (alternative to positionals)",
    )
    run.add_argument("--remedy", default=None, help="override remedy for all trials")
    run.add_argument(
        "--normalization", choices=("global", "local"), default=None, help="override scope"
    )
    run.add_argument("--features", default=None, help="override feature set for all trials")
    run.add_argument("--c", dest="c", type=float, default=None, help="SVM penalty")
    run.add_argument("--gamma", type=float, default=None, help="RBF width")
    run.add_argument("--kkt-tolerance", dest="kkt_tolerance", type=float, default=None)
    run.add_argument("--max-passes", dest="max_passes", type=int, default=None)
    run.add_argument("--repeats", type=int, default=None)
    run.add_argument("--jobs", type=int, default=None)
    run.add_argument(
        "--norm-scope",
        dest="norm_scope",
        choices=("pair", "all"),
        default=None,
        help="global normalization fits on the trial pair (default) or on all partitions",
    )

    rep = sub.add_parser("report", parents=[common], help="summarize results files")
    rep.add_argument("--results-dir", dest="results_dir", default=None)
    return parser


def cmd_gen(args: argparse.Namespace) -> int:
    data_dir = args.data_dir or "data"
    kwargs: dict = {}
    if args.seed is not None:
        kwargs["seed"] = int(args.seed)
    if args.partitions is not None:
        kwargs["n_partitions"] = int(args.partitions)
    if args.events is not None:
        values = _csv_ints(args.events)
        if len(values) != 5:
            raise ConfigError("--events needs exactly five counts (X,M,C,B,N)")
        kwargs["events_per_class"] = dict(zip(CLASS_ORDER, values))
    if args.n_params is not None:
        kwargs["n_params"] = int(args.n_params)
    if args.steps is not None:
        kwargs["steps_per_slice"] = int(args.steps)
    if args.slices_per_event is not None:
        kwargs["slices_per_event"] = int(args.slices_per_event)
    if args.stride is not None:
        kwargs["stride"] = int(args.stride)
    if args.phi is not None:
        kwargs["ar_coefficient"] = float(args.phi)
    if args.sigma is not None:
        kwargs["noise_sigma"] = float(args.sigma)
    if args.class_signal is not None:
        kwargs["class_signal"] = float(args.class_signal)
    if args.amplitudes is not None:
        kwargs["amplitudes"] = tuple(_csv_floats(args.amplitudes))
    if args.noise_gain is not None:
        kwargs["class_noise_gain"] = float(args.noise_gain)
    if args.event_coherence is not None:
        kwargs["event_coherence"] = float(args.event_coherence)
    if args.missing_rate is not None:
        kwargs["missing_rate"] = float(args.missing_rate)

    config = GenConfig(**kwargs)
    dataset = generate(config)
    dataset = inject_missing(
        dataset, config.missing_rate, seed=derive_seed(config.seed, 0xD1CE)
    )
    manifest = write_dataset(dataset, data_dir)
    print(f"wrote manifest + {len(manifest.partition_files)} partition files to {data_dir}")
    print(f"  {dataset.n_slices} slices, {config.n_params} params, "
          f"{config.steps_per_slice} steps per slice")
    return EXIT_OK


def features_path(data_dir: str, feature_set: str) -> str:
    return os.path.join(data_dir, f"features_{feature_set.upper()}.csv")


def cmd_extract(args: argparse.Namespace) -> int:
    data_dir = args.data_dir or "data"
    sets = _csv_names(args.features) if args.features else ["ALL"]
    for name in sets:
        resolve_feature_set(name)  # validates early
    dataset = read_dataset(data_dir)
    all_slices = [s for p in dataset.partitions for s in dataset.slices_by_partition[p]]
    for name in sets:
        records = extract_features(all_slices, name, dataset.param_names)
        path = features_path(data_dir, name)
        write_features(records, path)
        n_cols = len(records[0].feature_names) if records else 0
        print(f"wrote {len(records)} records x {n_cols} features to {path}")
    return EXIT_OK


def _load_feature_space(data_dir: str, feature_set: str) -> dict[int, list]:
    """Feature records for one set, grouped by partition.

    Prefers a dedicated features_<SET>.csv; otherwise projects the columns
    out of features_ALL.csv (identical values, identical order).
    """
    feature_set = feature_set.upper()
    path = features_path(data_dir, feature_set)
    if os.path.exists(path):
        records = read_features(path)
    else:
        all_path = features_path(data_dir, "ALL")
        if not os.path.exists(all_path):
            raise DataFormatError(
                f"no feature file for set {feature_set} and no {all_path} to project "
                "from; run the extract command first"
            )
        records = read_features(all_path)
        manifest = read_manifest(data_dir)
        wanted = feature_names(manifest.param_names, resolve_feature_set(feature_set))
        index = {n: i for i, n in enumerate(records[0].feature_names)}
        missing = [n for n in wanted if n not in index]
        if missing:
            raise DataFormatError(
                f"{all_path} lacks columns needed for {feature_set}: {missing[:4]}"
            )
        cols = np.array([index[n] for n in wanted])
        records = [
            replace(r, features=r.features[cols], feature_names=wanted) for r in records
        ]
    grouped: dict[int, list] = {}
    for r in records:
        grouped.setdefault(r.partition_id, []).append(r)
    return grouped


def cmd_run(args: argparse.Namespace) -> int:
    data_dir = args.data_dir or "data"
    out_dir = args.out_dir or "results"
    experiments = [e.upper() for e in _csv_names(args.experiments or [])]
    if args.experiments_flag:
        experiments.extend(e.upper() for e in _csv_names(args.experiments_flag))
    if not experiments:
        raise ConfigError("no experiments requested; pass ids like: run Z A B")
    unknown = [e for e in experiments if e not in EXPERIMENT_IDS]
    if unknown:
        raise ConfigError(f"unknown experiment ids {unknown}; valid ids {EXPERIMENT_IDS}")
    if args.remedy is not None:
        base = args.remedy.split(":", 1)[0]
        if base not in REMEDIES:
            raise ConfigError(f"unknown remedy {args.remedy!r}")
    master_seed = int(args.seed) if args.seed is not None else 0
    jobs = int(args.jobs) if args.jobs is not None else 1
    repeats = int(args.repeats) if args.repeats is not None else None

    svm_kwargs: dict = {}
    if args.c is not None:
        svm_kwargs["c"] = float(args.c)
    if args.gamma is not None:
        svm_kwargs["gamma"] = float(args.gamma)
    if args.kkt_tolerance is not None:
        svm_kwargs["kkt_tolerance"] = float(args.kkt_tolerance)
    if args.max_passes is not None:
        svm_kwargs["max_passes"] = int(args.max_passes)
    svm_config = SvmConfig(**svm_kwargs)
    norm_all = args.norm_scope == "all"

    manifest = read_manifest(data_dir)
    partitions = manifest.partitions
    os.makedirs(out_dir, exist_ok=True)

    spaces: dict[str, dict[int, list]] = {}
    any_failure = False
    for exp in experiments:
        specs = plan_experiment(
            exp,
            partitions,
            master_seed,
            repeats=repeats,
            remedy_override=args.remedy,
            normalization_override=args.normalization,
            feature_set_override=args.features,
        )
        results = []
        failures = []
        by_set: dict[str, list] = {}
        for spec in specs:
            by_set.setdefault(spec.feature_set.upper(), []).append(spec)
        for fs, group in sorted(by_set.items()):
            if fs not in spaces:
                spaces[fs] = _load_feature_space(data_dir, fs)
            got, bad = run_trials(
                group, spaces[fs], svm_config, jobs=jobs, norm_all_partitions=norm_all
            )
            results.extend(got)
            failures.extend(bad)

        results.sort(key=lambda r: spec_sort_key(r.spec))
        results_file = os.path.join(out_dir, f"results_{exp}.csv")
        write_trials(results, results_file)
        _write_summary(aggregate(results), os.path.join(out_dir, f"summary_{exp}.csv"))
        print(f"experiment {exp}: {len(results)} trials -> {results_file}")
        for f in failures:
            any_failure = True
            print(
                f"TRIAL FAILED [{f.stage}] {exp} train={f.spec.train_partition} "
                f"test={f.spec.test_partition} repeat={f.spec.repeat}: {f.message}",
                file=sys.stderr,
            )
    return EXIT_TRIALS if any_failure else EXIT_OK



def _write_summary(rows, path: str) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "experiment",
                "remedy",
                "normalization",
                "feature_set",
                "train_partition",
                "test_partition",
                "n_trials",
                "tss_mean",
                "tss_var",
            ]
        )
        for a in rows:
            writer.writerow(
                [
                    a.experiment,
                    a.remedy,
                    a.normalization,
                    a.feature_set,
                    a.train_partition,
                    a.test_partition,
                    a.n_trials,
                    FLOAT_FMT % a.tss_mean,
                    FLOAT_FMT % a.tss_var,
                ]
            )


def _series_label(exp: str, row) -> str:
    if exp == "D":
        return "unifold" if row.train_partition == row.test_partition else "multifold"
    if exp == "E":
        return str(row.normalization)
    if exp == "G":
        return str(row.feature_set)
    return str(row.remedy)


def cmd_report(args: argparse.Namespace) -> int:
    import csv

    results_dir = args.results_dir or args.out_dir or "results"
    if not os.path.isdir(results_dir):
        raise DataFormatError(f"results directory not found: {results_dir}")
    files = sorted(
        f for f in os.listdir(results_dir)
        if f.startswith("results_") and f.endswith(".csv")
    )
    report_path = os.path.join(results_dir, "report.csv")
    with open(report_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["experiment", "series", "pair", "n", "tss_mean", "tss_std"])
        for fname in files:
            frame = read_trials(os.path.join(results_dir, fname))
            if frame.empty:
                continue
            exp = str(frame["experiment"].iloc[0])
            groups: dict[tuple[str, str], list[float]] = {}
            for row in frame.itertuples(index=False):
                series = _series_label(exp, row)
                if exp == "D" and row.train_partition == row.test_partition:
                    pair = f"P{row.train_partition}"
                else:
                    pair = f"P{row.train_partition}-P{row.test_partition}"
                groups.setdefault((series, pair), []).append(float(row.tss))
            plot_path = os.path.join(results_dir, f"plot_{exp}.csv")
            with open(plot_path, "w", newline="") as pfh:
                plot_writer = csv.writer(pfh, lineterminator="\n")
                plot_writer.writerow(["series", "x", "mean", "std"])
                for (series, pair), values in sorted(groups.items()):
                    arr = np.asarray(values)
                    mean = float(np.mean(arr))
                    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
                    writer.writerow(
                        [exp, series, pair, arr.size, FLOAT_FMT % mean, FLOAT_FMT % std]
                    )
                    plot_writer.writerow([series, pair, FLOAT_FMT % mean, FLOAT_FMT % std])
            print(f"{exp}: {len(groups)} series/pair aggregates")
    print(f"report written to {report_path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "extract":
            return cmd_extract(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "report":
            return cmd_report(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, GenerationError, SamplingError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
