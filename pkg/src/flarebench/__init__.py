"""Desk-scale workbench for rare-event multivariate time-series classification.

Pipeline: synthetic partitioned data generation -> per-slice statistical
features -> zero-one normalization -> resampling or class-weight remedies ->
weighted kernel SVM -> skill-score evaluation over partition pairs or
within-partition folds.
"""

from .core import (
    ClassCounts,
    FeatureRecord,
    FlareClass,
    MVTSSlice,
    SuperClass,
    count_classes,
    to_superclass,
)
from .features import FEATURE_SETS, StatKind, compute_stat, extract_features, interpolate_missing
from .harness import (
    TrialResult,
    TrialSpec,
    aggregate,
    multifold_matrix,
    plan_experiment,
    run_trial,
    run_trials,
    unifold_folds,
)
from .metrics import ConfusionMatrix, accuracy, confusion, f1, hss, precision, recall, tss
from .normalize import NormalizationStats, fit_extrema
from .sampling import ClassWeights, SamplingPlan, compute_weights, execute_plan, make_plan
from .svm import SvmConfig, SvmModel, kernel, predict, train
from .synthgen import Dataset, GenConfig, generate, inject_missing

__version__ = "0.1.0"

__all__ = [
    "ClassCounts",
    "ClassWeights",
    "ConfusionMatrix",
    "Dataset",
    "FEATURE_SETS",
    "FeatureRecord",
    "FlareClass",
    "GenConfig",
    "MVTSSlice",
    "NormalizationStats",
    "SamplingPlan",
    "StatKind",
    "SuperClass",
    "SvmConfig",
    "SvmModel",
    "TrialResult",
    "TrialSpec",
    "accuracy",
    "aggregate",
    "compute_stat",
    "compute_weights",
    "confusion",
    "count_classes",
    "execute_plan",
    "extract_features",
    "f1",
    "fit_extrema",
    "generate",
    "hss",
    "inject_missing",
    "interpolate_missing",
    "kernel",
    "make_plan",
    "multifold_matrix",
    "plan_experiment",
    "precision",
    "predict",
    "recall",
    "run_trial",
    "run_trials",
    "to_superclass",
    "train",
    "tss",
    "unifold_folds",
]
