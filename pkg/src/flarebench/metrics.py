"""Confusion-matrix bookkeeping and skill scores for binary XM-vs-CBN evaluation.

Positive class is XM throughout. TSS (true skill statistic, also the
Hanssen-Kuipers discriminant) is insensitive to the class-imbalance ratio;
HSS (Heidke skill score) is not, and is logged alongside for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    """A score is undefined for the given confusion matrix."""


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts; positive = XM."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def scaled(self, m: int) -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp * m, self.fp * m, self.tn * m, self.fn * m)


def confusion(predictions, truths) -> ConfusionMatrix:
    """Exact confusion counts from paired +1/-1 sequences (+1 = XM)."""
    pred = np.asarray(predictions)
    true = np.asarray(truths)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {true.shape} truths")
    if pred.size == 0:
        raise ValueError("cannot build a confusion matrix from zero pairs")
    pos_pred = pred > 0
    pos_true = true > 0
    return ConfusionMatrix(
        tp=int(np.sum(pos_pred & pos_true)),
        fp=int(np.sum(pos_pred & ~pos_true)),
        tn=int(np.sum(~pos_pred & ~pos_true)),
        fn=int(np.sum(~pos_pred & pos_true)),
    )


def tss(cm: ConfusionMatrix) -> float:
    """True skill statistic: recall minus false-alarm rate, in [-1, 1]."""
    if cm.tp + cm.fn == 0 or cm.fp + cm.tn == 0:
        raise MetricError("TSS undefined: one class absent from the evaluated sample")
    return cm.tp / (cm.tp + cm.fn) - cm.fp / (cm.fp + cm.tn)


def hss(cm: ConfusionMatrix) -> float:
    """Heidke skill score: skill relative to random chance."""
    denom = (cm.tp + cm.fn) * (cm.fn + cm.tn) + (cm.tp + cm.fp) * (cm.fp + cm.tn)
    if denom == 0:
        raise MetricError("hss undefined: zero denominator")
    return 2.0 * (cm.tp * cm.tn - cm.fn * cm.fp) / denom


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise MetricError("accuracy undefined: empty matrix")
    return (cm.tp + cm.tn) / cm.total


def precision(cm: ConfusionMatrix) -> float:
    if cm.tp + cm.fp == 0:
        raise MetricError("precision undefined: no positive predictions")
    return cm.tp / (cm.tp + cm.fp)


def recall(cm: ConfusionMatrix) -> float:
    if cm.tp + cm.fn == 0:
        raise MetricError("recall undefined: no positive truths")
    return cm.tp / (cm.tp + cm.fn)


def f1(cm: ConfusionMatrix) -> float:
    denom = 2 * cm.tp + cm.fp + cm.fn
    if denom == 0:
        raise MetricError("f1 undefined: zero denominator")
    return 2 * cm.tp / denom


ALL_SCORES = {
    "tss": tss,
    "hss": hss,
    "accuracy": accuracy,
    "precision": precision,
    "recall": recall,
    "f1": f1,
}


def score_all(cm: ConfusionMatrix) -> dict[str, float]:
    """Every score, with NaN where a score is undefined for this matrix.

    Trial bookkeeping needs a value for every results column even when a
    degenerate classifier (e.g. all-negative) leaves precision undefined.
    """
    out: dict[str, float] = {}
    for name, fn in ALL_SCORES.items():
        try:
            out[name] = fn(cm)
        except MetricError:
            out[name] = float("nan")
    return out
