"""Synthetic generator for partitioned, sliding-window multivariate time
series with the two pathologies under study: extreme class imbalance and
within-event coherence.

Each event owns one mother series per parameter; its k slices are contiguous
windows cut at multiples of the stride, so adjacent slices share raw values
whenever stride < steps_per_slice. Coherence has two sources, both governed
by the AR coefficient phi:

  * the AR(1) background itself (autocorrelation across neighbouring steps),
  * a per-event background offset drawn with standard deviation
    sigma * phi / sqrt(1 - phi^2) - the slow, event-scale component implied
    by the AR coefficient. It makes slices of one event resemble each other
    even when windows do not overlap, and vanishes at phi = 0 so a coherence
    sweep can turn leakage off.

Partitions share the same class-mean structure and background scale; what
varies per partition is the amplitude multiplier applied to rare impulsive
bursts (spikes) in the series. Burst height tracks the partition's activity
level, so per-partition feature extrema shift measurably while the bulk
class geometry stays put: a single normalization map fitted across a pair
stays consistent, whereas per-partition maps rescale the bulk by very
different (extrema-driven) ranges. Class identity enters the level
(class_signal * strength) and, via class_noise_gain, the background scale,
so spread-based statistics carry class signal too.

All defaults are invented configuration for desk-scale experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .core import CLASS_ORDER, FlareClass, MVTSSlice
from .features import default_param_names

# flare-strength rank reused as the signal multiplier per class
CLASS_STRENGTH = {
    FlareClass.X: 4,
    FlareClass.M: 3,
    FlareClass.C: 2,
    FlareClass.B: 1,
    FlareClass.N: 0,
}

DEFAULT_EVENTS = {
    FlareClass.X: 4,
    FlareClass.M: 16,
    FlareClass.C: 80,
    FlareClass.B: 120,
    FlareClass.N: 180,
}


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_partitions: int = 5
    events_per_class: dict[FlareClass, int] = field(
        default_factory=lambda: dict(DEFAULT_EVENTS)
    )
    n_params: int = 24
    steps_per_slice: int = 64
    slices_per_event: int = 8
    stride: int | None = None  # defaults to steps_per_slice // slices_per_event
    ar_coefficient: float = 0.9
    class_signal: float = 0.5
    noise_sigma: float = 1.0
    amplitudes: tuple[float, ...] = (1.0, 1.3, 0.7, 0.5, 0.9)
    class_noise_gain: float = 0.10
    event_coherence: float = 1.0
    spike_rate: float = 0.006
    spike_scale: float = 7.0
    class_spike_gain: float = 1.0
    missing_rate: float = 0.0001

    def __post_init__(self) -> None:
        if self.n_partitions < 1:
            raise GenerationError("need at least one partition")
        if self.steps_per_slice < 1 or self.slices_per_event < 1:
            raise GenerationError("steps_per_slice and slices_per_event must be >= 1")
        if self.effective_stride < 1:
            raise GenerationError(
                "stride must be >= 1 (steps_per_slice too small for the slice count)"
            )
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise GenerationError("AR coefficient must lie in [0, 1)")
        if len(self.amplitudes) < self.n_partitions:
            raise GenerationError("need one amplitude multiplier per partition")
        if any(v < 1 for v in self.events_per_class.values()):
            raise GenerationError("event counts must be >= 1 for every class used")
        if not 0.0 <= self.missing_rate < 1.0:
            raise GenerationError("missing rate must lie in [0, 1)")
        if not 0.0 <= self.spike_rate < 1.0 or self.spike_scale < 0.0:
            raise GenerationError("spike rate must lie in [0, 1) and scale be >= 0")

    @property
    def effective_stride(self) -> int:
        if self.stride is not None:
            return self.stride
        return self.steps_per_slice // self.slices_per_event

    @property
    def mother_length(self) -> int:
        return self.steps_per_slice + (self.slices_per_event - 1) * self.effective_stride

    @property
    def slices_per_partition(self) -> int:
        return sum(self.events_per_class.values()) * self.slices_per_event

    @property
    def param_names(self) -> tuple[str, ...]:
        return default_param_names(self.n_params)


@dataclass(frozen=True)
class Dataset:
    """In-memory generated dataset: slices per partition plus shape metadata."""

    n_params: int
    steps_per_slice: int
    param_names: tuple[str, ...]
    slices_by_partition: dict[int, list[MVTSSlice]]

    @property
    def partitions(self) -> list[int]:
        return sorted(self.slices_by_partition)

    @property
    def n_slices(self) -> int:
        return sum(len(v) for v in self.slices_by_partition.values())


def _event_mother(
    rng: np.random.Generator, config: GenConfig, cls: FlareClass, amplitude: float
) -> np.ndarray:
    """Mother series for one event, shape (n_params, mother_length)."""
    phi = config.ar_coefficient
    sigma = config.noise_sigma
    strength = CLASS_STRENGTH[cls]
    scale = 1.0 + config.class_noise_gain * strength
    length = config.mother_length

    stationary_sd = sigma / np.sqrt(1.0 - phi * phi)
    innovations = rng.normal(0.0, sigma, size=(config.n_params, length))
    # stationary start: the first sample already has the stationary variance
    innovations[:, 0] = rng.normal(0.0, stationary_sd, size=config.n_params)
    ar = lfilter([1.0], [1.0, -phi], innovations, axis=1)

    offset_sd = config.event_coherence * sigma * phi / np.sqrt(1.0 - phi * phi)
    offsets = rng.normal(0.0, offset_sd, size=(config.n_params, 1)) if offset_sd > 0 else 0.0

    level = config.class_signal * strength
    series = level + scale * (offsets + ar)

    # impulsive bursts: height tracks the partition activity level (the one
    # thing distinguishing partitions), frequency tracks the flare class
    if config.spike_rate > 0.0 and config.spike_scale > 0.0:
        rate = config.spike_rate * (1.0 + config.class_spike_gain * strength)
        hits = rng.random(series.shape) < rate
        if hits.any():
            heights = rng.exponential(
                config.spike_scale * amplitude * sigma, size=int(hits.sum())
            )
            series[hits] += heights
    return series


def generate(config: GenConfig) -> Dataset:
    """Generate all partitions; deterministic given config.seed.

    Events are seeded individually from (seed, partition, event ordinal), so
    the output does not depend on generation order or parallelism.
    """
    stride = config.effective_stride
    steps = config.steps_per_slice
    slices_by_partition: dict[int, list[MVTSSlice]] = {}
    clean_mask = np.zeros((steps, config.n_params), dtype=bool)

    for p in range(1, config.n_partitions + 1):
        amplitude = config.amplitudes[p - 1]
        slices: list[MVTSSlice] = []
        ordinal = 0
        for cls in CLASS_ORDER:
            for _ in range(config.events_per_class.get(cls, 0)):
                seq = np.random.SeedSequence([config.seed, p, ordinal])
                rng = np.random.default_rng(seq)
                mother = _event_mother(rng, config, cls, amplitude)
                event_id = f"P{p}E{ordinal:04d}"
                for j in range(config.slices_per_event):
                    window = mother[:, j * stride : j * stride + steps].T.copy()
                    slices.append(
                        MVTSSlice(
                            event_id=event_id,
                            partition_id=p,
                            slice_index=j,
                            label=cls,
                            values=window,
                            missing=clean_mask,
                        )
                    )
                ordinal += 1
        slices_by_partition[p] = slices

    return Dataset(
        n_params=config.n_params,
        steps_per_slice=steps,
        param_names=config.param_names,
        slices_by_partition=slices_by_partition,
    )


def inject_missing(dataset: Dataset, rate: float = 0.0001, seed: int = 0) -> Dataset:
    """Mask cells uniformly at random at the given rate; masked values go NaN.

    No (slice, parameter) series is ever fully masked: a fully-masked column
    gets one cell restored, chosen by the same RNG stream.
    """
    if not 0.0 <= rate < 1.0:
        raise GenerationError("missing rate must lie in [0, 1)")
    if rate == 0.0:
        return dataset
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11C]))
    out: dict[int, list[MVTSSlice]] = {}
    for p in dataset.partitions:
        masked_slices = []
        for s in dataset.slices_by_partition[p]:
            mask = rng.random(s.values.shape) < rate
            if mask.any():
                dead = mask.all(axis=0)
                for col in np.flatnonzero(dead):
                    mask[rng.integers(0, s.values.shape[0]), col] = False
                values = s.values.copy()
                values[mask] = np.nan
                masked_slices.append(
                    MVTSSlice(
                        event_id=s.event_id,
                        partition_id=s.partition_id,
                        slice_index=s.slice_index,
                        label=s.label,
                        values=values,
                        missing=mask,
                    )
                )
            else:
                masked_slices.append(s)
        out[p] = masked_slices
    return Dataset(
        n_params=dataset.n_params,
        steps_per_slice=dataset.steps_per_slice,
        param_names=dataset.param_names,
        slices_by_partition=out,
    )
