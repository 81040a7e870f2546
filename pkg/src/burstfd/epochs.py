"""Epoch geometry: tiling a record into 32-s cores, building the padded
36-s analysis window, x2 interpolation, TFD trimming and per-slice labels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .errors import PreconditionError
from .signal_pre import AnalyticSignal, Label, analytic_signal
from .tf_engine import GridSpec, KernelSpec, TFDMatrix, paper_kernel, separable_tfd_efficient

EXCLUDED = -1


@dataclass(frozen=True)
class EpochPlan:
    core_seconds: float = 32.0
    pad_seconds: float = 2.0
    sample_rate: float = 64.0
    interpolation_factor: int = 2
    slice_rate: float = 4.0
    kept_freq_bins: int = 64

    def __post_init__(self):
        if self.pad_seconds <= 0 or self.core_seconds <= 0:
            raise PreconditionError("core_seconds and pad_seconds must be positive")
        for name, value in (
            ("core samples", self.core_seconds * self.sample_rate),
            ("pad samples", self.pad_seconds * self.sample_rate),
            ("slices per core", self.core_seconds * self.slice_rate),
            ("pad slices", self.pad_seconds * self.slice_rate),
            ("samples per slice", self.sample_rate / self.slice_rate),
        ):
            if abs(value - round(value)) > 1e-9:
                raise PreconditionError(f"epoch plan gives a non-integer number of {name}: {value}")

    @property
    def core_samples(self) -> int:
        return int(round(self.core_seconds * self.sample_rate))

    @property
    def pad_samples(self) -> int:
        return int(round(self.pad_seconds * self.sample_rate))

    @property
    def samples_per_slice(self) -> int:
        return int(round(self.sample_rate / self.slice_rate))

    @property
    def slices_per_core(self) -> int:
        return int(round(self.core_seconds * self.slice_rate))

    @property
    def pad_slices(self) -> int:
        return int(round(self.pad_seconds * self.slice_rate))

    @property
    def n_signal(self) -> int:
        """Analytic-signal length after interpolation (4608 for the defaults)."""
        return (self.core_samples + 2 * self.pad_samples) * self.interpolation_factor

    @property
    def interpolated_rate(self) -> float:
        return self.sample_rate * self.interpolation_factor

    @property
    def n_time(self) -> int:
        return self.slices_per_core + 2 * self.pad_slices

    @property
    def n_freq(self) -> int:
        return 2 * self.kept_freq_bins

    def grid(self, kernel: KernelSpec) -> GridSpec:
        return GridSpec(self.n_signal, self.n_time, self.n_freq, kernel.lag_half_length)


@dataclass(frozen=True)
class Epoch:
    """Sample indices (at the plan's rate) of one analysis window.

    Slices ``first_slice..`` of the core are emitted; earlier ones overlap a
    previous epoch and are dropped.
    """

    index: int
    core_start: int
    core_end: int
    padded_start: int
    padded_end: int
    first_slice: int = 0


@dataclass(frozen=True)
class FeatureSlice:
    features: np.ndarray
    label: int
    record_id: str
    slice_time: float


def plan_epochs(record_length_samples: int, plan: EpochPlan = EpochPlan()) -> list[Epoch]:
    """Tile a record with cores of ``core_seconds``; hop equals the core length.

    When the record is not a whole number of cores a final core is
    right-aligned to the last complete slice, and its slices that repeat
    the previous epoch are skipped.
    """
    core, pad, sps_ = plan.core_samples, plan.pad_samples, plan.samples_per_slice
    usable = (record_length_samples // sps_) * sps_
    if usable < core:
        raise PreconditionError(
            f"record of {record_length_samples} samples is shorter than one "
            f"{plan.core_seconds:g}-s epoch ({core} samples)"
        )
    starts = list(range(0, usable - core + 1, core))
    epochs = [Epoch(i, s, s + core, s - pad, s + core + pad) for i, s in enumerate(starts)]
    tiled_end = starts[-1] + core
    if tiled_end < usable:
        s = usable - core
        first = (tiled_end - s) // sps_
        epochs.append(Epoch(len(epochs), s, usable, s - pad, usable + pad, first))
    return epochs


def _reflect_indices(start: int, stop: int, length: int) -> np.ndarray:
    idx = np.arange(start, stop)
    if length == 1:
        return np.zeros_like(idx)
    period = 2 * (length - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= length, period - idx, idx)


def epoch_samples(samples: np.ndarray, epoch: Epoch) -> np.ndarray:
    """Padded window of an epoch; samples beyond the record are mirrored."""
    return samples[_reflect_indices(epoch.padded_start, epoch.padded_end, samples.size)]


def interpolate_x2(z: AnalyticSignal) -> AnalyticSignal:
    """Band-limited x2 interpolation by zero-padding the spectrum.

    Scaled so that ``out[2n] == z[n]``; consequently the energy doubles.
    For even lengths the Nyquist bin is split between +fs/2 and -fs/2.
    """
    x = z.values
    n = x.size
    if n == 0:
        raise PreconditionError("cannot interpolate an empty signal")
    spec = np.fft.fft(x)
    out = np.zeros(2 * n, dtype=complex)
    half = (n + 1) // 2  # bins 0..half-1 are non-negative frequencies
    out[:half] = spec[:half]
    n_neg = n - half
    if n % 2 == 0:
        out[n // 2] = 0.5 * spec[n // 2]
        out[2 * n - n // 2] = 0.5 * spec[n // 2]
        n_neg -= 1
    if n_neg:
        out[2 * n - n_neg :] = spec[n - n_neg :]
    return AnalyticSignal(np.fft.ifft(out) * 2.0, z.sample_rate * 2)


def trim_tfd(tfd: TFDMatrix, plan: EpochPlan = EpochPlan()) -> TFDMatrix:
    """Drop the padding slices and keep the lower ``kept_freq_bins`` bins."""
    expected = (plan.n_time, plan.n_freq)
    if tfd.values.shape != expected:
        raise PreconditionError(f"TFD shape {tfd.values.shape} does not match plan {expected}")
    p = plan.pad_slices
    values = tfd.values[p : tfd.values.shape[0] - p, : plan.kept_freq_bins].copy()
    return replace(tfd, values=values, origin_time=tfd.origin_time + p / tfd.slice_rate)


def slice_label(codes: np.ndarray) -> int:
    """Purity rule: every sample burst -> 1, every sample inter-burst -> 0."""
    if codes.size and np.all(codes == Label.BURST):
        return int(Label.BURST)
    if codes.size and np.all(codes == Label.INTER_BURST):
        return int(Label.INTER_BURST)
    return EXCLUDED


def extract_slices(tfd: TFDMatrix, labels: np.ndarray | None, plan: EpochPlan = EpochPlan(),
                   record_id: str = "", first_slice: int = 0) -> list[FeatureSlice]:
    """One :class:`FeatureSlice` per time-slice of a trimmed TFD.

    ``labels`` are the per-sample codes of the epoch core (empty or None
    means unlabeled). Slice ``i`` spans core samples
    ``[i * s, (i + 1) * s)`` with ``s = sample_rate / slice_rate``; its
    reported time is the span centre.
    """
    n_slices, n_bins = plan.slices_per_core, plan.kept_freq_bins
    if tfd.values.shape != (n_slices, n_bins):
        raise PreconditionError(
            f"expected a trimmed {n_slices}x{n_bins} TFD, got {tfd.values.shape}"
        )
    step = plan.samples_per_slice
    if labels is not None and len(labels):
        labels = np.asarray(labels)
        if labels.size != plan.core_samples:
            raise PreconditionError(
                f"{labels.size} labels supplied for an epoch core of {plan.core_samples} samples"
            )
    else:
        labels = None
    half = 0.5 / plan.slice_rate
    out = []
    for i in range(first_slice, n_slices):
        lab = EXCLUDED if labels is None else slice_label(labels[i * step : (i + 1) * step])
        out.append(FeatureSlice(tfd.values[i].copy(), lab, record_id,
                                float(tfd.origin_time + i / plan.slice_rate + half)))
    return out


def epoch_tfd(segment: np.ndarray, plan: EpochPlan = EpochPlan(),
              kernel: KernelSpec | None = None, origin_time: float = 0.0) -> TFDMatrix:
    """Analytic signal -> x2 interpolation -> decimated TFD -> trim."""
    kernel = kernel or paper_kernel()
    z = interpolate_x2(analytic_signal(segment, plan.sample_rate))
    tfd = separable_tfd_efficient(z, kernel, plan.grid(kernel))
    tfd = replace(tfd, origin_time=origin_time)
    return trim_tfd(tfd, plan)


def iter_record_slices(samples: np.ndarray, labels: np.ndarray | None, plan: EpochPlan = EpochPlan(),
                       kernel: KernelSpec | None = None, record_id: str = ""
                       ) -> Iterator[FeatureSlice]:
    """Deterministic stream of feature slices covering a preprocessed record."""
    kernel = kernel or paper_kernel()
    samples = np.asarray(samples, dtype=float)
    for ep in plan_epochs(samples.size, plan):
        tfd = epoch_tfd(epoch_samples(samples, ep), plan, kernel,
                        origin_time=(ep.padded_start) / plan.sample_rate)
        core_labels = None
        if labels is not None and len(labels):
            core_labels = labels[ep.core_start : ep.core_end]
        yield from extract_slices(tfd, core_labels, plan, record_id, ep.first_slice)
