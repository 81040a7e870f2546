"""Single-channel preprocessing: decimation, zero-phase band-pass,
first-difference whitening and the discrete analytic signal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.signal as sps

from .errors import PreconditionError


class Label(enum.IntEnum):
    """Per-sample annotation codes."""

    INTER_BURST = 0
    BURST = 1
    DISAGREEMENT = 2
    UNLABELED = 3


@dataclass(frozen=True)
class SignalRecord:
    samples: np.ndarray
    sample_rate: float
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    record_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int8)
        if samples.ndim != 1:
            raise PreconditionError("samples must be one-dimensional")
        if not self.sample_rate > 0:
            raise PreconditionError(f"sample_rate must be positive, got {self.sample_rate}")
        if labels.size and labels.shape != samples.shape:
            raise PreconditionError(
                f"labels length {labels.size} does not match samples length {samples.size}"
            )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "SignalRecord":
        return replace(self, samples=samples)


@dataclass(frozen=True)
class AnalyticSignal:
    values: np.ndarray
    sample_rate: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class FilterSpec:
    order: int = 5
    low_cut: float = 0.5
    high_cut: float = 30.0
    design: str = "butterworth"

    def validate(self, sample_rate: float) -> None:
        if self.design != "butterworth":
            raise PreconditionError(f"unsupported filter design {self.design!r}")
        if self.order < 1:
            raise PreconditionError(f"filter order must be >= 1, got {self.order}")
        if not 0 < self.low_cut < self.high_cut < sample_rate / 2:
            raise PreconditionError(
                f"need 0 < low_cut < high_cut < fs/2; got {self.low_cut}, "
                f"{self.high_cut} at fs={sample_rate}"
            )


def _filtfilt_reflect(sos: np.ndarray, x: np.ndarray, padlen: int) -> np.ndarray:
    # Reflection padding plus steady-state initial conditions; without the
    # latter a 0.5 Hz high-pass rings for seconds on any DC offset.
    padlen = min(padlen, x.size - 1)
    xp = np.pad(x, padlen, mode="reflect") if padlen > 0 else x
    zi = sps.sosfilt_zi(sos)
    y, _ = sps.sosfilt(sos, xp, zi=zi * xp[0])
    y = y[::-1]
    y, _ = sps.sosfilt(sos, y, zi=zi * y[0])
    y = y[::-1]
    if padlen > 0:
        y = y[padlen:-padlen]
    return y


def resample(record: SignalRecord, target_rate: float) -> SignalRecord:
    """Integer-factor decimation with a zero-phase anti-aliasing low-pass.

    The anti-aliasing filter is an 8th-order Butterworth at 0.45 x target
    rate. Labels are decimated with the same stride as the samples.
    """
    ratio = record.sample_rate / target_rate
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9 * ratio:
        raise PreconditionError(
            f"target rate {target_rate} Hz is not an integer divisor of "
            f"{record.sample_rate} Hz; rational resampling is not supported"
        )
    if factor == 1:
        return record
    order = 8
    if record.samples.size <= 3 * order:
        raise PreconditionError("record too short for the anti-aliasing filter")
    sos = sps.butter(order, 0.45 * target_rate, btype="low", output="sos",
                     fs=record.sample_rate)
    y = _filtfilt_reflect(sos, record.samples, 3 * order)
    n_out = record.samples.size // factor
    labels = record.labels[: n_out * factor : factor] if record.labels.size else record.labels
    return replace(record, samples=y[: n_out * factor : factor],
                   sample_rate=record.sample_rate / factor, labels=labels)


def zero_phase_bandpass(record: SignalRecord, spec: FilterSpec = FilterSpec()) -> SignalRecord:
    """Forward-backward Butterworth band-pass (squared magnitude, zero phase).

    The filter is realised as second-order sections; the signal is
    reflect-padded by ``3 * order`` samples at each end before filtering.
    """
    spec.validate(record.sample_rate)
    if record.samples.size < 3 * spec.order:
        raise PreconditionError(
            f"signal of {record.samples.size} samples is shorter than 3 x filter "
            f"order ({3 * spec.order})"
        )
    sos = sps.butter(spec.order, [spec.low_cut, spec.high_cut], btype="bandpass",
                     output="sos", fs=record.sample_rate)
    return record.with_samples(_filtfilt_reflect(sos, record.samples, 3 * spec.order))


def forward_difference(record: SignalRecord) -> SignalRecord:
    """y[n] = x[n+1] - x[n], with the final sample set to zero."""
    x = record.samples
    if x.size < 2:
        raise PreconditionError("forward difference needs at least 2 samples")
    y = np.zeros_like(x)
    y[:-1] = x[1:] - x[:-1]
    return record.with_samples(y)


def analytic_signal(record: SignalRecord | np.ndarray, sample_rate: float | None = None
                    ) -> AnalyticSignal:
    """Discrete analytic signal built in the frequency domain.

    DC (and the Nyquist bin for even lengths) are kept as is, positive
    frequencies are doubled and negative frequencies zeroed.
    """
    if isinstance(record, SignalRecord):
        x, fs = record.samples, record.sample_rate
    else:
        x, fs = np.asarray(record, dtype=float), sample_rate if sample_rate else 1.0
    n = x.size
    if n < 2:
        raise PreconditionError("analytic signal needs at least 2 samples")
    spectrum = np.fft.fft(x)
    weights = np.zeros(n)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[n // 2] = 1.0
        weights[1 : n // 2] = 2.0
    else:
        weights[1 : (n + 1) // 2] = 2.0
    return AnalyticSignal(np.fft.ifft(spectrum * weights), fs)
