"""Synthetic burst / inter-burst EEG corpora with exact annotations.

Inter-burst activity is band-limited pink noise. Bursts add band-limited
oscillatory noise in ``burst_band``. In equal-energy mode the burst
replaces the background and is scaled so both classes carry the same power
after the default preprocessing (64 Hz, 0.5-30 Hz band-pass, first
difference), leaving spectral shape as the only difference.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .records import (CorpusManifest, ManifestEntry, write_annotations, write_manifest,
                      write_signal_csv)
from .signal_pre import FilterSpec, SignalRecord, forward_difference, resample, zero_phase_bandpass

MIN_SEGMENT_SECONDS = 1.0


@dataclass(frozen=True)
class SynthConfig:
    n_records: int = 36
    duration_seconds: float = 600.0
    burst_band: tuple[float, float] = (1.0, 10.0)
    burst_amplitude_ratio: float = 4.0
    mean_burst_seconds: float = 6.0
    mean_interburst_seconds: float = 4.0
    pink_exponent: float = 1.0
    equal_energy_mode: bool = False
    seed: int = 0
    sample_rate: float = 256.0
    background_rms: float = 10.0
    background_band: tuple[float, float] = (0.5, 30.0)

    def __post_init__(self):
        lo, hi = self.burst_band
        if self.n_records < 1 or self.duration_seconds <= 0:
            raise ConfigError("n_records and duration_seconds must be positive")
        if not 0 < lo < hi < 32:
            raise ConfigError(f"burst_band must lie within (0, 32) Hz, got {self.burst_band}")
        if self.burst_amplitude_ratio < 1:
            raise ConfigError("burst_amplitude_ratio must be >= 1")
        for name in ("mean_burst_seconds", "mean_interburst_seconds"):
            if getattr(self, name) <= MIN_SEGMENT_SECONDS:
                raise ConfigError(f"{name} must exceed the {MIN_SEGMENT_SECONDS:g}-s floor")
        if self.pink_exponent < 0 or self.background_rms <= 0 or self.sample_rate <= 0:
            raise ConfigError("pink_exponent, background_rms and sample_rate must be positive")
        if not 0 < self.background_band[0] < self.background_band[1] < self.sample_rate / 2:
            raise ConfigError(f"bad background_band {self.background_band}")


def _shaped_noise(rng: np.random.Generator, n: int, fs: float, band: tuple[float, float],
                  exponent: float) -> np.ndarray:
    """Gaussian noise with power ~ f^-exponent inside ``band``, unit RMS."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    gain = np.zeros_like(f)
    inside = (f >= band[0]) & (f <= band[1])
    gain[inside] = f[inside] ** (-exponent / 2.0)
    x = np.fft.irfft(spec * gain, n)
    return x / np.sqrt(np.mean(x**2))


def segment_plan(rng: np.random.Generator, duration: float, mean_burst: float,
                 mean_inter: float) -> list[tuple[float, float, str]]:
    """Alternating segments; each lasts 1 s plus an exponential excess, so the
    mean duration equals the configured mean."""
    p_burst = mean_burst / (mean_burst + mean_inter)
    state = "burst" if rng.random() < p_burst else "inter_burst"
    t = 0.0
    out = []
    while t < duration:
        mean = mean_burst if state == "burst" else mean_inter
        length = MIN_SEGMENT_SECONDS + rng.exponential(mean - MIN_SEGMENT_SECONDS)
        end = min(duration, t + length)
        out.append((t, end, state))
        t = end
        state = "inter_burst" if state == "burst" else "burst"
    return out


def _whitened_power(x: np.ndarray, fs: float) -> float:
    rec = SignalRecord(x, fs)
    rec = resample(rec, 64.0) if fs != 64.0 else rec
    rec = forward_difference(zero_phase_bandpass(rec, FilterSpec()))
    return float(np.mean(rec.samples**2))


def generate_record(config: SynthConfig, index: int) -> tuple[np.ndarray, list[dict]]:
    """Samples (microvolts) and annotation intervals for one record."""
    rng = np.random.default_rng([config.seed, index])
    fs = config.sample_rate
    n = int(round(config.duration_seconds * fs))
    segments = segment_plan(rng, n / fs, config.mean_burst_seconds, config.mean_interburst_seconds)
    mask = np.zeros(n)
    for start, end, state in segments:
        if state == "burst":
            mask[int(round(start * fs)) : int(round(end * fs))] = 1.0

    background = config.background_rms * _shaped_noise(
        rng, n, fs, config.background_band, config.pink_exponent)
    burst = _shaped_noise(rng, n, fs, config.burst_band, 0.0)
    if config.equal_energy_mode:
        scale = np.sqrt(_whitened_power(background, fs) / _whitened_power(burst, fs))
        x = (1.0 - mask) * background + mask * scale * burst
    else:
        scale = config.background_rms * np.sqrt(config.burst_amplitude_ratio**2 - 1.0)
        x = background + mask * scale * burst
    intervals = [{"start_s": round(s, 6), "end_s": round(e, 6), "label": lab}
                 for s, e, lab in segments]
    return x, intervals


def generate_synthetic_corpus(config: SynthConfig, out_dir: str | Path) -> CorpusManifest:
    """Write signal CSVs, annotation documents and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(config.n_records):
        rid = f"rec{i:03d}"
        x, intervals = generate_record(config, i)
        sig = out / f"{rid}.csv"
        ann = out / f"{rid}.annotations.json"
        write_signal_csv(sig, x, config.sample_rate)
        write_annotations(ann, intervals)
        entries.append(ManifestEntry(rid, sig, ann, config.sample_rate))
    manifest = CorpusManifest(tuple(entries), config.seed)
    write_manifest(out / "manifest.json", manifest)
    return manifest
