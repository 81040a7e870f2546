"""File formats: signal CSV, interval annotations, corpus manifests and the
flat key/value configuration file.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, FormatError, PreconditionError
from .signal_pre import Label, SignalRecord

LABEL_NAMES = {
    "burst": Label.BURST,
    "inter_burst": Label.INTER_BURST,
    "disagreement": Label.DISAGREEMENT,
}


# --------------------------------------------------------------------------
# signals


def write_signal_csv(path: str | Path, samples: np.ndarray, sample_rate: float) -> None:
    lines = [f"sample_rate_hz,{sample_rate:g}"]
    lines.extend(f"{v:.6f}" for v in np.asarray(samples, dtype=float))
    Path(path).write_text("\n".join(lines) + "\n")


def read_signal_csv(path: str | Path) -> tuple[np.ndarray, float]:
    """Parse ``sample_rate_hz,<rate>`` followed by one sample per line."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise FormatError("empty signal file", f"{path}: line 1")
    head = text[0].split(",")
    if len(head) != 2 or head[0].strip() != "sample_rate_hz":
        raise FormatError("first line must be 'sample_rate_hz,<value>'", f"{path}: line 1")
    try:
        rate = float(head[1])
    except ValueError:
        raise FormatError(f"bad sample rate {head[1]!r}", f"{path}: line 1") from None
    if not rate > 0:
        raise FormatError("sample rate must be positive", f"{path}: line 1")
    values = np.empty(len(text) - 1)
    n = 0
    for lineno, line in enumerate(text[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            values[n] = float(line)
        except ValueError:
            raise FormatError(f"cannot parse sample {line!r}", f"{path}: line {lineno}") from None
        if not math.isfinite(values[n]):
            raise FormatError(f"non-finite sample {line!r}", f"{path}: line {lineno}")
        n += 1
    return values[:n], rate


# --------------------------------------------------------------------------
# annotations


def write_annotations(path: str | Path, intervals: list[dict]) -> None:
    Path(path).write_text(json.dumps(intervals, indent=1) + "\n")


def read_annotations(path: str | Path) -> list[dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed annotation document: {exc.msg}",
                          f"{path}: line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, list):
        raise FormatError("annotation document must be a list of intervals", str(path))
    out = []
    for i, item in enumerate(doc):
        where = f"{path}: [{i}]"
        if not isinstance(item, dict) or not {"start_s", "end_s", "label"} <= set(item):
            raise FormatError("interval needs start_s, end_s and label", where)
        try:
            start, end = float(item["start_s"]), float(item["end_s"])
        except (TypeError, ValueError):
            raise FormatError("start_s/end_s must be numbers", where) from None
        if item["label"] not in LABEL_NAMES:
            raise FormatError(f"unknown label {item['label']!r}", where)
        if not end > start:
            raise FormatError("end_s must exceed start_s", where)
        out.append({"start_s": start, "end_s": end, "label": item["label"]})
    return out


def rasterize(intervals: list[dict], n_samples: int, sample_rate: float) -> np.ndarray:
    """Per-sample label codes; sample ``i`` belongs to ``[start, end)`` when
    ``start <= i / fs < end``. Unannotated samples are UNLABELED.
    """
    codes = np.full(n_samples, Label.UNLABELED, dtype=np.int8)
    duration = n_samples / sample_rate
    for item in sorted(intervals, key=lambda d: (d["start_s"], d["end_s"])):
        start, end = item["start_s"], item["end_s"]
        if end > duration + 1e-9:
            warnings.warn(f"interval [{start}, {end}) s extends past the record end "
                          f"({duration:g} s); clipped", stacklevel=2)
        i0 = max(0, int(math.ceil(start * sample_rate - 1e-9)))
        i1 = min(n_samples, int(math.ceil(end * sample_rate - 1e-9)))
        if i1 <= i0:
            continue
        code = LABEL_NAMES[item["label"]]
        span = codes[i0:i1]
        clash = (span != Label.UNLABELED) & (span != code)
        if clash.any():
            raise FormatError(f"interval [{start}, {end}) s labelled {item['label']!r} overlaps "
                              f"a conflicting interval")
        span[:] = code
    return codes


def load_record(signal_path: str | Path, annotation_path: str | Path | None = None,
                record_id: str | None = None) -> SignalRecord:
    samples, rate = read_signal_csv(signal_path)
    labels = np.zeros(0, dtype=np.int8)
    if annotation_path is not None:
        labels = rasterize(read_annotations(annotation_path), samples.size, rate)
    return SignalRecord(samples, rate, labels,
                        record_id if record_id is not None else Path(signal_path).stem)


# --------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    record_id: str
    signal_path: Path
    annotation_path: Path | None
    native_sample_rate: float


@dataclass(frozen=True)
class CorpusManifest:
    records: tuple[ManifestEntry, ...]
    generation_seed: int | None = None

    def load(self, entry: ManifestEntry) -> SignalRecord:
        rec = load_record(entry.signal_path, entry.annotation_path, entry.record_id)
        if abs(rec.sample_rate - entry.native_sample_rate) > 1e-9:
            raise PreconditionError(
                f"record {entry.record_id}: file rate {rec.sample_rate} Hz differs from "
                f"manifest rate {entry.native_sample_rate} Hz"
            )
        return rec


def write_manifest(path: str | Path, manifest: CorpusManifest) -> None:
    base = Path(path).parent
    doc = {
        "generation_seed": manifest.generation_seed,
        "records": [
            {
                "record_id": e.record_id,
                "signal_path": str(Path(e.signal_path).relative_to(base)),
                "annotation_path": (None if e.annotation_path is None
                                    else str(Path(e.annotation_path).relative_to(base))),
                "native_sample_rate": e.native_sample_rate,
            }
            for e in manifest.records
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed manifest: {exc.msg}",
                          f"{path}: line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("records"), list):
        raise FormatError("manifest needs a 'records' list", str(path))
    entries = []
    seen = set()
    for i, r in enumerate(doc["records"]):
        where = f"{path}: records[{i}]"
        try:
            rid = str(r["record_id"])
            sig = path.parent / r["signal_path"]
            ann = r.get("annotation_path")
            rate = float(r["native_sample_rate"])
        except (KeyError, TypeError, ValueError):
            raise FormatError("record entry needs record_id, signal_path, native_sample_rate",
                              where) from None
        if rid in seen:
            raise FormatError(f"duplicate record_id {rid!r}", where)
        seen.add(rid)
        ann_path = None if ann is None else path.parent / ann
        for p in (sig, ann_path):
            if p is not None and not p.exists():
                raise PreconditionError(f"{where}: file {p} does not exist")
        entries.append(ManifestEntry(rid, sig, ann_path, rate))
    seed = doc.get("generation_seed")
    return CorpusManifest(tuple(entries), None if seed is None else int(seed))


# --------------------------------------------------------------------------
# flat key/value configuration


def read_config_file(path: str | Path) -> dict[str, str]:
    """``section.key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"expected 'key = value', got {raw!r}", f"{path}: line {lineno}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise FormatError(f"duplicate key {key!r}", f"{path}: line {lineno}")
        out[key] = value
    return out


def _coerce(value: str, current: Any, key: str) -> Any:
    try:
        if isinstance(current, bool):
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple):
            parts = [p for p in value.replace(",", " ").split() if p]
            return tuple(type(current[0])(p) for p in parts)
        if current is None:
            return None if value.lower() in ("", "none", "null") else int(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {key}") from None
    return value


def apply_overrides(obj: Any, values: dict[str, str], prefix: str) -> Any:
    """Return a copy of dataclass ``obj`` with ``prefix.field`` keys applied."""
    names = {f.name: f for f in fields(obj)}
    changes = {}
    for key, value in values.items():
        section, _, name = key.partition(".")
        if section != prefix:
            continue
        if name not in names:
            raise ConfigError(f"unknown config key {key!r}")
        changes[name] = _coerce(value, getattr(obj, name), key)
    return replace(obj, **changes) if changes else obj
