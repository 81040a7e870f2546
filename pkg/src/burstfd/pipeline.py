"""End-to-end orchestration: preprocess -> TFD slices -> train / detect / evaluate,
plus the cost-model benchmark.
"""

from __future__ import annotations

import json
import logging
import math
import time
import tracemalloc
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import boost
from .boost import BoostConfig, TreeEnsemble
from .epochs import EXCLUDED, EpochPlan, iter_record_slices
from .errors import PreconditionError
from .evaluation import (EvalReport, build_report, loso_cv, roc_curve, time_marginal_baseline)
from .records import CorpusManifest, apply_overrides
from .signal_pre import FilterSpec, SignalRecord, forward_difference, resample, zero_phase_bandpass
from .tf_engine import (PUBLISHED_COSTS, GridSpec, KernelSpec, WindowSpec, cost_report,
                        paper_kernel, separable_tfd_efficient)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelConfig:
    lag_family: str = "hanning"
    lag_length: int = 61
    doppler_family: str = "tukey"
    doppler_length: int = 61
    doppler_param: float = 0.9

    def spec(self) -> KernelSpec:
        return KernelSpec(WindowSpec(self.lag_family, self.lag_length, 0.0),
                          WindowSpec(self.doppler_family, self.doppler_length, self.doppler_param))


@dataclass(frozen=True)
class PipelineConfig:
    working_rate: float = 64.0
    whiten: bool = True
    n_jobs: int = 1
    filter: FilterSpec = field(default_factory=FilterSpec)
    epoch: EpochPlan = field(default_factory=EpochPlan)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    boost: BoostConfig = field(default_factory=BoostConfig)

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "PipelineConfig":
        """Build from ``section.key`` strings (sections: pipeline, filter,
        epoch, kernel, boost; ``synth.*`` keys are accepted and ignored)."""
        from .errors import ConfigError

        known = {"pipeline", "filter", "epoch", "kernel", "boost", "synth"}
        for key in values:
            if key.partition(".")[0] not in known or "." not in key:
                raise ConfigError(f"unknown config key {key!r}")
        top = apply_overrides(_TopLevel(), values, "pipeline")
        return cls(
            working_rate=top.working_rate, whiten=top.whiten, n_jobs=top.n_jobs,
            filter=apply_overrides(FilterSpec(), values, "filter"),
            epoch=apply_overrides(EpochPlan(), values, "epoch"),
            kernel=apply_overrides(KernelConfig(), values, "kernel"),
            boost=apply_overrides(BoostConfig(), values, "boost"),
        )


@dataclass(frozen=True)
class _TopLevel:
    working_rate: float = 64.0
    whiten: bool = True
    n_jobs: int = 1


@dataclass
class Dataset:
    features: np.ndarray  # (n_slices, kept_freq_bins)
    labels: np.ndarray  # 1 burst, 0 inter-burst, -1 excluded
    record_ids: np.ndarray
    times: np.ndarray

    def scored(self) -> "Dataset":
        keep = self.labels != EXCLUDED
        return Dataset(self.features[keep], self.labels[keep], self.record_ids[keep],
                       self.times[keep])


def preprocess(record: SignalRecord, config: PipelineConfig = PipelineConfig()) -> SignalRecord:
    rec = resample(record, config.working_rate)
    if abs(rec.sample_rate - config.epoch.sample_rate) > 1e-9:
        raise PreconditionError(
            f"record {record.record_id}: rate after preprocessing is {rec.sample_rate} Hz, "
            f"epoch plan expects {config.epoch.sample_rate} Hz"
        )
    rec = zero_phase_bandpass(rec, config.filter)
    if config.whiten:
        rec = forward_difference(rec)
    return rec


def record_dataset(record: SignalRecord, config: PipelineConfig = PipelineConfig()) -> Dataset:
    rec = preprocess(record, config)
    slices = list(iter_record_slices(rec.samples, rec.labels, config.epoch,
                                     config.kernel.spec(), record.record_id))
    n_bins = config.epoch.kept_freq_bins
    feats = np.array([s.features for s in slices]).reshape(len(slices), n_bins)
    return Dataset(feats, np.array([s.label for s in slices], dtype=int),
                   np.array([record.record_id] * len(slices)),
                   np.array([s.slice_time for s in slices]))


def corpus_dataset(manifest: CorpusManifest, config: PipelineConfig = PipelineConfig()) -> Dataset:
    parts = []
    for entry in manifest.records:
        parts.append(record_dataset(manifest.load(entry), config))
        log.info("record %s: %d slices", entry.record_id, parts[-1].labels.size)
    return Dataset(np.concatenate([p.features for p in parts]),
                   np.concatenate([p.labels for p in parts]),
                   np.concatenate([p.record_ids for p in parts]),
                   np.concatenate([p.times for p in parts]))


# --------------------------------------------------------------------------
# train / detect


def train_model(data: Dataset, config: PipelineConfig = PipelineConfig()) -> TreeEnsemble:
    """Fit on every labelled slice. Inter-burst is the model's positive class."""
    d = data.scored()
    if d.labels.size < 2:
        raise PreconditionError("no labelled slices to train on")
    return boost.train(d.features, 1 - d.labels, None, config.boost)


def burst_probability(model: TreeEnsemble, features: np.ndarray) -> np.ndarray:
    return 1.0 - boost.predict_proba(model, features)


def model_document(model: TreeEnsemble) -> str:
    doc = json.loads(boost.serialize(model))
    doc["positive_class"] = "inter_burst"
    return json.dumps(doc, indent=1)


def load_model_document(text: str) -> TreeEnsemble:
    doc = json.loads(text) if text.strip().startswith("{") else None
    if isinstance(doc, dict) and doc.pop("positive_class", "inter_burst") != "inter_burst":
        raise PreconditionError("model must be trained with inter_burst as positive class")
    return boost.deserialize(text if doc is None else json.dumps(doc))


def run_detect(manifest: CorpusManifest, model: TreeEnsemble, out_dir: str | Path,
               config: PipelineConfig = PipelineConfig()) -> dict[str, Path]:
    """Write ``<record_id>.detections.csv`` per record: time, P(burst), decision."""
    if model.feature_count != config.epoch.kept_freq_bins:
        raise PreconditionError(
            f"model has {model.feature_count} features, pipeline produces "
            f"{config.epoch.kept_freq_bins}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for entry in manifest.records:
        record = manifest.load(entry)
        data = record_dataset(record, config)
        proba = burst_probability(model, data.features)
        path = out / f"{entry.record_id}.detections.csv"
        lines = ["slice_time,p_burst,burst"]
        lines.extend(f"{t:.3f},{p:.6f},{int(p >= 0.5)}" for t, p in zip(data.times, proba))
        path.write_text("\n".join(lines) + "\n")
        written[entry.record_id] = path
    return written


# --------------------------------------------------------------------------
# evaluation


def _label_counts(data: Dataset) -> dict[str, dict[str, int]]:
    counts = {}
    for rid in sorted(set(data.record_ids.tolist())):
        lab = data.labels[data.record_ids == rid]
        counts[rid] = {
            "slices": int(lab.size),
            "burst": int(np.sum(lab == 1)),
            "inter_burst": int(np.sum(lab == 0)),
            "excluded": int(np.sum(lab == EXCLUDED)),
        }
    return counts


@dataclass
class EvalOutcome:
    report: EvalReport
    baseline: list
    counts: dict[str, dict[str, int]]


def evaluate(data: Dataset, config: PipelineConfig = PipelineConfig()) -> EvalOutcome:
    counts = _label_counts(data)
    d = data.scored()
    usable = [r for r, c in counts.items() if c["burst"] + c["inter_burst"] > 0]
    if len(usable) < 2 or np.unique(d.labels).size < 2:
        detail = ", ".join(f"{r}: burst={c['burst']} inter_burst={c['inter_burst']}"
                           for r, c in counts.items())
        raise PreconditionError(f"insufficient labels for leave-one-out evaluation ({detail})")
    proposed = loso_cv(d.features, d.labels, d.record_ids, config.boost, n_jobs=config.n_jobs)
    baseline = time_marginal_baseline(d.features, d.labels, d.record_ids, config.boost,
                                      n_jobs=config.n_jobs)
    report = build_report(proposed, {"TM-TFD": baseline})
    return EvalOutcome(report, baseline, counts)


def _fmt(x: float | None, digits: int = 3) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "n/a"
    return f"{x:.{digits}f}"


def format_report(outcome: EvalOutcome) -> str:
    r = outcome.report
    lines = ["# Detection performance (leave-one-record-out)", ""]
    lines.append(f"{'method':<12} {'AUC median (95% CI)':<28} {'% difference median (95% CI)':<32} p-value")
    for c in r.comparisons:
        lines.append(
            f"{c.name:<12} {_fmt(c.median_auc)} ({_fmt(c.auc_ci[0])} to {_fmt(c.auc_ci[1])})".ljust(41)
            + f" {_fmt(c.median_pct_diff, 2)} ({_fmt(c.pct_diff_ci[0], 2)} to {_fmt(c.pct_diff_ci[1], 2)})".ljust(33)
            + f" {_fmt_p(c.p_value)}"
        )
    lines.append(f"{'proposed':<12} {_fmt(r.median_auc)} ({_fmt(r.auc_ci_low)} to {_fmt(r.auc_ci_high)})")
    lines.append("")
    lines.append(f"sensitivity at 0.5: {_fmt(r.median_sensitivity)} "
                 f"({_fmt(r.sensitivity_ci[0])} to {_fmt(r.sensitivity_ci[1])})")
    lines.append(f"specificity at 0.5: {_fmt(r.median_specificity)} "
                 f"({_fmt(r.specificity_ci[0])} to {_fmt(r.specificity_ci[1])})")
    for c in r.comparisons:
        lines.append(f"{c.name}: median AUC difference {_fmt(c.median_auc_diff, 4)} "
                     f"({_fmt(c.diff_ci[0], 4)} to {_fmt(c.diff_ci[1], 4)})")
    lines += ["", "# Per record", ""]
    base = {f.record_id: f for f in outcome.baseline}
    lines.append("record_id,slices,burst,inter_burst,excluded,scored,auc,tm_tfd_auc,sensitivity,specificity")
    for f in r.per_fold:
        c = outcome.counts[f.record_id]
        b = base.get(f.record_id)
        lines.append(",".join([
            f.record_id, str(c["slices"]), str(c["burst"]), str(c["inter_burst"]),
            str(c["excluded"]), str(f.labels.size), _fmt(f.auc, 6),
            _fmt(b.auc if b else None, 6), _fmt(f.sensitivity_at_half, 6),
            _fmt(f.specificity_at_half, 6)]))
    total = {k: sum(c[k] for c in outcome.counts.values())
             for k in ("slices", "burst", "inter_burst", "excluded")}
    lines.append(f"TOTAL,{total['slices']},{total['burst']},{total['inter_burst']},"
                 f"{total['excluded']},{total['burst'] + total['inter_burst']},,,,")
    if r.warnings:
        lines += ["", "# Warnings", ""] + [f"- {w}" for w in r.warnings]
    return "\n".join(lines) + "\n"


def _fmt_p(p: float) -> str:
    if p is None or math.isnan(p):
        return "n/a"
    if p < 0.001:
        return "<0.001"
    if p > 0.999:
        return ">0.999"
    return f"{p:.3f}"


def report_summary(outcome: EvalOutcome) -> dict:
    r = outcome.report
    return {
        "median_auc": r.median_auc,
        "auc_ci": [r.auc_ci_low, r.auc_ci_high],
        "median_sensitivity": r.median_sensitivity,
        "sensitivity_ci": list(r.sensitivity_ci),
        "median_specificity": r.median_specificity,
        "specificity_ci": list(r.specificity_ci),
        "comparisons": [
            {"name": c.name, "median_auc": c.median_auc, "auc_ci": list(c.auc_ci),
             "median_auc_diff": c.median_auc_diff, "diff_ci": list(c.diff_ci),
             "median_pct_diff": c.median_pct_diff, "pct_diff_ci": list(c.pct_diff_ci),
             "p_value": c.p_value}
            for c in r.comparisons
        ],
        "per_record": {
            f.record_id: {"auc": f.auc, "sensitivity": f.sensitivity_at_half,
                          "specificity": f.specificity_at_half, **outcome.counts[f.record_id]}
            for f in r.per_fold
        },
        "warnings": r.warnings,
    }


def write_eval_outputs(outcome: EvalOutcome, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.txt",
        "summary": out / "report.json",
        "roc": out / "roc_points.csv",
        "auc": out / "auc_by_record.csv",
    }
    paths["report"].write_text(format_report(outcome))
    paths["summary"].write_text(json.dumps(report_summary(outcome), indent=1, sort_keys=True) + "\n")
    roc_lines = ["record_id,method,fpr,tpr"]
    for method, folds in (("proposed", outcome.report.per_fold), ("TM-TFD", outcome.baseline)):
        for f in folds:
            if f.auc is None:
                continue
            fpr, tpr, _ = roc_curve(f.scores, f.labels)
            roc_lines.extend(f"{f.record_id},{method},{a:.6f},{b:.6f}" for a, b in zip(fpr, tpr))
    paths["roc"].write_text("\n".join(roc_lines) + "\n")
    base = {f.record_id: f.auc for f in outcome.baseline}
    auc_lines = ["record_id,proposed,tm_tfd"]
    auc_lines.extend(f"{f.record_id},{_fmt(f.auc, 6)},{_fmt(base.get(f.record_id), 6)}"
                     for f in outcome.report.per_fold)
    paths["auc"].write_text("\n".join(auc_lines) + "\n")
    return paths


def run_eval(manifest: CorpusManifest, config: PipelineConfig, out_dir: str | Path) -> EvalOutcome:
    outcome = evaluate(corpus_dataset(manifest, config), config)
    write_eval_outputs(outcome, out_dir)
    return outcome


# --------------------------------------------------------------------------
# benchmark


def run_benchmark(grid: GridSpec, kernel: KernelSpec | None = None, repeats: int = 20,
                  seed: int = 0) -> dict:
    """Cost model next to the published table, plus measured time and memory
    of the decimated TFD on a random analytic signal of ``grid.n_signal``."""
    kernel = kernel or paper_kernel()
    if kernel.lag_half_length != grid.lag_half_length:
        kernel = KernelSpec(replace(kernel.lag_window, length=2 * grid.lag_half_length - 1),
                            kernel.doppler_window)
    report = cost_report(grid)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(grid.n_signal) + 1j * rng.standard_normal(grid.n_signal)
    separable_tfd_efficient(z, kernel, grid)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        separable_tfd_efficient(z, kernel, grid)
        times.append(time.perf_counter() - t0)
    tracemalloc.start()
    try:
        separable_tfd_efficient(z, kernel, grid)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return {
        "grid": asdict(grid),
        "computed": asdict(report),
        "published": dict(PUBLISHED_COSTS),
        "median_ms": 1e3 * float(np.median(times)),
        "peak_bytes": int(peak),
        "peak_real_values": int(peak // 8),
    }


def format_benchmark(result: dict) -> str:
    c, p = result["computed"], result["published"]
    g = result["grid"]
    rows = [
        f"grid: N={g['n_signal']} P_h={g['lag_half_length']} N_time={g['n_time']} N_freq={g['n_freq']}",
        "",
        f"{'':<24}{'computed':>16}{'published':>16}",
        f"{'ops full-TFD':<24}{c['ops_full']:>16,}{p['ops_full']:>16,}",
        f"{'ops efficient-TFD':<24}{c['ops_efficient']:>16,}{p['ops_efficient']:>16,}",
        f"{'ops % of full':<24}{c['reduction_ops']:>16.2f}{p['reduction_ops']:>16.1f}",
        f"{'memory full-TFD':<24}{c['mem_full']:>16,}{p['mem_full']:>16,}",
        f"{'memory efficient-TFD':<24}{c['mem_efficient']:>16,}{p['mem_efficient']:>16,}",
        f"{'memory % of full':<24}{c['reduction_mem']:>16.3f}{p['reduction_mem']:>16.1f}",
        "",
        f"efficient TFD wall-clock (median): {result['median_ms']:.2f} ms",
        f"peak traced working set: {result['peak_bytes']:,} bytes "
        f"({result['peak_real_values']:,} real values)",
    ]
    return "\n".join(rows) + "\n"
