"""Command-line entry point: ``burstfd {synth,train,detect,eval,bench}``.

Failures print one JSON object ``{"error": <category>, "message": ...}`` to
stderr and exit with the category's nonzero code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import BurstfdError, ConfigError
from .pipeline import (PipelineConfig, corpus_dataset, format_benchmark, load_model_document,
                       model_document, run_benchmark, run_detect, run_eval, train_model)
from .records import apply_overrides, read_config_file, read_manifest
from .synth import SynthConfig, generate_synthetic_corpus
from .tf_engine import GridSpec

_GRID_KEYS = {"N": "n_signal", "Ph": "lag_half_length", "Ntime": "n_time", "Nfreq": "n_freq"}


def parse_grid(text: str) -> GridSpec:
    values = {}
    for part in text.split(","):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in _GRID_KEYS:
            raise ConfigError(f"grid entries are {','.join(_GRID_KEYS)}=<int>, got {part!r}")
        try:
            values[_GRID_KEYS[key]] = int(val)
        except ValueError:
            raise ConfigError(f"grid value for {key} must be an integer, got {val!r}") from None
    missing = set(_GRID_KEYS.values()) - set(values)
    if missing:
        raise ConfigError(f"grid is missing {sorted(missing)}")
    grid = GridSpec(**values)
    grid.validate()
    return grid


def _config_values(args) -> dict[str, str]:
    values = read_config_file(args.config) if args.config else {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        values[key.strip()] = val.strip()
    return values


def _pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_mapping(_config_values(args))
    if getattr(args, "jobs", None):
        cfg = PipelineConfig(cfg.working_rate, cfg.whiten, args.jobs, cfg.filter, cfg.epoch,
                             cfg.kernel, cfg.boost)
    return cfg


def cmd_synth(args) -> int:
    values = _config_values(args)
    PipelineConfig.from_mapping(values)  # rejects unknown keys in every section
    cfg = apply_overrides(SynthConfig(), values, "synth")
    manifest = generate_synthetic_corpus(cfg, args.out)
    print(f"wrote {len(manifest.records)} records to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _pipeline_config(args)
    data = corpus_dataset(read_manifest(args.manifest), cfg)
    model = train_model(data, cfg)
    Path(args.out).write_text(model_document(model))
    print(f"trained {len(model.trees)} trees on {int((data.labels >= 0).sum())} slices")
    return 0


def cmd_detect(args) -> int:
    cfg = _pipeline_config(args)
    model = load_model_document(Path(args.model).read_text())
    written = run_detect(read_manifest(args.manifest), model, args.out, cfg)
    print(f"wrote detections for {len(written)} records to {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _pipeline_config(args)
    outcome = run_eval(read_manifest(args.manifest), cfg, args.out)
    r = outcome.report
    print(f"median AUC {r.median_auc:.3f} over {len(r.per_fold)} folds; report in {args.out}")
    return 0


def cmd_bench(args) -> int:
    result = run_benchmark(parse_grid(args.grid), repeats=args.repeats)
    if args.json:
        print(json.dumps(result, indent=1, sort_keys=True))
    else:
        sys.stdout.write(format_benchmark(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="burstfd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="flat 'section.key = value' file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    p = sub.add_parser("synth", help="generate a synthetic corpus and manifest")
    add_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model on every labelled record")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model document path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="write per-record detection traces")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="leave-one-record-out evaluation")
    add_config(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--jobs", type=int, default=None, help="concurrent folds")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="cost model and timing of the decimated TFD")
    p.add_argument("--grid", default="N=4608,Ph=31,Ntime=144,Nfreq=128")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BurstfdError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
