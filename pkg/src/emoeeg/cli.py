"""emoeeg command line: synth | preprocess | features | run | report.

Exit status: 0 success, 1 runtime failure, 2 usage or contract error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("emoeeg")

OUT_ROOT_ENV = "EMOEEG_OUT"


class UsageError(Exception):
    """Bad arguments or inputs that violate a command's contract (exit 2)."""


def _contract_errors():
    from .csp import CspError
    from .datamodel import DataError
    from .evalharness.experiment import ConfigError
    from .evalharness.folds import FoldError
    from .evalharness.report import ReportError
    from .evalharness.tasks import TaskError
    from .store import StoreError
    from .synthgen import SynthError
    return (UsageError, DataError, ConfigError, FoldError, ReportError, TaskError, StoreError,
            SynthError, CspError, FileNotFoundError, json.JSONDecodeError)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _provenance(command: str, inputs: dict, extra: dict | None = None) -> dict:
    from .datamodel import MANIFEST_VERSION
    from .evalharness.report import _code_version
    from .store import FORMAT_VERSION
    return {"command": command, "inputs": inputs, "code_version": _code_version(),
            "formats": {"manifest": MANIFEST_VERSION, "store": FORMAT_VERSION}, **(extra or {})}


def _jobs(value: int | None) -> int:
    return value if value and value > 0 else (os.cpu_count() or 1)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    from .synthgen import generate, load_spec
    spec = load_spec(_require_file(args.spec, "cohort spec"))
    out = Path(args.out)
    log.info("generating %d trials into %s", spec.n_trials, out)
    manifest = generate(spec, out, jobs=_jobs(args.jobs))
    _dump(out / "provenance.json", _provenance("synth", {"spec": spec.to_dict()}))
    log.info("wrote %d trials", len(manifest))
    return 0


def _load_epochs(manifest_path: str, threshold: float):
    from .datamodel import load_manifest
    from .evalharness.experiment import load_epochs
    manifest = load_manifest(_require_file(manifest_path, "manifest"))
    log.info("preprocessing %d trials", len(manifest))
    return load_epochs(manifest, threshold)


def _epoch_table(meta) -> str:
    lines = ["index,subject,cohort,emotion,trial,start"]
    lines += [f"{i},{m.subject_id},{m.cohort},{m.emotion},{m.trial_index},{m.start}"
              for i, m in enumerate(meta)]
    return "\n".join(lines) + "\n"


def cmd_preprocess(args) -> int:
    from . import store
    es = _load_epochs(args.manifest, args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store.save(out / "epochs.store", "epochs", {"data": es.data}, {"n": len(es)})
    (out / "epochs.csv").write_text(_epoch_table(es.meta), encoding="utf-8")
    _dump(out / "rejection.json", {"threshold_uv": args.threshold, "kept": len(es),
                                   "dropped": es.dropped, "dropped_per_trial": es.dropped_per_trial})
    _dump(out / "provenance.json", _provenance(
        "preprocess", {"manifest": str(args.manifest)},
        {"bandpass": {"low": 8.0, "high": 49.0, "order": 4, "zero_phase": True},
         "threshold_uv": args.threshold}))
    log.info("kept %d epochs, dropped %d", len(es), es.dropped)
    return 0


def cmd_features(args) -> int:
    from . import csp as csp_mod
    from . import store, topomap
    from .evalharness.experiment import base_features
    from .evalharness.tasks import TaskSpec, build_task
    if args.kind == "csp" and not args.task:
        raise UsageError("csp features are supervised: pass --task to supply labels")
    es = _load_epochs(args.manifest, args.threshold)
    meta, data = es.meta, es.data
    extra = {"kind": args.kind}
    if args.task:
        task = TaskSpec(args.task, cohort=args.cohort, emotion=args.emotion)
        labeled = build_task(meta, task)
        meta = [meta[i] for i in labeled.index]
        data = data[labeled.index]
        extra["task"] = task.to_dict()
    if args.kind == "csp":
        y = labeled.y
        groups = {c: data[y == c] for c in sorted(set(y.tolist()))}
        tf = (csp_mod.fit_csp(*groups.values(), classes=tuple(groups)) if len(groups) == 2
              else csp_mod.fit_csp_multiclass(groups))
        X = tf.transform(data)
        extra["csp_filters"] = tf.filters.tolist()
    else:
        X = base_features(args.kind, data)
        if args.kind in ("image", "movie"):
            norm = topomap.fit_normalizer(X)
            X = norm.apply(X)
            extra["normalizer"] = {"lo": norm.lo.tolist(), "hi": norm.hi.tolist(),
                                   "fitted_on": "all records in this store"}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store.save_tensor(out / "features.store", np.asarray(X, dtype=np.float32),
                      {"kind": args.kind, "records": len(X)})
    (out / "records.csv").write_text(_epoch_table(meta), encoding="utf-8")
    _dump(out / "provenance.json", _provenance("features", {"manifest": str(args.manifest)}, extra))
    log.info("wrote %d %s records of shape %s", len(X), args.kind, tuple(np.shape(X)[1:]))
    return 0


def cmd_run(args) -> int:
    from dataclasses import replace
    from .evalharness.experiment import load_config, run_experiment
    cfg = load_config(_require_file(args.config, "config"))
    if args.leaky_norm:
        cfg = replace(cfg, leaky_norm=True)
    if args.stride3:
        cfg = replace(cfg, cnn={**cfg.cnn, "stride": 3})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out) if args.out else (Path(os.environ.get(OUT_ROOT_ENV, "runs"))
                                           / Path(args.config).stem)
    log.info("running %s / %s / %s -> %s", cfg.task.describe(), cfg.feature, cfg.model, out)
    result = run_experiment(cfg, out_dir=out, jobs=_jobs(args.jobs))
    best = result.best_report
    log.info("best %s: weighted F1 %.4f +/- %.4f", best.label, best.mean("weighted_f1"),
             best.std("weighted_f1"))
    return 0


def cmd_report(args) -> int:
    from . import store
    from .evalharness import report
    if args.ppm:
        src, idx, dest = args.ppm
        arr, _ = store.load_tensor(_require_file(src, "tensor store"))
        img = arr[int(idx)]
        if img.ndim == 4:
            img = img[0]
        store.write_ppm(dest, img)
        return 0
    if not args.runs:
        raise UsageError("report needs at least one run directory")
    for d in args.runs:
        if not Path(d).is_dir():
            raise UsageError(f"run directory not found: {d}")
    if args.compare:
        result = report.compare(args.runs, metric=args.metric)
        text = report.compare_markdown(result)
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            _dump(out / "compare.json", result)
            (out / "compare.md").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
        return 0
    for d in args.runs:
        report.render(d)
        sys.stdout.write(Path(d, "table.md").read_text(encoding="utf-8"))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    from .evalharness.experiment import FEATURE_KINDS
    from .evalharness.tasks import TASK_KINDS
    from .preprocess import OUTLIER_THRESHOLD_UV
    p = argparse.ArgumentParser(prog="emoeeg", description="Emotional EEG analysis pipeline.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic cohort (manifest + CSV trials)")
    s.add_argument("spec", help="cohort spec JSON")
    s.add_argument("out", help="output directory")
    s.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="outlier screen, bandpass and epoch a dataset")
    s.add_argument("manifest")
    s.add_argument("out")
    s.add_argument("--threshold", type=float, default=OUTLIER_THRESHOLD_UV,
                   help="amplitude rule in microvolts (default %(default)s)")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("features", help="extract one feature kind into a tensor store")
    s.add_argument("manifest")
    s.add_argument("kind", choices=FEATURE_KINDS)
    s.add_argument("out")
    s.add_argument("--task", choices=TASK_KINDS, help="task labels (required for csp)")
    s.add_argument("--cohort", default="Full", help="cohort filter for valence/arousal/emotion6")
    s.add_argument("--emotion", default="Full", help="emotion filter for pd_vs_hc")
    s.add_argument("--threshold", type=float, default=OUTLIER_THRESHOLD_UV)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("run", help="run a cross-validated experiment from a config JSON")
    s.add_argument("config")
    s.add_argument("--out", help=f"output directory (default: ${OUT_ROOT_ENV} or ./runs, "
                                 "plus the config name)")
    s.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    s.add_argument("--seed", type=int, default=None, help="override the master seed")
    s.add_argument("--leaky-norm", action="store_true",
                   help="fit z-norm/PCA on the whole task set instead of training folds")
    s.add_argument("--stride3", action="store_true",
                   help="experimental: convolutions with stride 3 instead of 1")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="re-render run reports or compare runs")
    s.add_argument("runs", nargs="*", help="run directories")
    s.add_argument("--compare", action="store_true",
                   help="ANOVA / Tukey HSD / t-test across the runs' per-fold metrics")
    s.add_argument("--metric", default="weighted_f1",
                   choices=("weighted_f1", "sensitivity", "specificity", "accuracy"))
    s.add_argument("--out", help="directory for compare.json / compare.md")
    s.add_argument("--ppm", nargs=3, metavar=("STORE", "INDEX", "OUT"),
                   help="write one image record of a tensor store as a PPM file")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except _contract_errors() as exc:
        print(f"emoeeg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:        # runtime failure: report, exit 1
        log.debug("traceback", exc_info=True)
        print(f"emoeeg {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
