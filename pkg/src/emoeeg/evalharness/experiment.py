"""End-to-end cross-validated experiments: load, preprocess, featurize, search, evaluate."""
from __future__ import annotations

import hashlib
import json
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import csp as csp_mod
from .. import mlclf, topomap
from ..datamodel import DatasetManifest, Epoch, load_manifest, load_trial
from ..neuralnet import TrainConfig, TrainingDiverged, build_cnn
from ..neuralnet import train as train_cnn
from ..preprocess import (OUTLIER_THRESHOLD_UV, BandpassSpec, apply_pca, apply_znorm,
                          design_bandpass, fit_pca, fit_znorm, preprocess_trial)
from ..spectral import spv
from .audit import FitAudit
from .folds import FOLD_MODES, FoldPlan, plan_folds, stratified_holdout
from .metrics import (accuracy, confusion_matrix, misclassification_table, per_class_prf,
                      sensitivity, specificity, weighted_f1)
from .tasks import LabeledSet, TaskSpec, build_task

FEATURE_KINDS = ("spv", "csp", "raw", "image", "movie")
CNN_MODELS = ("cnn1d", "cnn2d", "cnn3d")
MODEL_KINDS = mlclf.KINDS + CNN_MODELS
DEFAULT_CNN_GRID = ({"lr": 1e-3, "optimizer": "adam", "dropout": 0.25},)
_CNN_DEFAULTS = {"max_epochs": 30, "batch_size": 32, "patience": 5, "dtype": "float32",
                 "stride": 1, "activation": "tanh", "val_fraction": 0.1}
_CNN_GRID_KEYS = {"lr", "optimizer", "dropout", "batch_size"}
REPORT_FORMAT = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskSpec
    feature: str
    model: str
    grid: tuple = ()
    cv_k: int = 10
    cv_mode: str = "epoch_level"
    cv_seed: int = 0
    seed: int = 0
    manifest: str | None = None
    synth: dict | None = None           # cohort spec generated in memory instead of a manifest
    pca: bool = True
    pca_retain: float = 0.95
    leaky_norm: bool = False
    outlier_uv: float = OUTLIER_THRESHOLD_UV
    cnn: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.feature not in FEATURE_KINDS:
            raise ConfigError(f"feature must be one of {FEATURE_KINDS}")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}")
        need = {"cnn2d": ("image",), "cnn3d": ("movie",), "cnn1d": ("spv", "csp", "raw")}
        if self.model in need and self.feature not in need[self.model]:
            raise ConfigError(f"{self.model} takes {'/'.join(need[self.model])} features")
        if self.model in mlclf.KINDS and self.feature in ("image", "movie"):
            raise ConfigError(f"{self.feature} features are for the 2D/3D CNNs")
        if self.cv_mode not in FOLD_MODES:
            raise ConfigError(f"cv mode must be one of {FOLD_MODES}")
        if self.cv_k < 2:
            raise ConfigError("cv k must be >= 2")
        if (self.manifest is None) == (self.synth is None):
            raise ConfigError("give exactly one data source: manifest or synth")
        unknown = set(self.cnn) - set(_CNN_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown cnn settings {sorted(unknown)}")
        object.__setattr__(self, "cnn", {**_CNN_DEFAULTS, **self.cnn})
        grid = tuple(dict(g) for g in self.grid) or self.default_grid()
        for g in grid:
            if self.is_cnn:
                bad = set(g) - _CNN_GRID_KEYS
                if bad:
                    raise ConfigError(f"unknown CNN grid keys {sorted(bad)}")
                try:
                    self.train_config(g, 0)
                except ValueError as exc:
                    raise ConfigError(f"bad CNN grid point {g}: {exc}") from None
            else:
                try:
                    mlclf.ClassifierSpec(self.model, g)
                except mlclf.ClassifierError as exc:
                    raise ConfigError(str(exc)) from None
        object.__setattr__(self, "grid", grid)

    @property
    def is_cnn(self) -> bool:
        return self.model in CNN_MODELS

    @property
    def cnn_kind(self) -> str:
        return {"cnn1d": f"cnn1d_{self.feature}", "cnn2d": "cnn2d", "cnn3d": "cnn3d"}[self.model]

    def default_grid(self) -> tuple:
        if self.is_cnn:
            return DEFAULT_CNN_GRID
        return tuple(mlclf.DEFAULT_GRIDS[self.model])

    def train_config(self, point: dict, seed: int) -> TrainConfig:
        c = self.cnn
        return TrainConfig(lr=float(point.get("lr", 1e-3)),
                           optimizer=str(point.get("optimizer", "adam")),
                           dropout=float(point.get("dropout", 0.25)),
                           batch_size=int(point.get("batch_size", c["batch_size"])),
                           max_epochs=int(c["max_epochs"]), seed=seed,
                           patience=int(c["patience"]), dtype=c["dtype"])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task"] = self.task.to_dict()
        d["grid"] = [dict(g) for g in self.grid]
        d["cv"] = {"k": d.pop("cv_k"), "mode": d.pop("cv_mode"), "seed": d.pop("cv_seed")}
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        d = dict(d)
        known = {"task", "feature", "model", "grid", "cv", "seed", "manifest", "synth", "pca",
                 "pca_retain", "leaky_norm", "outlier_uv", "cnn"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("task", "feature", "model"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        task = d.pop("task")
        if isinstance(task, str):
            task = {"kind": task}
        try:
            d["task"] = TaskSpec(**task)
        except TypeError as exc:
            raise ConfigError(f"bad task: {exc}") from None
        cv = d.pop("cv", {}) or {}
        bad_cv = set(cv) - {"k", "mode", "seed"}
        if bad_cv:
            raise ConfigError(f"unknown cv keys {sorted(bad_cv)}")
        d["cv_k"], d["cv_mode"], d["cv_seed"] = (int(cv.get("k", 10)), cv.get("mode", "epoch_level"),
                                                 int(cv.get("seed", 0)))
        d["grid"] = tuple(d.get("grid") or ())
        if d.get("manifest") is not None and base_dir is not None:
            p = Path(d["manifest"])
            d["manifest"] = str(p if p.is_absolute() else Path(base_dir) / p)
        return cls(**d)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("manifest", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def describe_point(self, point: dict) -> str:
        if self.is_cnn:
            return f"{self.cnn_kind}({', '.join(f'{k}={v}' for k, v in sorted(point.items()))})"
        return mlclf.ClassifierSpec(self.model, point).describe()


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return ExperimentConfig.from_dict(raw, path.parent)


# ---------------------------------------------------------------- data

@dataclass
class EpochSet:
    """Filtered epochs of a dataset as one array plus per-epoch labels."""
    data: np.ndarray                # (n, 14, 640)
    meta: list                      # Epoch objects without duplicated storage
    dropped: int = 0
    dropped_per_trial: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.meta)


@dataclass(frozen=True)
class EpochMeta:
    subject_id: str
    cohort: str
    emotion: str
    trial_index: int
    start: int


def epochs_from_trials(trials, threshold_uv: float = OUTLIER_THRESHOLD_UV) -> EpochSet:
    sos = design_bandpass(BandpassSpec())
    data, meta, per_trial = [], [], {}
    dropped = 0
    for tr in trials:
        eps, d = preprocess_trial(tr, sos, threshold_uv)
        dropped += d
        if d:
            per_trial[f"{tr.subject_id}/{tr.emotion}/{tr.trial_index}"] = d
        for ep in eps:
            data.append(ep.data)
            meta.append(EpochMeta(ep.subject_id, ep.cohort, ep.emotion, ep.trial_index, ep.start))
    arr = np.stack(data) if data else np.zeros((0, 14, 640))
    return EpochSet(arr, meta, dropped, per_trial)


def load_epochs(manifest: DatasetManifest, threshold_uv: float = OUTLIER_THRESHOLD_UV) -> EpochSet:
    return epochs_from_trials((load_trial(e, manifest.root) for e in manifest.trials), threshold_uv)


def config_epochs(config: ExperimentConfig) -> tuple[EpochSet, dict]:
    """Epochs for the config's data source, plus a provenance record."""
    if config.manifest is not None:
        manifest = load_manifest(config.manifest)
        raw = Path(config.manifest).read_bytes()
        source = {"manifest_sha256": hashlib.sha256(raw).hexdigest(), "trials": len(manifest)}
        return load_epochs(manifest, config.outlier_uv), source
    from ..synthgen import CohortSpec, generate_trials
    spec = CohortSpec.from_dict(config.synth)
    return epochs_from_trials(generate_trials(spec), config.outlier_uv), {"synth": spec.to_dict()}


def base_features(kind: str, data: np.ndarray) -> np.ndarray | None:
    """Unsupervised per-epoch features (computed once, independent of folds)."""
    if kind == "spv":
        return spv(data)
    if kind == "raw":
        return np.ascontiguousarray(np.swapaxes(data, 1, 2))       # (n, 640, 14)
    if kind == "image":
        return topomap.image_raster(data)
    if kind == "movie":
        return topomap.movie_raster(data)
    return None                                                    # csp is supervised


# ---------------------------------------------------------------- per-fold evaluation

@dataclass
class _Context:
    config: ExperimentConfig
    labeled: LabeledSet
    data: np.ndarray        # filtered epochs of the labeled set, (n, 14, 640)
    base: np.ndarray | None
    plan: FoldPlan


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def fold_features(ctx: _Context, fold: int, audit: FitAudit):
    """Training/test feature matrices for one fold; every fit sees training rows only."""
    cfg = ctx.config
    tr, te = ctx.plan.train(fold), ctx.plan.test(fold)
    gid = ctx.labeled.index
    y = ctx.labeled.y
    if cfg.feature == "csp":
        audit.record(fold, "csp", gid[tr])
        classes = sorted(set(y[tr].tolist()))
        groups = {c: ctx.data[tr[y[tr] == c]] for c in classes}
        if len(classes) == 2:
            tf = csp_mod.fit_csp(groups[classes[0]], groups[classes[1]], classes=tuple(classes))
        else:
            tf = csp_mod.fit_csp_multiclass(groups)
        Xtr, Xte = tf.transform(ctx.data[tr]), tf.transform(ctx.data[te])
    elif cfg.feature in ("image", "movie"):
        audit.record(fold, "image_normalizer", gid[tr])
        norm = topomap.fit_normalizer(ctx.base[tr])
        return norm.apply(ctx.base[tr]), norm.apply(ctx.base[te])
    else:
        Xtr, Xte = ctx.base[tr], ctx.base[te]
    shape = Xtr.shape[1:]
    Xtr = Xtr.reshape(len(Xtr), -1)
    Xte = Xte.reshape(len(Xte), -1)
    if cfg.leaky_norm:
        everything = np.concatenate([Xtr, Xte])
        audit.record(fold, "znorm", gid)
        zn = fit_znorm(everything)
    else:
        audit.record(fold, "znorm", gid[tr])
        zn = fit_znorm(Xtr)
    Xtr, Xte = apply_znorm(zn, Xtr), apply_znorm(zn, Xte)
    if cfg.is_cnn:
        if cfg.feature == "raw":
            return Xtr.reshape((-1,) + shape), Xte.reshape((-1,) + shape)
        return Xtr[..., None], Xte[..., None]
    if cfg.pca:
        if cfg.leaky_norm:
            audit.record(fold, "pca", gid)
            pm = fit_pca(np.concatenate([Xtr, Xte]), cfg.pca_retain)
        else:
            audit.record(fold, "pca", gid[tr])
            pm = fit_pca(Xtr, cfg.pca_retain)
        Xtr, Xte = apply_pca(pm, Xtr), apply_pca(pm, Xte)
    return Xtr, Xte


def _fit_predict(ctx: _Context, fold: int, g: int, point: dict, Xtr, ytr, Xte,
                 audit: FitAudit) -> np.ndarray:
    cfg = ctx.config
    gid_tr = ctx.labeled.index[ctx.plan.train(fold)]
    if not cfg.is_cnn:
        audit.record(fold, "classifier", gid_tr)
        model = mlclf.train(mlclf.ClassifierSpec(cfg.model, point), Xtr, ytr)
        return model.predict(Xte)
    seed = derive_seed(cfg.seed, fold, g)
    fit_pos, val_pos = stratified_holdout(ytr, cfg.cnn["val_fraction"], [cfg.seed, fold, g, 3])
    audit.record(fold, "cnn", gid_tr[np.concatenate([fit_pos, val_pos])])
    spec = build_cnn(cfg.cnn_kind, len(cfg.task.classes), stride=int(cfg.cnn["stride"]),
                     activation=cfg.cnn["activation"])
    net = train_cnn(spec, (Xtr[fit_pos], ytr[fit_pos]), (Xtr[val_pos], ytr[val_pos]),
                    cfg.train_config(point, seed))
    return net.predict(Xte)


def evaluate_fold(ctx: _Context, fold: int):
    """Evaluate every grid point on one fold. Returns (outcomes, audit)."""
    audit = FitAudit()
    tr, te = ctx.plan.train(fold), ctx.plan.test(fold)
    y = ctx.labeled.y
    Xtr, Xte = fold_features(ctx, fold, audit)
    outcomes = []
    for g, point in enumerate(ctx.config.grid):
        try:
            pred = _fit_predict(ctx, fold, g, point, Xtr, y[tr], Xte, audit)
            outcomes.append({"pred": np.asarray(pred, dtype=np.int64), "error": None})
        except (TrainingDiverged, mlclf.ClassifierError, np.linalg.LinAlgError,
                csp_mod.CspError, FloatingPointError, ValueError) as exc:
            outcomes.append({"pred": None, "error": f"{type(exc).__name__}: {exc}"})
    return outcomes, audit


_WORKER_CTX: _Context | None = None


def _worker(fold: int):
    return evaluate_fold(_WORKER_CTX, fold)


def run_folds(ctx: _Context, jobs: int = 1):
    """Evaluate all folds, optionally in forked worker processes; order is fixed."""
    global _WORKER_CTX
    folds = range(ctx.plan.k)
    if jobs <= 1 or "fork" not in mp.get_all_start_methods():
        return [evaluate_fold(ctx, f) for f in folds]
    _WORKER_CTX = ctx
    try:
        with ProcessPoolExecutor(max_workers=jobs, mp_context=mp.get_context("fork")) as pool:
            return list(pool.map(_worker, folds))
    finally:
        _WORKER_CTX = None


# ---------------------------------------------------------------- reports

@dataclass
class EvalReport:
    config: dict
    label: str
    classes: tuple
    folds: list                     # per-fold dicts
    failed: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed is None

    def values(self, metric: str) -> np.ndarray:
        return np.array([f[metric] for f in self.folds], dtype=np.float64)

    def mean(self, metric: str) -> float:
        return float(np.mean(self.values(metric)))

    def std(self, metric: str) -> float:
        return float(np.std(self.values(metric)))        # population convention

    @property
    def confusion(self) -> np.ndarray:
        return np.sum([np.asarray(f["confusion"]) for f in self.folds], axis=0)

    def summary(self) -> dict:
        if not self.ok:
            return {"label": self.label, "config": self.config, "failed": self.failed}
        binary = len(self.classes) == 2
        metrics = ["weighted_f1", "accuracy"] + (["sensitivity", "specificity"] if binary else [])
        cm = self.confusion
        prf = per_class_prf(cm)
        return {
            "label": self.label, "config": self.config, "failed": None,
            "metrics": {m: {"mean": self.mean(m), "std": self.std(m)} for m in metrics},
            "pooled_confusion": cm.tolist(),
            "per_class": [{"class": c, "precision": float(prf["precision"][i]),
                           "recall": float(prf["recall"][i]), "f1": float(prf["f1"][i]),
                           "support": int(prf["support"][i])}
                          for i, c in enumerate(self.classes)],
            "misclassification": misclassification_table(cm, list(self.classes)),
        }


def fold_metrics(y_true, y_pred, n_classes: int, fold: int, n_train: int) -> dict:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    row = {"fold": fold, "n_train": int(n_train), "n_test": int(len(y_true)),
           "weighted_f1": weighted_f1(cm), "accuracy": accuracy(cm), "confusion": cm.tolist()}
    if n_classes == 2:
        row["sensitivity"] = sensitivity(cm, 0)
        row["specificity"] = specificity(cm, 0)
    return row


def select_best(reports: list[EvalReport]) -> int:
    """Highest mean weighted F1; ties go to the earliest grid point (grids list simplest first)."""
    best, best_f1 = None, -np.inf
    for i, r in enumerate(reports):
        if r.ok and r.mean("weighted_f1") > best_f1:
            best, best_f1 = i, r.mean("weighted_f1")
    if best is None:
        raise RuntimeError("every grid point failed: "
                           + "; ".join(f"{r.label}: {r.failed}" for r in reports))
    return best


def grid_search(grid, plan: FoldPlan, y, evaluate, classes, labeler=str) -> tuple[int, list[EvalReport]]:
    """Evaluate each grid point on the same folds with `evaluate(g, point, fold) -> predictions`.

    A grid point whose evaluation raises in any fold is marked failed; the
    search only fails if every point does.
    """
    y = np.asarray(y)
    reports = []
    for g, point in enumerate(grid):
        rows, failed = [], None
        for f in range(plan.k):
            try:
                pred = evaluate(g, point, f)
            except Exception as exc:          # recorded per grid point, see docstring
                failed = f"fold {f}: {type(exc).__name__}: {exc}"
                break
            rows.append(fold_metrics(y[plan.test(f)], pred, len(classes), f, len(plan.train(f))))
        reports.append(EvalReport(dict(point), labeler(point), tuple(classes),
                                  rows if failed is None else [], failed))
    return select_best(reports), reports


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reports: list
    best: int
    plan: FoldPlan
    labeled: LabeledSet
    audit: FitAudit
    source: dict
    dropped: int

    @property
    def best_report(self) -> EvalReport:
        return self.reports[self.best]

    def test_sets(self) -> dict:
        return {f: self.labeled.index[self.plan.test(f)] for f in range(self.plan.k)}


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None, jobs: int = 1,
                   epochs: EpochSet | None = None, source: dict | None = None) -> ExperimentResult:
    """Run the full pipeline; with `out_dir`, persist the report files there."""
    if epochs is None:
        epochs, source = config_epochs(config)
    labeled = build_task(epochs.meta, config.task)
    data = epochs.data[labeled.index]
    plan = plan_folds(labeled.y, labeled.groups, config.cv_k, config.cv_mode, config.cv_seed)
    ctx = _Context(config, labeled, data, base_features(config.feature, data), plan)
    fold_out = run_folds(ctx, jobs)
    audit = FitAudit()
    for _, a in fold_out:
        audit.extend(a)

    def evaluate(g, point, f):
        o = fold_out[f][0][g]
        if o["error"] is not None:
            raise RuntimeError(o["error"])
        return o["pred"]

    best, reports = grid_search(config.grid, plan, labeled.y, evaluate, config.task.classes,
                                config.describe_point)
    result = ExperimentResult(config, reports, best, plan, labeled, audit, source or {},
                              epochs.dropped)
    if out_dir is not None:
        from .report import write_run
        write_run(result, out_dir)
    return result
