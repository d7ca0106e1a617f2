"""Persisted run artifacts and their human-readable renderings.

A run directory holds machine-readable files (summary.json, folds.csv,
grid.csv, provenance.json) and renderings derived from them only
(table.md, misclassification.csv, report.svg), so re-rendering is idempotent.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .. import stats
from ..datamodel import MANIFEST_VERSION
from ..store import FORMAT_VERSION as STORE_VERSION
from .experiment import REPORT_FORMAT, ExperimentResult

FOLD_COLUMNS = ("fold", "n_train", "n_test", "weighted_f1", "sensitivity", "specificity",
                "accuracy")
RUN_FILES = ("summary.json", "folds.csv")


class ReportError(ValueError):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _code_version() -> str:
    from importlib import metadata
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def folds_csv(result_folds: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FOLD_COLUMNS)
    for row in result_folds:
        w.writerow([repr(row[c]) if isinstance(row.get(c), float) else row.get(c, "")
                    for c in FOLD_COLUMNS])
    return buf.getvalue()


def read_folds_csv(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (float(v) if v not in ("", None) else None) if k not in ("fold", "n_train", "n_test")
                    else int(v) for k, v in r.items()})
    return out


def write_run(result: ExperimentResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    best = result.best_report
    labeled = result.labeled
    summary = {
        "format": REPORT_FORMAT,
        "task": cfg.task.to_dict(),
        "task_label": cfg.task.describe(),
        "feature": cfg.feature,
        "model": cfg.model,
        "classes": list(cfg.task.classes),
        "positive_class": cfg.task.positive if len(cfg.task.classes) == 2 else None,
        "class_counts": labeled.class_counts,
        "n_epochs": len(labeled),
        "epochs_dropped": result.dropped,
        "cv": {"k": cfg.cv_k, "mode": cfg.cv_mode, "seed": cfg.cv_seed},
        "normalization": "dataset-level (leaky)" if cfg.leaky_norm else "fit on training folds",
        "best_index": result.best,
        "best": best.summary(),
        "fold_confusions": [f["confusion"] for f in best.folds],
        "grid": [r.summary() for r in result.reports],
        "config_digest": cfg.digest(),
    }
    (out / "summary.json").write_text(_dumps(summary), encoding="utf-8")
    (out / "folds.csv").write_text(folds_csv(best.folds), encoding="utf-8")
    grid_buf = io.StringIO()
    w = csv.writer(grid_buf, lineterminator="\n")
    w.writerow(("index", "label", "status", "mean_weighted_f1", "std_weighted_f1"))
    for i, r in enumerate(result.reports):
        if r.ok:
            w.writerow((i, r.label, "ok", repr(r.mean("weighted_f1")), repr(r.std("weighted_f1"))))
        else:
            w.writerow((i, r.label, "failed: " + r.failed, "", ""))
    (out / "grid.csv").write_text(grid_buf.getvalue(), encoding="utf-8")
    provenance = {
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "data_source": result.source,
        "seeds": {"master": cfg.seed, "cv": cfg.cv_seed},
        "fold_plan": result.plan.to_dict(),
        "formats": {"manifest": MANIFEST_VERSION, "store": STORE_VERSION, "report": REPORT_FORMAT},
        "code_version": _code_version(),
        "fitted_stages": sorted({s for _, s, _ in result.audit.entries}),
    }
    (out / "provenance.json").write_text(_dumps(provenance), encoding="utf-8")
    render(out)
    return out


# ---------------------------------------------------------------- renderings

def pm(mean: float, std: float) -> str:
    return f"{mean:.2f} ± {std:.2f}"


def load_summary(run_dir: str | Path) -> dict:
    run = Path(run_dir)
    missing = [f for f in RUN_FILES if not (run / f).is_file()]
    if missing:
        raise ReportError(f"{run}: not a completed run (missing {', '.join(missing)})")
    return json.loads((run / "summary.json").read_text(encoding="utf-8"))


def table_markdown(summaries: list[dict]) -> str:
    lines = ["| task | feature | model | weighted F1 | sensitivity | specificity |",
             "|---|---|---|---|---|---|"]
    for s in summaries:
        best = s["best"]
        m = best["metrics"]
        cell = lambda k: pm(m[k]["mean"], m[k]["std"]) if k in m else "n/a"
        lines.append(f"| {s['task_label']} | {s['feature']} | {best['label']} | "
                     f"{cell('weighted_f1')} | {cell('sensitivity')} | {cell('specificity')} |")
    return "\n".join(lines) + "\n"


def misclassification_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("true_class", "most_mispredicted", "rate"))
    for r in summary["best"]["misclassification"]:
        w.writerow((r["true"], r["most_mispredicted"] or "", f"{r['rate']:.4f}"))
    return buf.getvalue()


def bar_chart_svg(groups: list[tuple[str, dict]], width: int = 640, height: int = 320) -> str:
    """Grouped bars (mean with +/- std whiskers) for weighted F1, sensitivity, specificity."""
    metrics = ("weighted_f1", "sensitivity", "specificity")
    colors = ("#4c72b0", "#dd8452", "#55a868")
    left, bottom, top = 50, 40, 20
    plot_h = height - bottom - top
    gw = (width - left - 10) / max(len(groups), 1)
    bw = gw / (len(metrics) + 1)
    y = lambda v: top + plot_h * (1 - v)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
             f'<line x1="{left}" y1="{top + plot_h}" x2="{width - 10}" y2="{top + plot_h}" stroke="black"/>']
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{left - 6}" y="{y(t) + 4:.1f}" text-anchor="end">{t:.2f}</text>')
    for gi, (name, m) in enumerate(groups):
        x0 = left + gi * gw + bw / 2
        for mi, key in enumerate(metrics):
            if key not in m:
                continue
            mean, std = m[key]["mean"], m[key]["std"]
            x = x0 + mi * bw
            parts.append(f'<rect x="{x:.1f}" y="{y(mean):.1f}" width="{bw * 0.9:.1f}" '
                         f'height="{plot_h * mean:.1f}" fill="{colors[mi]}"/>')
            cx = x + bw * 0.45
            parts.append(f'<line x1="{cx:.1f}" y1="{y(min(mean + std, 1)):.1f}" x2="{cx:.1f}" '
                         f'y2="{y(max(mean - std, 0)):.1f}" stroke="black"/>')
        parts.append(f'<text x="{left + gi * gw + gw / 2:.1f}" y="{height - bottom + 16}" '
                     f'text-anchor="middle">{_esc(name)}</text>')
    for mi, key in enumerate(metrics):
        parts.append(f'<rect x="{left + 10 + mi * 110}" y="4" width="10" height="10" fill="{colors[mi]}"/>'
                     f'<text x="{left + 24 + mi * 110}" y="13">{key}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render(run_dir: str | Path) -> None:
    """(Re)build table.md, misclassification.csv and report.svg from the run's data files."""
    run = Path(run_dir)
    summary = load_summary(run)
    (run / "table.md").write_text(table_markdown([summary]), encoding="utf-8")
    (run / "misclassification.csv").write_text(misclassification_csv(summary), encoding="utf-8")
    groups = [(summary["task_label"], summary["best"]["metrics"])]
    (run / "report.svg").write_text(bar_chart_svg(groups), encoding="utf-8")


# ---------------------------------------------------------------- comparisons

def compare(run_dirs, metric: str = "weighted_f1", alpha: float = 0.05) -> dict:
    """Per-fold metric comparison across runs: ANOVA, Tukey HSD and (for two runs) a t-test."""
    if len(run_dirs) < 2:
        raise ReportError("comparison needs at least two run directories")
    groups = {}
    for d in run_dirs:
        s = load_summary(d)
        rows = read_folds_csv(Path(d) / "folds.csv")
        vals = [r[metric] for r in rows]
        if any(v is None for v in vals):
            raise ReportError(f"{d}: metric {metric} not available")
        name = f"{s['task_label']}/{s['feature']}/{s['best']['label']}"
        while name in groups:
            name += "'"
        groups[name] = np.array(vals)
    out = {"metric": metric, "groups": {k: {"mean": float(v.mean()), "std": float(v.std()),
                                            "n": int(len(v))} for k, v in groups.items()}}
    a = stats.anova_oneway(groups)
    out["anova"] = {"F": a.F, "df": [a.df_between, a.df_within], "p": a.p, "text": str(a)}
    out["tukey"] = [{"a": r.a, "b": r.b, "diff": r.diff, "q": r.q, "p": r.p,
                     "significant": bool(r.significant)} for r in stats.tukey_hsd(groups, alpha)]
    if len(groups) == 2:
        t = stats.t_test_two_sample(*groups.values())
        out["t_test"] = {"t": t.t, "df": t.df, "p": t.p, "text": str(t)}
    return out


def compare_markdown(result: dict) -> str:
    lines = [f"metric: {result['metric']}", "", "| run | mean ± std | n |", "|---|---|---|"]
    for k, g in result["groups"].items():
        lines.append(f"| {k} | {pm(g['mean'], g['std'])} | {g['n']} |")
    lines += ["", f"ANOVA: {result['anova']['text']}"]
    if "t_test" in result:
        lines.append(f"t-test: {result['t_test']['text']}")
    lines += ["", "| pair | diff | q | p | significant |", "|---|---|---|---|---|"]
    for r in result["tukey"]:
        lines.append(f"| {r['a']} vs {r['b']} | {r['diff']:.4f} | {r['q']:.3f} | {r['p']:.4f} | "
                     f"{'yes' if r['significant'] else 'no'} |")
    return "\n".join(lines) + "\n"
