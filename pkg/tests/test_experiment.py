import csv
import json

import numpy as np
import pytest

from emoeeg.evalharness import metrics as mt
from emoeeg.evalharness import plan_folds
from emoeeg.evalharness.experiment import (ConfigError, ExperimentConfig, grid_search, load_config,
                                           run_experiment, select_best)
from emoeeg.evalharness.report import ReportError, compare, load_summary, render

SYNTH = {"subjects_per_cohort": 3, "trials_per_emotion": 1, "duration_s": 10, "seed": 2,
         "effects": [{"gains": [1, 1, 2.5], "cohort": "PD", "channels": "frontal"}]}


def cfg(**kw):
    base = {"task": {"kind": "pd_vs_hc"}, "feature": "spv", "model": "lda", "cv": {"k": 5},
            "synth": SYNTH}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


@pytest.fixture(scope="module")
def lda_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_experiment(cfg(), out_dir=out), out


def test_grid_search_singleton_and_ties():
    y = np.array([0, 1] * 10)
    plan = plan_folds(y, k=5)
    best, reports = grid_search([{"a": 1}], plan, y, lambda g, p, f: y[plan.test(f)], ("x", "z"))
    assert best == 0 and reports[0].mean("weighted_f1") == 1.0
    # two equally good points: the earlier one wins
    best, _ = grid_search([{"a": 1}, {"a": 2}], plan, y, lambda g, p, f: y[plan.test(f)], ("x", "z"))
    assert best == 0
    # a failing point is recorded and skipped
    def ev(g, p, f):
        if g == 0:
            raise ValueError("boom")
        return 1 - y[plan.test(f)]
    best, reports = grid_search([{}, {}], plan, y, ev, ("x", "z"))
    assert best == 1 and not reports[0].ok and "boom" in reports[0].failed
    with pytest.raises(RuntimeError):
        grid_search([{}], plan, y, lambda g, p, f: 1 / 0, ("x", "z"))


def test_select_best_prefers_higher_f1():
    y = np.array([0, 1] * 10)
    plan = plan_folds(y, k=5)
    _, reports = grid_search([{}, {}], plan, y,
                             lambda g, p, f: y[plan.test(f)] if g else 1 - y[plan.test(f)], ("x", "z"))
    assert select_best(reports) == 1


def test_config_contract(tmp_path):
    with pytest.raises(ConfigError):
        cfg(feature="image")                 # image features go to the 2D CNN
    with pytest.raises(ConfigError):
        cfg(model="cnn2d")
    with pytest.raises(ConfigError):
        cfg(bogus=1)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"task": "pd_vs_hc", "feature": "spv", "model": "lda"})
    with pytest.raises(ConfigError):
        cfg(grid=[{"k": 3}])                 # knn hyperparameter on lda
    (tmp_path / "c.json").write_text("{oops")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")
    (tmp_path / "d.json").write_text(json.dumps({"task": "valence", "feature": "spv", "model": "knn",
                                                "manifest": "data/manifest.json"}))
    c = load_config(tmp_path / "d.json")
    assert c.manifest == str(tmp_path / "data/manifest.json")
    assert c.grid == tuple({"k": k} for k in (1, 3, 5, 7))
    assert c.digest() == load_config(tmp_path / "d.json").digest()


def test_run_files_and_aggregates(lda_run):
    result, out = lda_run
    for f in ("summary.json", "folds.csv", "grid.csv", "provenance.json", "table.md",
              "misclassification.csv", "report.svg"):
        assert (out / f).is_file()
    s = load_summary(out)
    with open(out / "folds.csv") as fh:
        rows = list(csv.DictReader(fh))
    f1 = np.array([float(r["weighted_f1"]) for r in rows])
    assert abs(s["best"]["metrics"]["weighted_f1"]["mean"] - f1.mean()) <= 1e-12
    assert abs(s["best"]["metrics"]["weighted_f1"]["std"] - f1.std()) <= 1e-12
    # per-fold metrics agree with the per-fold confusion matrices
    for r, cm in zip(rows, s["fold_confusions"]):
        assert float(r["weighted_f1"]) == pytest.approx(mt.weighted_f1(cm), abs=1e-12)
        assert float(r["sensitivity"]) == pytest.approx(mt.sensitivity(cm), abs=1e-12)
    assert np.sum(s["fold_confusions"], axis=0).tolist() == s["best"]["pooled_confusion"]
    assert s["n_epochs"] == 72 and s["class_counts"] == {"PD": 36, "HC": 36}
    assert "±" in (out / "table.md").read_text()


def test_run_is_fold_safe_and_injected_leak_is_caught(lda_run):
    result, _ = lda_run
    assert result.audit.violations(result.test_sets()) == []
    assert {"znorm", "pca", "classifier"} <= set(result.audit.stages())
    leaky = run_experiment(cfg(leaky_norm=True))
    v = leaky.audit.violations(leaky.test_sets())
    assert {stage for _, stage, _ in v} == {"znorm", "pca"}


def test_run_is_deterministic_and_jobs_invariant(lda_run, tmp_path):
    result, out = lda_run
    again = run_experiment(cfg(), out_dir=tmp_path / "again", jobs=2)
    for f in ("summary.json", "folds.csv", "provenance.json", "grid.csv", "table.md"):
        assert (out / f).read_bytes() == (tmp_path / "again" / f).read_bytes()
    assert again.best_report.values("weighted_f1").tolist() == result.best_report.values("weighted_f1").tolist()


def test_render_is_idempotent(lda_run, tmp_path):
    _, out = lda_run
    before = {f: (out / f).read_bytes() for f in ("table.md", "misclassification.csv", "report.svg")}
    render(out)
    assert before == {f: (out / f).read_bytes() for f in before}
    with pytest.raises(ReportError):
        render(tmp_path)


@pytest.mark.parametrize("feature,model", [("csp", "lda"), ("spv", "knn"), ("spv", "gnb")])
def test_other_pipelines_learn_the_planted_effect(feature, model):
    r = run_experiment(cfg(feature=feature, model=model))
    assert r.best_report.mean("weighted_f1") > 0.7
    assert r.audit.violations(r.test_sets()) == []


def test_subject_level_and_multiclass_csp():
    r = run_experiment(cfg(cv={"k": 3, "mode": "subject_level"}))
    for f in range(3):
        tr = set(r.labeled.groups[r.plan.train(f)].tolist())
        te = set(r.labeled.groups[r.plan.test(f)].tolist())
        assert not tr & te
    m = run_experiment(cfg(task={"kind": "emotion6"}, feature="csp", cv={"k": 2}))
    assert len(m.best_report.classes) == 6


def test_cnn_pipeline_and_compare(lda_run, tmp_path):
    _, lda_out = lda_run
    c = cfg(model="cnn1d", cnn={"max_epochs": 3})
    r = run_experiment(c, out_dir=tmp_path / "cnn")
    assert r.audit.violations(r.test_sets()) == []
    assert "cnn" in r.audit.stages()
    res = compare([lda_out, tmp_path / "cnn"])
    assert res["anova"]["df"] == [1, 8] and res["t_test"]["df"] == 8
    assert res["anova"]["F"] == pytest.approx(res["t_test"]["t"] ** 2, rel=1e-9, abs=1e-12)
    with pytest.raises(ReportError):
        compare([lda_out])
