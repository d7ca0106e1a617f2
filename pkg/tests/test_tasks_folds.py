from collections import Counter
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emoeeg.datamodel import COHORTS, EMOTIONS
from emoeeg.evalharness import (FitAudit, FoldError, TaskError, TaskSpec, build_task, plan_folds,
                                stratified_holdout)


@dataclass
class Rec:
    subject_id: str
    cohort: str
    emotion: str


def balanced(n_subj=4, per=3):
    return [Rec(f"{c}{s}", c, e) for c in COHORTS for s in range(n_subj) for e in EMOTIONS
            for _ in range(per)]


def test_task_ratios_on_balanced_corpus():
    recs = balanced()
    v = build_task(recs, TaskSpec("valence")).class_counts
    a = build_task(recs, TaskSpec("arousal")).class_counts
    p = build_task(recs, TaskSpec("pd_vs_hc")).class_counts
    assert 2 * v["HV"] == v["LV"]
    assert a["HA"] == 5 * a["LA"]
    assert p["PD"] == p["HC"]
    e = build_task(recs, TaskSpec("emotion6")).class_counts
    assert len(set(e.values())) == 1 and list(e) == list(EMOTIONS)


def test_label_mapping():
    t = TaskSpec("valence")
    assert [t.label_name("PD", e) for e in EMOTIONS] == [
        {"happiness": "HV", "surprise": "HV"}.get(e, "LV") for e in EMOTIONS]
    t = TaskSpec("arousal")
    assert [e for e in EMOTIONS if t.label_name("HC", e) == "LA"] == ["sadness"]
    assert TaskSpec("pd_vs_hc").label("HC", "fear") == 1
    assert TaskSpec("pd_vs_hc").positive == "PD"


def test_filters_and_contract():
    recs = balanced()
    pd_only = build_task(recs, TaskSpec("valence", cohort="PD"))
    assert all(recs[i].cohort == "PD" for i in pd_only.index)
    fear = build_task(recs, TaskSpec("pd_vs_hc", emotion="fear"))
    assert len(fear) == 2 * 4 * 3 and TaskSpec("pd_vs_hc", emotion="fear").describe() == "pd_vs_hc[fear]"
    with pytest.raises(TaskError):
        TaskSpec("pd_vs_hc", cohort="PD")
    with pytest.raises(TaskError):
        TaskSpec("valence", emotion="fear")
    with pytest.raises(TaskError):
        TaskSpec("dominance")
    with pytest.raises(TaskError):
        build_task([r for r in recs if r.cohort == "PD"], TaskSpec("pd_vs_hc"))


labels_st = st.lists(st.integers(0, 2), min_size=30, max_size=150).filter(
    lambda ys: min(Counter(ys).values()) >= 5 and len(set(ys)) >= 2)


@given(labels_st, st.integers(2, 5), st.integers(0, 1000))
def test_epoch_folds_partition_and_stratify(ys, k, seed):
    y = np.array(ys)
    plan = plan_folds(y, k=k, seed=seed)
    allidx = np.concatenate(plan.tests)
    assert sorted(allidx.tolist()) == list(range(len(y)))
    for i in range(k):
        assert np.intersect1d(plan.train(i), plan.test(i)).size == 0
        assert len(plan.train(i)) + len(plan.test(i)) == len(y)
    sizes = [len(t) for t in plan.tests]
    assert max(sizes) - min(sizes) <= 1
    for c in set(ys):
        per = [int(np.sum(y[t] == c)) for t in plan.tests]
        assert max(per) - min(per) <= 1
    again = plan_folds(y, k=k, seed=seed)
    assert all(np.array_equal(a, b) for a, b in zip(plan.tests, again.tests))


@given(st.integers(10, 30), st.integers(2, 6), st.integers(0, 1000))
def test_subject_folds_keep_subjects_whole(n_subj, per, seed):
    groups = np.repeat([f"s{i}" for i in range(n_subj)], per)
    y = np.repeat(np.arange(n_subj) % 2, per)
    plan = plan_folds(y, groups, k=5, mode="subject_level", seed=seed)
    fold_of = plan.fold_of()
    for s in set(groups):
        assert len(set(fold_of[groups == s].tolist())) == 1


def test_fold_errors():
    with pytest.raises(FoldError):
        plan_folds(np.array([0] * 20 + [1] * 3), k=5)
    with pytest.raises(FoldError):
        plan_folds(np.zeros(20), k=5, mode="subject_level")
    with pytest.raises(FoldError):
        plan_folds(np.zeros(20), k=5, mode="trial_level")
    with pytest.raises(FoldError):
        plan_folds(np.zeros(20), groups=np.repeat(["a", "b"], 10), k=5, mode="subject_level")


@given(st.lists(st.integers(0, 1), min_size=4, max_size=80).filter(lambda v: 0 < sum(v) < len(v) - 1),
       st.floats(0.05, 0.5))
def test_stratified_holdout(ys, frac):
    y = np.array(ys)
    fit, hold = stratified_holdout(y, frac, 3)
    assert sorted(np.concatenate([fit, hold]).tolist()) == list(range(len(y)))
    assert set(y[fit].tolist()) == {0, 1}


def test_audit_detects_leaks():
    a = FitAudit()
    a.record(0, "znorm", [1, 2, 3])
    a.record(1, "znorm", [5, 6])
    assert a.violations({0: np.array([9]), 1: np.array([7])}) == []
    assert a.violations({0: np.array([2, 3]), 1: np.array([7])}) == [(0, "znorm", 2)]
    assert a.stages() == ["znorm"]
