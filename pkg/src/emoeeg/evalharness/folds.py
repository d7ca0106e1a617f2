"""Stratified k-fold plans at epoch or subject granularity."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

FOLD_MODES = ("epoch_level", "subject_level")


class FoldError(ValueError):
    pass


@dataclass(frozen=True)
class FoldPlan:
    k: int
    mode: str
    seed: int
    tests: tuple            # k sorted index arrays
    n: int

    def test(self, i: int) -> np.ndarray:
        return self.tests[i]

    def train(self, i: int) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.tests[i]] = False
        return np.flatnonzero(mask)

    def fold_of(self) -> np.ndarray:
        out = np.empty(self.n, dtype=np.int64)
        for i, t in enumerate(self.tests):
            out[t] = i
        return out

    def to_dict(self) -> dict:
        return {"k": self.k, "mode": self.mode, "seed": self.seed,
                "folds": [t.tolist() for t in self.tests]}


def _deal(items: list, k: int, start: int, bins: list[list]) -> int:
    for j, it in enumerate(items):
        bins[(start + j) % k].append(it)
    return (start + len(items)) % k


def plan_folds(labels, groups=None, k: int = 10, mode: str = "epoch_level",
               seed: int = 0) -> FoldPlan:
    """Shuffle each class with a seeded generator and deal it round-robin into k folds.

    In subject_level mode whole subjects are dealt, stratified by each
    subject's majority label, so no subject straddles train and test.
    """
    y = np.asarray(labels)
    n = len(y)
    if mode not in FOLD_MODES:
        raise FoldError(f"mode must be one of {FOLD_MODES}")
    if k < 2:
        raise FoldError("need k >= 2 folds")
    rng = np.random.default_rng(seed)
    bins = [[] for _ in range(k)]
    start = 0
    if mode == "epoch_level":
        for c in sorted(set(y.tolist())):
            idx = np.flatnonzero(y == c)
            if len(idx) < k:
                raise FoldError(f"class {c!r} has {len(idx)} members, fewer than k={k}")
            start = _deal(rng.permutation(idx).tolist(), k, start, bins)
    else:
        if groups is None:
            raise FoldError("subject_level folds need subject groups")
        g = np.asarray(groups)
        members = defaultdict(list)
        for i, s in enumerate(g.tolist()):
            members[s].append(i)
        subjects = sorted(members)
        if len(subjects) < k:
            raise FoldError(f"{len(subjects)} subjects cannot fill k={k} folds")
        majority = {s: Counter(y[members[s]].tolist()).most_common(1)[0][0] for s in subjects}
        by_class = defaultdict(list)
        for s in subjects:
            by_class[majority[s]].append(s)
        for c in sorted(by_class):
            order = [by_class[c][i] for i in rng.permutation(len(by_class[c]))]
            sub_bins = [[] for _ in range(k)]
            start = _deal(order, k, start, sub_bins)
            for b, sb in zip(bins, sub_bins):
                for s in sb:
                    b.extend(members[s])
    tests = tuple(np.array(sorted(b), dtype=np.int64) for b in bins)
    return FoldPlan(k, mode, seed, tests, n)


def stratified_holdout(labels, fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Split positions 0..n-1 into (fit, holdout) keeping ~`fraction` of each class out.

    Every class keeps at least one member on the fit side.
    """
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    hold = []
    for c in sorted(set(y.tolist())):
        idx = rng.permutation(np.flatnonzero(y == c))
        m = int(round(fraction * len(idx)))
        m = min(max(m, 1 if len(idx) > 1 else 0), len(idx) - 1)
        hold.extend(idx[:m].tolist())
    hold = np.array(sorted(hold), dtype=np.int64)
    mask = np.ones(len(y), dtype=bool)
    mask[hold] = False
    return np.flatnonzero(mask), hold
