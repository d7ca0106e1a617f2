"""One-way ANOVA, Tukey HSD and Student's t-test.

Test statistics are computed here; tail probabilities come from scipy's
F, t and studentized-range distributions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy import stats as _dist


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class AnovaResult:
    F: float
    df_between: int
    df_within: int
    p: float

    def __str__(self):
        return f"F({self.df_between},{self.df_within}) = {self.F:.2f}, {_fmt_p(self.p)}"


@dataclass(frozen=True)
class TukeyResult:
    a: str
    b: str
    diff: float            # mean(b) - mean(a)
    q: float
    p: float
    significant: bool


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float

    def __iter__(self):
        return iter((self.t, self.df, self.p))

    def __str__(self):
        return f"t({self.df}) = {self.t:.2f}, {_fmt_p(self.p)}"


def _fmt_p(p: float) -> str:
    return "p < 0.0001" if p < 1e-4 else f"p = {p:.4f}"


def _groups(groups) -> tuple[list[str], list[np.ndarray]]:
    if isinstance(groups, dict):
        names = [str(k) for k in groups]
        arrays = list(groups.values())
    else:
        arrays = list(groups)
        names = [str(i) for i in range(len(arrays))]
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in arrays]
    if len(arrays) < 2:
        raise StatsError("need at least 2 groups")
    for name, g in zip(names, arrays):
        if len(g) < 2:
            raise StatsError(f"group {name} has fewer than 2 values")
        if not np.all(np.isfinite(g)):
            raise StatsError(f"group {name} contains non-finite values")
    return names, arrays


def _f_sf(F: float, d1: int, d2: int) -> float:
    if F == 0:
        return 1.0
    if math.isinf(F):
        return 0.0
    # regularized incomplete beta form of the F upper tail
    return float(special.betainc(d2 / 2, d1 / 2, d2 / (d2 + d1 * F)))


def _within(arrays) -> tuple[np.ndarray, float, int]:
    means = np.array([g.mean() for g in arrays])
    ss_within = sum(float(((g - m) ** 2).sum()) for g, m in zip(arrays, means))
    df_within = sum(len(g) for g in arrays) - len(arrays)
    return means, ss_within, df_within


def _ratio(num: float, den: float, scale: float) -> float:
    """num / den with den considered zero relative to the data scale."""
    tol = 1e-24 * max(scale, 1e-300)
    if den <= tol:
        return 0.0 if num <= tol else math.inf
    return num / den


def anova_oneway(groups) -> AnovaResult:
    _, arrays = _groups(groups)
    means, ss_within, df_within = _within(arrays)
    allv = np.concatenate(arrays)
    grand = allv.mean()
    ss_between = float(sum(len(g) * (m - grand) ** 2 for g, m in zip(arrays, means)))
    df_between = len(arrays) - 1
    scale = float((allv ** 2).sum())
    if ss_within <= 1e-24 * max(scale, 1e-300):
        F = 0.0 if ss_between <= 1e-24 * max(scale, 1e-300) else math.inf
    else:
        F = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(float(F), df_between, df_within, _f_sf(F, df_between, df_within))


def t_test_two_sample(a, b, paired: bool = False) -> TTestResult:
    """Student's t (pooled variance) or paired t; two-sided p."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) < 2 or len(b) < 2:
        raise StatsError("each sample needs at least 2 values")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise StatsError("samples contain non-finite values")
    scale = float((a ** 2).sum() + (b ** 2).sum())
    if paired:
        if len(a) != len(b):
            raise StatsError("paired test needs equal lengths")
        d = a - b
        df = len(d) - 1
        diff = d.mean()
        se2 = d.var(ddof=1) / len(d)
    else:
        df = len(a) + len(b) - 2
        diff = a.mean() - b.mean()
        sp2 = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / df
        se2 = sp2 * (1 / len(a) + 1 / len(b))
    t = math.copysign(math.sqrt(_ratio(diff * diff, se2, scale)), diff) if diff else 0.0
    if math.isinf(t):
        p = 0.0
    else:
        p = float(min(1.0, 2 * special.stdtr(df, -abs(t))))
    return TTestResult(float(t), df, p)


def tukey_hsd(groups, alpha: float = 0.05) -> list[TukeyResult]:
    """All-pairs Tukey-Kramer comparisons using the pooled within-group variance."""
    names, arrays = _groups(groups)
    means, ss_within, df_within = _within(arrays)
    k = len(arrays)
    mse = ss_within / df_within
    scale = float(sum((g ** 2).mean() for g in arrays))
    out = []
    for i, j in itertools.combinations(range(k), 2):
        diff = float(means[j] - means[i])
        se2 = mse / 2 * (1 / len(arrays[i]) + 1 / len(arrays[j]))
        q = math.sqrt(_ratio(diff * diff, se2, scale)) if diff else 0.0
        if q == 0:
            p = 1.0
        elif math.isinf(q):
            p = 0.0
        else:
            p = float(np.clip(_dist.studentized_range.sf(q, k, df_within), 0.0, 1.0))
        out.append(TukeyResult(names[i], names[j], diff, q, p, p < alpha))
    return out


def tukey_pair(results: list[TukeyResult], a: str, b: str) -> TukeyResult:
    """Look up a pair in either order; the reversed lookup flips the sign of diff."""
    for r in results:
        if (r.a, r.b) == (a, b):
            return r
        if (r.a, r.b) == (b, a):
            return TukeyResult(a, b, -r.diff, r.q, r.p, r.significant)
    raise KeyError((a, b))
