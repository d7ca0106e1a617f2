import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sst
from statsmodels.stats.multicomp import pairwise_tukeyhsd

from emoeeg import stats


def _groups(seed, sizes, shifts):
    rng = np.random.default_rng(seed)
    return [rng.normal(loc=s, size=n) for n, s in zip(sizes, shifts)]


@given(st.integers(0, 2 ** 20), st.lists(st.integers(2, 15), min_size=2, max_size=5))
def test_anova_matches_scipy(seed, sizes):
    g = _groups(seed, sizes, np.linspace(0, 1, len(sizes)))
    ours = stats.anova_oneway(g)
    ref = sst.f_oneway(*g)
    assert ours.F == pytest.approx(ref.statistic, rel=1e-9)
    assert ours.p == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-300)
    assert (ours.df_between, ours.df_within) == (len(sizes) - 1, sum(sizes) - len(sizes))


@given(st.integers(0, 2 ** 20), st.integers(2, 20), st.integers(2, 20))
def test_f_equals_t_squared_for_two_groups(seed, na, nb):
    a, b = _groups(seed, (na, nb), (0.0, 0.7))
    F = stats.anova_oneway([a, b])
    t = stats.t_test_two_sample(a, b)
    assert F.F == pytest.approx(t.t ** 2, rel=1e-9)
    assert F.p == pytest.approx(t.p, rel=1e-9)


@given(st.integers(0, 2 ** 20), st.integers(2, 20), st.integers(2, 20))
def test_t_test_matches_scipy(seed, na, nb):
    a, b = _groups(seed, (na, nb), (0.0, 0.5))
    t, df, p = stats.t_test_two_sample(a, b)
    ref = sst.ttest_ind(a, b)
    assert t == pytest.approx(ref.statistic, rel=1e-9) and df == na + nb - 2
    assert p == pytest.approx(ref.pvalue, rel=1e-8)


def test_paired_t_matches_scipy(rng):
    a = rng.normal(size=12)
    b = a + rng.normal(0.3, 0.5, size=12)
    t = stats.t_test_two_sample(a, b, paired=True)
    ref = sst.ttest_rel(a, b)
    assert t.t == pytest.approx(ref.statistic, rel=1e-10) and t.df == 11
    assert t.p == pytest.approx(ref.pvalue, rel=1e-8)
    with pytest.raises(stats.StatsError):
        stats.t_test_two_sample(a, b[:5], paired=True)


@pytest.mark.parametrize("sizes", [(10, 10, 10), (5, 8, 12, 7)])
def test_tukey_matches_statsmodels(sizes):
    g = _groups(7, sizes, np.linspace(0, 1.5, len(sizes)))
    names = [f"g{i}" for i in range(len(sizes))]
    ours = stats.tukey_hsd(dict(zip(names, g)))
    ref = pairwise_tukeyhsd(np.concatenate(g), np.repeat(names, sizes))
    by_pair = {(r[0], r[1]): r for r in ref.summary().data[1:]}
    assert len(ours) == len(by_pair)
    for r, diff, p in zip(ours, ref.meandiffs, ref.pvalues):
        row = by_pair[(r.a, r.b)]
        assert r.diff == pytest.approx(diff, abs=1e-10)
        assert r.p == pytest.approx(p, abs=2e-3)
        assert r.significant == bool(row[-1])


def test_degrees_of_freedom_for_three_groups_of_ten_and_two_of_ten():
    g = _groups(1, (10, 10, 10), (0, 1, 2))
    a = stats.anova_oneway(g)
    assert (a.df_between, a.df_within) == (2, 27)
    assert str(a).startswith("F(2,27) = ")
    t = stats.t_test_two_sample(g[0], g[1])
    assert t.df == 18 and str(t).startswith("t(18) = ")


def test_degenerate_groups():
    eq = stats.anova_oneway([[1.0, 1.0], [1.0, 1.0]])
    assert eq.F == 0.0 and eq.p == 1.0
    sep = stats.anova_oneway([[1.0, 1.0], [2.0, 2.0]])
    assert sep.F == np.inf and sep.p == 0.0
    assert stats.t_test_two_sample([1.0, 1.0], [2.0, 2.0]).p == 0.0
    with pytest.raises(stats.StatsError):
        stats.anova_oneway([[1.0, 2.0]])
    with pytest.raises(stats.StatsError):
        stats.anova_oneway([[1.0], [2.0, 3.0]])
    with pytest.raises(stats.StatsError):
        stats.anova_oneway([[1.0, np.nan], [2.0, 3.0]])


def test_tukey_pair_lookup_flips_sign():
    res = stats.tukey_hsd({"a": [1.0, 2.0, 3.0], "b": [4.0, 5.0, 6.0]})
    assert stats.tukey_pair(res, "a", "b").diff == pytest.approx(3.0)
    assert stats.tukey_pair(res, "b", "a").diff == pytest.approx(-3.0)
    with pytest.raises(KeyError):
        stats.tukey_pair(res, "a", "z")
