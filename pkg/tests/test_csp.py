import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emoeeg import csp
from _oracles import mean_normalized_cov, planted_epochs, random_csp_problem, rayleigh_ratio


def test_class_covariance_matches_naive_average(rng):
    X = rng.normal(size=(30, 14, 64))
    np.testing.assert_allclose(csp.class_covariance(X), mean_normalized_cov(X), rtol=1e-12, atol=1e-15)


def test_class_covariance_is_symmetric_unit_trace(rng):
    C = csp.class_covariance(rng.normal(size=(7, 14, 50)) * rng.uniform(0.1, 10, size=(7, 1, 1)))
    assert np.abs(C - C.T).max() <= 1e-12
    assert np.trace(C) == pytest.approx(1.0, abs=1e-9)


def test_rank_one_from_identical_rows(rng):
    row = rng.normal(size=200)
    C = csp.class_covariance(np.tile(row, (14, 1)))
    assert np.linalg.matrix_rank(C, tol=1e-10) == 1 and np.trace(C) == pytest.approx(1.0)


def test_white_noise_covariance_approaches_identity_over_14(rng):
    C = csp.class_covariance(rng.normal(size=(1000, 14, 640)))
    np.testing.assert_allclose(C, np.eye(14) / 14, atol=0.02)


def test_zero_trace_epochs_are_skipped_with_warning(rng):
    X = rng.normal(size=(3, 14, 20))
    X[1] = 0
    with pytest.warns(RuntimeWarning):
        C = csp.class_covariance(X)
    np.testing.assert_allclose(C, mean_normalized_cov(X[[0, 2]]), rtol=1e-12)
    with pytest.raises(csp.CspError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        csp.class_covariance(np.zeros((2, 14, 20)))


def test_covariance_is_bitwise_order_invariant(rng):
    X = rng.normal(size=(25, 14, 30))
    perm = rng.permutation(25)
    assert csp.class_covariance(X).tobytes() == csp.class_covariance(X[perm]).tobytes()


def test_identical_classes_give_one_half(rng):
    X = rng.normal(size=(20, 14, 100))
    t = csp.fit_csp(X, X)
    np.testing.assert_allclose(t.eigenvalues, 0.5, atol=1e-9)


def test_transform_shape_sorting_and_norms(rng):
    a, b = random_csp_problem(rng, 60)
    t = csp.fit_csp(a, b)
    assert t.filters.shape == (6, 14)
    assert np.all(np.diff(t.eigenvalues) <= 0)
    assert np.all((t.eigenvalues >= 0) & (t.eigenvalues <= 1))
    np.testing.assert_allclose(np.linalg.norm(t.filters, axis=1), 1.0, atol=1e-12)
    W = t.filters
    assert np.all(W[np.arange(6), np.argmax(np.abs(W), axis=1)] > 0)
    ca, cb = csp.class_covariance(a), csp.class_covariance(b)
    assert np.all(np.einsum("fc,cd,fd->f", W, ca + cb, W) > 0)


@given(st.integers(0, 2 ** 20))
def test_generalized_eigen_residual_and_complementarity(seed):
    rng = np.random.default_rng(seed)
    a, b = random_csp_problem(rng, 30, n_samples=64)
    ca, cb = csp.class_covariance(a), csp.class_covariance(b)
    t = csp.fit_csp(a, b)
    for w, lam in zip(t.filters, t.eigenvalues):
        assert np.linalg.norm(ca @ w - lam * (ca + cb) @ w) <= 1e-8 * np.linalg.norm(w)
        assert w @ ca @ w / (w @ ca @ w + w @ cb @ w) == pytest.approx(lam, abs=1e-8)


@given(st.integers(0, 2 ** 20))
def test_swap_symmetry(seed):
    rng = np.random.default_rng(seed)
    a, b = random_csp_problem(rng, 30, n_samples=64)
    ab = csp.generalized_eig(csp.class_covariance(a), csp.class_covariance(b))
    ba = csp.generalized_eig(csp.class_covariance(b), csp.class_covariance(a))
    np.testing.assert_allclose(np.sort(1 - ab[1]), np.sort(ba[1]), atol=1e-9)
    # the same filters, up to sign, in reversed order
    cos = np.abs(np.sum(ab[0] * ba[0][::-1], axis=1))
    gaps = np.min(np.abs(np.diff(np.sort(ab[1]))))
    if gaps > 1e-6:
        np.testing.assert_allclose(cos, 1.0, atol=1e-6)


def test_top_filter_beats_random_directions(rng):
    a, b = random_csp_problem(rng, 100)
    ca, cb = csp.class_covariance(a), csp.class_covariance(b)
    t = csp.fit_csp(a, b)
    u = rng.normal(size=(10000, 14))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = rayleigh_ratio(u, ca, cb)
    assert rayleigh_ratio(t.filters[0], ca, cb)[0] >= r.max()
    assert rayleigh_ratio(t.filters[-1], ca, cb)[0] <= r.min()


def test_planted_orthogonal_directions(rng):
    q, _ = np.linalg.qr(rng.normal(size=(14, 14)))
    u, v = q[:, 0], q[:, 1]
    t = csp.fit_csp(planted_epochs(rng, u), planted_epochs(rng, v))
    assert abs(t.filters[0] @ u) > 0.999
    assert abs(t.filters[-1] @ v) > 0.999


def test_multiclass_ovr_alignment(rng):
    q, _ = np.linalg.qr(rng.normal(size=(14, 14)))
    classes = {f"c{i}": planted_epochs(rng, q[:, i], 60, noise=1e-2) for i in range(6)}
    t = csp.fit_csp_multiclass(classes)
    assert t.filters.shape == (6, 14) and t.classes == tuple(classes)
    for i in range(6):
        assert abs(t.filters[i] @ q[:, i]) > 0.99
    with pytest.raises(csp.CspError):
        csp.fit_csp_multiclass({"a": classes["c0"], "b": classes["c1"]})


def test_features_floor_and_scaling(rng):
    a, b = random_csp_problem(rng, 40)
    t = csp.fit_csp(a, b)
    np.testing.assert_allclose(csp.csp_features(t, np.zeros((14, 640))), np.log(1e-12))
    x = rng.normal(size=(14, 640))
    f1, f3 = csp.csp_features(t, x), csp.csp_features(t, 3 * x)
    assert f1.shape == (6,)
    np.testing.assert_allclose(f3 - f1, 2 * np.log(3), atol=1e-9)
    assert t.transform(a[:5]).shape == (5, 6)


def test_singular_composite_takes_regularisation_path(rng):
    # rank-deficient data: one channel is identically zero in both classes
    a, b = random_csp_problem(rng, 30, n_samples=64)
    a[:, 0] = 0
    b[:, 0] = 0
    t = csp.fit_csp(a, b)
    assert np.all(np.isfinite(t.filters))
    with pytest.raises(csp.CspError):
        csp.fit_csp(a[:0], b)


def test_fit_is_invariant_to_epoch_order(rng):
    a, b = random_csp_problem(rng, 40, n_samples=64)
    t1 = csp.fit_csp(a, b)
    t2 = csp.fit_csp(a[::-1], b[rng.permutation(40)])
    assert t1.filters.tobytes() == t2.filters.tobytes()


def test_serialisation_round_trip(rng):
    a, b = random_csp_problem(rng, 20, n_samples=64)
    t = csp.fit_csp(a, b, classes=("HV", "LV"))
    back = csp.CspTransform.from_bytes(t.to_bytes())
    assert back.filters.tobytes() == t.filters.tobytes() and back.classes == ("HV", "LV")
