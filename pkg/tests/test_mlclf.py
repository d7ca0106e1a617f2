import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.discriminant_analysis import LinearDiscriminantAnalysis
from sklearn.linear_model import LogisticRegression
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.svm import SVC
from sklearn.tree import DecisionTreeClassifier

from emoeeg import mlclf
from emoeeg.mlclf import ClassifierSpec, train


def blobs(rng, n=120, d=4, k=2, sep=2.0):
    centres = rng.normal(scale=sep, size=(k, d))
    y = np.arange(n) % k
    return centres[y] + rng.normal(size=(n, d)), y


def test_default_grids_are_simplest_first_and_valid():
    for kind, grid in mlclf.DEFAULT_GRIDS.items():
        for point in grid:
            ClassifierSpec(kind, point)
    assert mlclf.DEFAULT_GRIDS["knn"][0] == {"k": 1}


@pytest.mark.parametrize("kind,params", [("knn", {"k": 0}), ("svm", {"C": -1}), ("svm", {"kernel": "poly"}),
                                         ("dt", {"max_depth": 0}), ("lr", {"l2": -1}), ("knn", {"q": 1}),
                                         ("forest", {})])
def test_invalid_specs(kind, params):
    with pytest.raises(mlclf.ClassifierError):
        ClassifierSpec(kind, params)


def test_train_contract(rng):
    X, y = blobs(rng)
    with pytest.raises(mlclf.ClassifierError):
        train(ClassifierSpec("lda"), X, np.zeros(len(X)))
    with pytest.raises(mlclf.ClassifierError):
        train(ClassifierSpec("lda"), X[:, :1] * np.nan, y)
    m = train(ClassifierSpec("lda"), X, y)
    with pytest.raises(mlclf.ClassifierError):
        m.predict(X[:, :2])
    assert m.predict(np.empty((0, 4))).shape == (0,)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_knn_matches_sklearn(rng, k):
    X, y = blobs(rng, 200, sep=0.8)
    Xt, _ = blobs(rng, 80, sep=0.8)
    ours = train(ClassifierSpec("knn", {"k": k}), X, y)
    ref = KNeighborsClassifier(k, algorithm="brute").fit(X, y)
    np.testing.assert_allclose(ours.predict_scores(Xt), ref.predict_proba(Xt), atol=1e-12)


def test_gnb_matches_sklearn(rng):
    X, y = blobs(rng, 300, d=5, k=3, sep=1.0)
    ours = train(ClassifierSpec("gnb"), X, y)
    ref = GaussianNB().fit(X, y)
    np.testing.assert_allclose(ours.predict_scores(X), ref.predict_proba(X), atol=1e-6)


def test_lda_matches_sklearn(rng):
    X, y = blobs(rng, 300, d=5, k=3, sep=1.0)
    ours = train(ClassifierSpec("lda", {"shrinkage": 0.0}), X, y)
    ref = LinearDiscriminantAnalysis(solver="lsqr").fit(X, y)
    np.testing.assert_allclose(ours.predict_scores(X), ref.predict_proba(X), atol=1e-8)


def test_lr_matches_sklearn(rng):
    X, y = blobs(rng, 200, d=3, k=3, sep=1.0)
    l2 = 1e-2
    ours = train(ClassifierSpec("lr", {"l2": l2, "tol": 1e-9, "max_iter": 50000}), X, y)
    # mean loss + l2/2 |W|^2  <=>  C * total loss + 1/2 |W|^2 with C = 1 / (n l2)
    ref = LogisticRegression(C=1 / (len(X) * l2), tol=1e-12, max_iter=10000).fit(X, y)
    np.testing.assert_allclose(ours.predict_scores(X), ref.predict_proba(X), atol=1e-5)


def test_lr_gradient_is_exact(rng):
    X, y = blobs(rng, 30, d=3, k=3)
    Y = np.eye(3)[y]
    W, b = rng.normal(size=(3, 3)), rng.normal(size=3)
    _, gW, gb = mlclf.lr_loss_grad(W, b, X, Y, 0.1)
    h = 1e-6
    for i in range(3):
        for j in range(3):
            E = np.zeros_like(W)
            E[i, j] = h
            num = (mlclf.lr_loss_grad(W + E, b, X, Y, 0.1)[0] - mlclf.lr_loss_grad(W - E, b, X, Y, 0.1)[0]) / (2 * h)
            assert num == pytest.approx(gW[i, j], abs=1e-8)


@pytest.mark.parametrize("kernel", ["linear", "rbf"])
def test_svm_matches_sklearn(rng, kernel):
    X, y = blobs(rng, 150, d=3, sep=1.0)
    ours = train(ClassifierSpec("svm", {"kernel": kernel, "C": 1.0, "tol": 1e-6}), X, y)
    ref = SVC(kernel=kernel, C=1.0, gamma=1 / 3, tol=1e-6).fit(X, np.where(y == 0, 1, -1))
    dec = ours.predict_scores(X)[:, 0]
    np.testing.assert_allclose(dec, ref.decision_function(X), atol=1e-3)
    assert ours.info["converged"] == [True]


def test_svm_multiclass_one_vs_rest(rng):
    X, y = blobs(rng, 150, d=3, k=3, sep=3.0)
    m = train(ClassifierSpec("svm", {"kernel": "linear"}), X, y)
    assert m.predict_scores(X).shape == (150, 3)
    assert np.mean(m.predict(X) == y) > 0.9


def test_dt_matches_sklearn(rng):
    X, y = blobs(rng, 200, d=4, k=3, sep=1.0)
    Xt, _ = blobs(rng, 100, d=4, k=3, sep=1.0)
    ours = train(ClassifierSpec("dt", {"max_depth": 4, "min_leaf": 5}), X, y)
    ref = DecisionTreeClassifier(max_depth=4, min_samples_leaf=5, random_state=0).fit(X, y)
    assert np.mean(ours.predict(Xt) == ref.predict(Xt)) >= 0.97
    np.testing.assert_allclose(ours.predict_scores(X).sum(axis=1), 1.0)


@pytest.mark.parametrize("kind", mlclf.KINDS)
def test_every_kind_separates_easy_data_and_is_deterministic(rng, kind):
    X, y = blobs(rng, 100, sep=4.0)
    labels = np.array(["HV", "LV"])[y]
    m1 = train(ClassifierSpec(kind), X, labels)
    m2 = train(ClassifierSpec(kind), X.copy(), labels.copy())
    assert np.mean(m1.predict(X) == labels) > 0.95
    assert m1.predict_scores(X).tobytes() == m2.predict_scores(X).tobytes()
    back = mlclf.TrainedClassifier.from_bytes(m1.to_bytes())
    np.testing.assert_array_equal(back.predict(X), m1.predict(X))


@given(st.integers(0, 2 ** 16))
def test_predict_is_argmax_of_scores(seed):
    rng = np.random.default_rng(seed)
    X, y = blobs(rng, 40, d=2, k=3, sep=0.5)
    m = train(ClassifierSpec("knn", {"k": 2}), X, y)
    s = m.predict_scores(X)
    np.testing.assert_array_equal(m.predict(X), m.classes[np.argmax(s, axis=1)])


def test_knn_k_larger_than_training_set(rng):
    X, y = blobs(rng, 6)
    m = train(ClassifierSpec("knn", {"k": 50}), X, y)
    np.testing.assert_allclose(m.predict_scores(X[:1]), [[0.5, 0.5]])
