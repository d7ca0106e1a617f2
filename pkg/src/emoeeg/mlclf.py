"""Classical classifiers behind one train / predict / predict_scores interface.

Kinds and their scores:

========  =====================================================
knn       vote fraction among the k nearest (Euclidean) points
svm       one-vs-rest decision values (SMO-trained dual)
gnb       posterior probabilities
dt        class fractions of the reached CART leaf
lda       posterior probabilities
lr        multinomial softmax probabilities
========  =====================================================

`predict` is always the argmax of `predict_scores`, lowest class index on ties.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import store

KINDS = ("knn", "svm", "gnb", "dt", "lda", "lr")

_DEFAULTS = {
    "knn": {"k": 5, "metric": "euclidean"},
    "svm": {"C": 1.0, "kernel": "rbf", "gamma": None, "tol": 1e-3, "max_iter": 200_000},
    "gnb": {},
    "dt": {"max_depth": None, "min_leaf": 5, "criterion": "gini"},
    "lda": {"shrinkage": 1e-6},
    "lr": {"l2": 1e-4, "tol": 1e-6, "max_iter": 10_000},
}

# Hyperparameter grids, simplest configuration first.
DEFAULT_GRIDS = {
    "knn": [{"k": k} for k in (1, 3, 5, 7)],
    "svm": [{"kernel": kern, "C": c} for kern in ("linear", "rbf") for c in (0.1, 1.0, 10.0)],
    "gnb": [{}],
    "dt": [{"max_depth": d, "min_leaf": 5} for d in (5, 10, None)],
    "lda": [{}],
    "lr": [{"l2": l2} for l2 in (1e-2, 1e-4)],
}


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ClassifierError(f"unknown classifier kind {self.kind!r}")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ClassifierError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        p = {**_DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", p)
        k = self.kind
        if k == "knn" and (int(p["k"]) != p["k"] or p["k"] < 1 or p["metric"] != "euclidean"):
            raise ClassifierError("knn needs integer k >= 1 and euclidean metric")
        if k == "svm":
            if p["C"] <= 0 or p["kernel"] not in ("linear", "rbf"):
                raise ClassifierError("svm needs C > 0 and kernel in {linear, rbf}")
            if p["gamma"] is not None and p["gamma"] <= 0:
                raise ClassifierError("svm gamma must be positive")
        if k == "dt":
            if p["max_depth"] is not None and p["max_depth"] < 1:
                raise ClassifierError("dt max_depth must be >= 1 or None")
            if p["min_leaf"] < 1 or p["criterion"] != "gini":
                raise ClassifierError("dt needs min_leaf >= 1 and gini criterion")
        if k == "lr" and (p["l2"] < 0 or p["max_iter"] < 0):
            raise ClassifierError("lr needs l2 >= 0")
        if k == "lda" and p["shrinkage"] < 0:
            raise ClassifierError("lda shrinkage must be >= 0")

    def describe(self) -> str:
        return f"{self.kind}({', '.join(f'{k}={v}' for k, v in sorted(self.params.items()))})"


@dataclass(frozen=True)
class TrainedClassifier:
    spec: ClassifierSpec
    classes: np.ndarray
    dim: int
    params: dict
    info: dict = field(default_factory=dict)

    def predict_scores(self, X) -> np.ndarray:
        X = self._check(X)
        if len(X) == 0:
            return np.zeros((0, len(self.classes)))
        return _SCORERS[self.spec.kind](self, X)

    def predict(self, X) -> np.ndarray:
        s = self.predict_scores(X)
        if len(s) == 0:
            return self.classes[:0]
        return self.classes[np.argmax(s, axis=1)]

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, self.dim)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ClassifierError(f"expected (n, {self.dim}) features, got {X.shape}")
        return X

    def to_bytes(self) -> bytes:
        meta = {"kind": self.spec.kind, "hyper": self.spec.params, "dim": self.dim,
                "classes": self.classes.tolist(), "info": self.info}
        return store.pack("classifier", dict(sorted(self.params.items())),
                          json.loads(json.dumps(meta)))

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrainedClassifier":
        kind, tensors, meta = store.unpack(data)
        if kind != "classifier":
            raise store.StoreError(f"expected classifier container, got {kind}")
        spec = ClassifierSpec(meta["kind"], meta["hyper"])
        return cls(spec, np.array(meta["classes"]), meta["dim"], dict(tensors), meta["info"])


def train(spec: ClassifierSpec, X, y) -> TrainedClassifier:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y) or len(y) < 2:
        raise ClassifierError("need a 2-D X with one label per row and at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise ClassifierError("features contain non-finite values")
    classes, yi = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ClassifierError("need at least 2 distinct labels")
    params, info = _FITTERS[spec.kind](spec.params, X, yi, len(classes))
    return TrainedClassifier(spec, classes, X.shape[1], params, info)


def predict(model: TrainedClassifier, X) -> np.ndarray:
    return model.predict(X)


def predict_scores(model: TrainedClassifier, X) -> np.ndarray:
    return model.predict_scores(X)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------- kNN

def _fit_knn(p, X, y, n_classes):
    return {"X": X.copy(), "y": y.astype(np.int64)}, {}


def euclidean_distances(A: np.ndarray, B: np.ndarray, chunk: int = 256) -> np.ndarray:
    out = np.empty((len(A), len(B)))
    for s in range(0, len(A), chunk):
        diff = A[s:s + chunk, None, :] - B[None, :, :]
        out[s:s + chunk] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def _score_knn(m, X):
    k = min(int(m.spec.params["k"]), len(m.params["y"]))
    d = euclidean_distances(X, m.params["X"])
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    votes = np.zeros((len(X), len(m.classes)))
    np.add.at(votes, (np.repeat(np.arange(len(X)), k), m.params["y"][nn].ravel()), 1.0)
    return votes / k


# ---------------------------------------------------------------- GNB

def _fit_gnb(p, X, y, n_classes):
    floor = 1e-9 * max(float(X.var(axis=0).max()), 1e-12)
    means = np.array([X[y == c].mean(axis=0) for c in range(n_classes)])
    var = np.array([X[y == c].var(axis=0) for c in range(n_classes)])
    prior = np.bincount(y, minlength=n_classes) / len(y)
    return {"means": means, "var": np.maximum(var, floor), "log_prior": np.log(prior)}, {}


def gnb_log_joint(m, X) -> np.ndarray:
    mu, var = m.params["means"], m.params["var"]
    ll = -0.5 * (np.log(2 * np.pi * var).sum(axis=1)[None]
                 + (((X[:, None, :] - mu[None]) ** 2) / var[None]).sum(axis=2))
    return ll + m.params["log_prior"][None]


def _score_gnb(m, X):
    return _softmax(gnb_log_joint(m, X))


# ---------------------------------------------------------------- LDA

def _fit_lda(p, X, y, n_classes):
    means = np.array([X[y == c].mean(axis=0) for c in range(n_classes)])
    centred = X - means[y]
    cov = centred.T @ centred / len(X)
    cov += p["shrinkage"] * np.trace(cov) * np.eye(X.shape[1])
    if p["shrinkage"] == 0 or np.trace(cov) == 0:
        cov += 1e-12 * np.eye(X.shape[1])
    coef = np.linalg.solve(cov, means.T).T                     # (K, d)
    prior = np.bincount(y, minlength=n_classes) / len(y)
    intercept = -0.5 * np.einsum("kd,kd->k", coef, means) + np.log(prior)
    return {"coef": coef, "intercept": intercept, "means": means}, {}


def _score_lda(m, X):
    return _softmax(X @ m.params["coef"].T + m.params["intercept"])


# ---------------------------------------------------------------- LR

def lr_loss_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float):
    """Mean cross-entropy + (l2/2)||W||^2 and its gradients; Y is one-hot (n, K)."""
    n = len(X)
    Z = X @ W + b
    Z = Z - Z.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    loss = -(Y * logp).sum() / n + 0.5 * l2 * np.sum(W * W)
    R = (np.exp(logp) - Y) / n
    return loss, X.T @ R + l2 * W, R.sum(axis=0)


def _fit_lr(p, X, y, n_classes):
    n, d = X.shape
    Y = np.eye(n_classes)[y]
    W, b = np.zeros((d, n_classes)), np.zeros(n_classes)
    Xb = np.hstack([X, np.ones((n, 1))])
    lip = 0.5 * np.linalg.norm(Xb, 2) ** 2 / n + p["l2"]
    step = 1.0 / max(lip, 1e-12)
    it, gnorm = 0, np.inf
    for it in range(1, int(p["max_iter"]) + 1):
        _, gW, gb = lr_loss_grad(W, b, X, Y, p["l2"])
        gnorm = float(np.sqrt(np.sum(gW * gW) + np.sum(gb * gb)))
        if gnorm < p["tol"]:
            break
        W -= step * gW
        b -= step * gb
    return {"W": W, "b": b}, {"iterations": it, "grad_norm": gnorm}


def _score_lr(m, X):
    return _softmax(X @ m.params["W"] + m.params["b"])


# ---------------------------------------------------------------- DT (CART, Gini)

def _gini_children(counts_left: np.ndarray, total: np.ndarray):
    nl = counts_left.sum(axis=1)
    counts_right = total[None] - counts_left
    nr = counts_right.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        gl = 1.0 - ((counts_left / nl[:, None]) ** 2).sum(axis=1)
        gr = 1.0 - ((counts_right / nr[:, None]) ** 2).sum(axis=1)
    return nl * np.nan_to_num(gl) + nr * np.nan_to_num(gr)


def _best_split(X, Y, idx, min_leaf):
    """Lowest weighted child Gini; ties go to the lower feature, then the lower threshold."""
    sub, Ysub = X[idx], Y[idx]
    n = len(idx)
    total = Ysub.sum(axis=0)
    best = (np.inf, -1, 0.0)
    for f in range(X.shape[1]):
        order = np.argsort(sub[:, f], kind="stable")
        vals = sub[order, f]
        cum = np.cumsum(Ysub[order], axis=0)[:-1]          # left counts for split after i
        pos = np.arange(1, n)
        valid = (vals[1:] > vals[:-1]) & (pos >= min_leaf) & (n - pos >= min_leaf)
        if not valid.any():
            continue
        imp = _gini_children(cum[valid], total)
        j = int(np.argmin(imp))
        if imp[j] < best[0] - 1e-12:
            p = pos[valid][j]
            best = (float(imp[j]), f, 0.5 * (vals[p - 1] + vals[p]))
    return best


def _fit_dt(p, X, y, n_classes):
    Y = np.eye(n_classes)[y]
    max_depth = p["max_depth"] if p["max_depth"] is not None else np.inf
    min_leaf = int(p["min_leaf"])
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx, depth):
        node = len(feature)
        counts = Y[idx].sum(axis=0)
        feature.append(-1), threshold.append(0.0), left.append(-1), right.append(-1)
        value.append(counts / counts.sum())
        parent_imp = len(idx) * (1.0 - ((counts / counts.sum()) ** 2).sum())
        if depth >= max_depth or len(idx) < 2 * min_leaf or counts.max() == len(idx):
            return node
        imp, f, thr = _best_split(X, Y, idx, min_leaf)
        if f < 0 or imp >= parent_imp - 1e-12:
            return node
        go_left = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(X)), 0)
    return {"feature": np.array(feature, dtype=np.int64), "threshold": np.array(threshold),
            "left": np.array(left, dtype=np.int64), "right": np.array(right, dtype=np.int64),
            "value": np.array(value)}, {"nodes": len(feature)}


def _score_dt(m, X):
    feat, thr = m.params["feature"], m.params["threshold"]
    left, right = m.params["left"], m.params["right"]
    node = np.zeros(len(X), dtype=np.int64)
    active = feat[node] >= 0
    while active.any():
        a = np.nonzero(active)[0]
        f = feat[node[a]]
        go_left = X[a, f] <= thr[node[a]]
        node[a] = np.where(go_left, left[node[a]], right[node[a]])
        active = feat[node] >= 0
    return m.params["value"][node]


# ---------------------------------------------------------------- SVM (SMO)

def kernel_matrix(A, B, kernel, gamma):
    if kernel == "linear":
        return A @ B.T
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_iter: int = 200_000):
    """Solve the C-SVM dual for labels y in {-1, +1} with maximal-violating-pair SMO.

    Returns (alpha, rho, iterations, converged); decision(x) = sum a_i y_i K(x_i, x) - rho.
    """
    n = len(y)
    yf = y.astype(np.float64)
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.diag(K).copy()
    tau = 1e-12
    converged = False
    it = 0
    for it in range(max_iter):
        yG = -yf * G
        up = ((yf > 0) & (alpha < C)) | ((yf < 0) & (alpha > 0))
        low = ((yf < 0) & (alpha < C)) | ((yf > 0) & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, yG, -np.inf)))
        j = int(np.argmin(np.where(low, yG, np.inf)))
        if yG[i] - yG[j] < tol:
            converged = True
            break
        Qi = yf[i] * yf * K[i]
        Qj = yf[j] * yf * K[j]
        ai, aj = alpha[i], alpha[j]
        if yf[i] != yf[j]:
            quad = max(QD[i] + QD[j] + 2.0 * Qi[j], tau)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = max(QD[i] + QD[j] - 2.0 * Qi[j], tau)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        G += Qi * (ni - ai) + Qj * (nj - aj)
        alpha[i], alpha[j] = ni, nj
    yG = yf * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = ((alpha >= C) & (yf < 0)) | ((alpha <= 0) & (yf > 0))
        lb_mask = ((alpha >= C) & (yf > 0)) | ((alpha <= 0) & (yf < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float(0.5 * (ub + lb)) if np.isfinite(ub + lb) else 0.0
    return alpha, rho, it, converged


def _fit_svm(p, X, y, n_classes):
    gamma = p["gamma"] if p["gamma"] is not None else 1.0 / X.shape[1]
    K = kernel_matrix(X, X, p["kernel"], gamma)
    machines = [0] if n_classes == 2 else list(range(n_classes))
    coefs, rhos, iters, conv = [], [], [], []
    for c in machines:
        yc = np.where(y == c, 1, -1)
        a, rho, it, ok = smo(K, yc, float(p["C"]), float(p["tol"]), int(p["max_iter"]))
        coefs.append(a * yc)
        rhos.append(rho)
        iters.append(int(it))
        conv.append(bool(ok))
    return ({"X": X.copy(), "dual_coef": np.array(coefs), "rho": np.array(rhos),
             "gamma": np.array(gamma)},
            {"iterations": iters, "converged": conv})


def _score_svm(m, X):
    p = m.spec.params
    K = kernel_matrix(X, m.params["X"], p["kernel"], float(m.params["gamma"]))
    dec = K @ m.params["dual_coef"].T - m.params["rho"]
    if len(m.classes) == 2:
        return np.hstack([dec, -dec])
    return dec


_FITTERS = {"knn": _fit_knn, "svm": _fit_svm, "gnb": _fit_gnb, "dt": _fit_dt,
            "lda": _fit_lda, "lr": _fit_lr}
_SCORERS = {"knn": _score_knn, "svm": _score_svm, "gnb": _score_gnb, "dt": _score_dt,
            "lda": _score_lda, "lr": _score_lr}
