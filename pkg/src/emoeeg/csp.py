"""Common Spatial Patterns.

Filters solve the generalized eigenproblem C_a w = lambda (C_a + C_b) w, found by
whitening the composite covariance and diagonalising the whitened class-a
covariance. The filter with the largest lambda maximises the variance ratio
w C_a w' / w C_b w'; the smallest lambda minimises it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import store

EPS = 1e-12
COND_LIMIT = 1e12


class CspError(ValueError):
    pass


def _as_stack(epochs) -> np.ndarray:
    if isinstance(epochs, np.ndarray):
        arr = epochs
    else:
        arr = np.stack([getattr(e, "data", e) for e in epochs]) if len(epochs) else np.empty((0, 0, 0))
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    return arr


def class_covariance(epochs) -> np.ndarray:
    """Average of trace-normalised spatial covariances X X' / tr(X X').

    The summation order is canonicalised, so any reordering of the epochs
    gives a bit-identical matrix.
    """
    X = _as_stack(epochs)
    if X.shape[0] == 0:
        raise CspError("class_covariance needs at least one epoch")
    covs = np.einsum("nct,ndt->ncd", X, X)
    tr = np.trace(covs, axis1=1, axis2=2)
    ok = tr > 0
    if not np.all(ok):
        warnings.warn(f"skipping {int((~ok).sum())} zero-trace epoch(s)", RuntimeWarning)
    if not np.any(ok):
        raise CspError("every epoch has zero trace")
    covs = covs[ok] / tr[ok, None, None]
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    flat = covs.reshape(len(covs), -1)
    order = np.lexsort(flat.T[::-1])
    return covs[order].sum(axis=0) / len(covs)


def _canonical_rows(W: np.ndarray) -> np.ndarray:
    W = W / np.linalg.norm(W, axis=1, keepdims=True)
    idx = np.argmax(np.abs(W), axis=1)
    signs = np.sign(W[np.arange(len(W)), idx])
    return W * np.where(signs == 0, 1.0, signs)[:, None]


@dataclass(frozen=True)
class CspTransform:
    filters: np.ndarray          # n_filters x channels, unit-norm rows
    eigenvalues: np.ndarray
    classes: tuple
    log_normalized: bool = False

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]

    def transform(self, epochs) -> np.ndarray:
        """Log-variance features for one epoch (1-d output) or a stack (2-d)."""
        single = not isinstance(epochs, (list, tuple)) and np.ndim(getattr(epochs, "data", epochs)) == 2
        X = _as_stack([epochs] if single else epochs)
        Z = np.einsum("fc,nct->nft", self.filters, X)
        var = Z.var(axis=2)
        if self.log_normalized:
            feats = np.log(var / np.maximum(var.sum(axis=1, keepdims=True), EPS) + EPS)
        else:
            feats = np.log(var + EPS)
        return feats[0] if single else feats

    def to_bytes(self) -> bytes:
        return store.pack("csp", {"filters": self.filters, "eigenvalues": self.eigenvalues},
                          {"classes": list(self.classes), "log_normalized": self.log_normalized})

    @classmethod
    def from_bytes(cls, data: bytes) -> "CspTransform":
        kind, t, meta = store.unpack(data)
        if kind != "csp":
            raise store.StoreError(f"expected csp container, got {kind}")
        return cls(t["filters"], t["eigenvalues"], tuple(meta["classes"]), meta["log_normalized"])


def _whitener(composite: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(composite)
    if evals.min() <= 0 or evals.max() / evals.min() >= COND_LIMIT:
        raise np.linalg.LinAlgError("composite covariance is singular")
    return (evecs / np.sqrt(evals)) @ evecs.T


def generalized_eig(ca: np.ndarray, cb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All filters (rows, canonical sign/scale) and lambdas, lambda descending."""
    composite = ca + cb
    try:
        P = _whitener(composite)
    except np.linalg.LinAlgError:
        composite = composite + 1e-8 * np.trace(composite) * np.eye(len(composite))
        try:
            P = _whitener(composite)
        except np.linalg.LinAlgError:
            raise CspError("composite covariance is singular even after regularisation") from None
        ca = ca + 0.5e-8 * np.trace(ca + cb) * np.eye(len(ca))
    S = P @ ca @ P.T
    S = 0.5 * (S + S.T)
    lam, V = np.linalg.eigh(S)
    order = np.argsort(lam, kind="stable")[::-1]
    W = _canonical_rows((V[:, order].T @ P))
    num = np.einsum("fc,cd,fd->f", W, ca, W)
    den = np.einsum("fc,cd,fd->f", W, composite, W)
    return W, num / den


def fit_csp(epochs_a, epochs_b, pairs: int = 3, log_normalized: bool = False,
            classes=("a", "b")) -> CspTransform:
    """Binary CSP keeping `pairs` filters from each end of the spectrum."""
    A, B = _as_stack(epochs_a), _as_stack(epochs_b)
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise CspError("both classes need at least one epoch")
    W, lam = generalized_eig(class_covariance(A), class_covariance(B))
    if 2 * pairs > len(lam):
        raise CspError(f"{pairs} pairs need at least {2 * pairs} channels")
    keep = np.r_[np.arange(pairs), np.arange(len(lam) - pairs, len(lam))]
    return CspTransform(W[keep], lam[keep], tuple(classes), log_normalized)


def fit_csp_multiclass(epochs_by_class: dict, log_normalized: bool = False) -> CspTransform:
    """One-vs-rest: the top filter of each class against the pooled others."""
    if len(epochs_by_class) < 3:
        raise CspError("multiclass CSP needs at least 3 classes; use fit_csp for two")
    labels = list(epochs_by_class)
    stacks = {c: _as_stack(epochs_by_class[c]) for c in labels}
    if any(s.shape[0] == 0 for s in stacks.values()):
        raise CspError("every class needs at least one epoch")
    filters, lams = [], []
    for c in labels:
        rest = np.concatenate([stacks[o] for o in labels if o != c])
        W, lam = generalized_eig(class_covariance(stacks[c]), class_covariance(rest))
        filters.append(W[0])
        lams.append(lam[0])
    return CspTransform(np.array(filters), np.array(lams), tuple(labels), log_normalized)


def csp_features(transform: CspTransform, epoch) -> np.ndarray:
    return transform.transform(epoch)
