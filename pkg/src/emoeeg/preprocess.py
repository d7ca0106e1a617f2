"""Outlier rejection, Butterworth bandpass, epoching, z-normalisation and PCA."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .datamodel import EPOCH_SAMPLES, SAMPLE_RATE, Epoch, Trial

OUTLIER_THRESHOLD_UV = 85.0
STD_FLOOR = 1e-12


class FilterError(ValueError):
    pass


class TooShortError(ValueError):
    pass


@dataclass(frozen=True)
class BandpassSpec:
    low_cut: float = 8.0
    high_cut: float = 49.0
    order: int = 4
    zero_phase: bool = True

    def validate(self, sample_rate: float = SAMPLE_RATE) -> None:
        if not 0 < self.low_cut < self.high_cut < sample_rate / 2:
            raise FilterError(
                f"need 0 < low ({self.low_cut}) < high ({self.high_cut}) < fs/2 ({sample_rate / 2})")
        if int(self.order) != self.order or self.order < 1:
            raise FilterError(f"order must be a positive integer, got {self.order}")


def design_bandpass(spec: BandpassSpec, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Digital Butterworth bandpass as second-order sections.

    Corners sit at exactly -3 dB (single pass). Raises FilterError for an
    invalid spec or if any pole falls on or outside the unit circle.
    """
    spec.validate(sample_rate)
    sos = sps.butter(int(spec.order), [spec.low_cut, spec.high_cut], btype="bandpass",
                     fs=sample_rate, output="sos")
    _, poles, _ = sps.sos2zpk(sos)
    if np.any(np.abs(poles) >= 1.0):
        raise FilterError("unstable bandpass design")
    return sos


def frequency_response(sos: np.ndarray, freqs_hz, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    _, h = sps.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freqs_hz, dtype=float)),
                        fs=sample_rate)
    return h


def pad_length(sos: np.ndarray) -> int:
    # 3 x the length of the equivalent transfer-function polynomial
    return 3 * (2 * len(sos) + 1)


def apply_bandpass(sos: np.ndarray, x: np.ndarray, zero_phase: bool = True) -> np.ndarray:
    """Filter along the last axis (each channel independently)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise FilterError("input contains non-finite samples")
    if zero_phase:
        padlen = min(pad_length(sos), x.shape[-1] - 1)
        y = sps.sosfiltfilt(sos, x, axis=-1, padtype="odd", padlen=padlen)
    else:
        y = sps.sosfilt(sos, x, axis=-1)
    if not np.all(np.isfinite(y)):
        raise FilterError("filter output is not finite (numerical instability)")
    return y


def segment(trial: Trial, epoch_seconds: float = 5, overlap: float = 0.0,
            signal: np.ndarray | None = None) -> list[Epoch]:
    """Cut a trial into consecutive epochs, dropping the trailing remainder.

    `signal` overrides the trial's own samples (e.g. its filtered version)
    while keeping the trial's labels.
    """
    sig = trial.signal if signal is None else np.asarray(signal)
    n = int(round(epoch_seconds * trial.sample_rate))
    if n != EPOCH_SAMPLES:
        raise ValueError(f"epochs must be {EPOCH_SAMPLES} samples")
    step = int(round(n * (1.0 - overlap)))
    if step < 1:
        raise ValueError("overlap must be < 1")
    if sig.shape[1] < n:
        raise TooShortError(f"trial has {sig.shape[1]} samples, need at least {n}")
    return [Epoch(sig[:, s:s + n], trial.subject_id, trial.cohort, trial.emotion,
                  trial.trial_index, s)
            for s in range(0, sig.shape[1] - n + 1, step)]


@dataclass
class RejectionReport:
    threshold_uv: float
    kept: int
    dropped: int
    dropped_per_trial: dict

    def as_dict(self) -> dict:
        return {"threshold_uv": self.threshold_uv, "kept": self.kept, "dropped": self.dropped,
                "dropped_per_trial": {"/".join(map(str, k)): v
                                      for k, v in sorted(self.dropped_per_trial.items())}}


def exceeds_threshold(data: np.ndarray, threshold_uv: float = OUTLIER_THRESHOLD_UV) -> bool:
    return bool(np.max(np.abs(data)) > threshold_uv)


def reject_outlier_epochs(epochs, threshold_uv: float = OUTLIER_THRESHOLD_UV):
    """Drop every epoch holding a sample with |value| strictly above the threshold."""
    if threshold_uv <= 0:
        raise ValueError("threshold must be positive")
    kept, drops = [], Counter()
    for ep in epochs:
        if exceeds_threshold(ep.data, threshold_uv):
            drops[(ep.subject_id, ep.emotion, ep.trial_index)] += 1
        else:
            kept.append(ep)
    return kept, RejectionReport(threshold_uv, len(kept), sum(drops.values()), dict(drops))


def preprocess_trial(trial: Trial, sos: np.ndarray, threshold_uv: float = OUTLIER_THRESHOLD_UV,
                     zero_phase: bool = True) -> tuple[list[Epoch], int]:
    """Outlier screen on the raw trial, bandpass, then epoch.

    The amplitude rule is evaluated on the raw samples of each epoch span and the
    surviving spans are cut from the filtered trial. Returns (epochs, n_dropped).
    """
    raw = segment(trial)
    filtered = apply_bandpass(sos, trial.signal, zero_phase=zero_phase)
    out, dropped = [], 0
    for ep_raw, ep in zip(raw, segment(trial, signal=filtered)):
        if exceeds_threshold(ep_raw.data, threshold_uv):
            dropped += 1
        else:
            out.append(ep)
    return out, dropped


@dataclass(frozen=True)
class ZNormModel:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std


def fit_znorm(X: np.ndarray) -> ZNormModel:
    """Per-feature mean and population standard deviation (floored at 1e-12)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("z-norm needs a nonempty 2-D array")
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    # constant columns: exact zero output rather than rounding residue / 1e-12
    const = np.all(X == X[0], axis=0)
    mean = np.where(const, X[0], mean)
    return ZNormModel(mean, std)


def apply_znorm(model: ZNormModel, X: np.ndarray) -> np.ndarray:
    return model.apply(X)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray      # k x d, orthonormal rows
    explained: np.ndarray       # variance fraction of each retained component
    retain: float

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T


def fit_pca(X: np.ndarray, retain: float = 0.95) -> PcaModel:
    """Keep the fewest principal directions whose variance mass reaches `retain`.

    Each component's largest-magnitude entry is made positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("PCA needs at least 2 observations")
    if not 0 < retain <= 1:
        raise ValueError("retain must be in (0, 1]")
    mean = X.mean(axis=0)
    Xc = X - mean
    n, d = Xc.shape
    if d <= n:
        evals, evecs = np.linalg.eigh(Xc.T @ Xc / n)
        order = np.argsort(evals)[::-1]
        evals, vecs = evals[order], evecs[:, order].T
    else:
        # wide data: thin SVD spans the same eigenvectors without forming d x d
        _, s, vt = np.linalg.svd(Xc, full_matrices=False)
        evals, vecs = s ** 2 / n, vt
    evals = np.clip(evals, 0.0, None)
    total = evals.sum()
    if total <= 0:
        k = 1
        frac = np.ones(1)
    else:
        frac = evals / total
        k = int(np.searchsorted(np.cumsum(frac), retain - 1e-12) + 1)
        k = min(k, len(frac))
    comps = vecs[:k].copy()
    idx = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), idx])
    comps *= np.where(signs == 0, 1.0, signs)[:, None]
    return PcaModel(mean, comps, frac[:k], retain)


def apply_pca(model: PcaModel, X: np.ndarray) -> np.ndarray:
    return model.apply(X)
