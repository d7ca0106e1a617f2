"""Synthetic emotional-EEG cohorts built from band-limited Gaussian noise.

Each channel is a sum of alpha, beta and gamma noise processes (white noise
through that band's Butterworth filter, rescaled to unit variance) with
cohort/emotion dependent gains, plus a white noise floor.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .datamodel import (CHANNEL_NAMES, COHORTS, EMOTIONS, EPOCH_SAMPLES, N_CHANNELS,
                        SAMPLE_RATE, DatasetManifest, Trial, TrialEntry, manifest_to_json,
                        format_signal_csv)
from .evalharness.tasks import TaskSpec
from .preprocess import BandpassSpec, apply_bandpass, design_bandpass, frequency_response
from .spectral import BANDS, band_powers

CHANNEL_GROUPS = {
    "frontal": ("AF3", "F7", "F3", "F4", "F8", "AF4"),
    "central_temporal": ("FC5", "T7", "T8", "FC6"),
    "posterior": ("P7", "O1", "O2", "P8"),
    "left": ("AF3", "F7", "F3", "FC5", "T7", "P7", "O1"),
    "right": ("O2", "P8", "T8", "FC6", "F4", "F8", "AF4"),
    "all": CHANNEL_NAMES,
}
SYNTH_FILTER_ORDER = 4
EDGE_PAD = 256          # samples discarded at each end to skip filter start-up


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class EffectRule:
    """Multiply the (alpha, beta, gamma) amplitudes of some channels for matching trials."""
    gains: tuple[float, float, float]
    cohort: str = "*"
    emotion: str = "*"
    channels: str | tuple[str, ...] = "all"

    def __post_init__(self):
        g = tuple(float(v) for v in self.gains)
        if len(g) != len(BANDS) or min(g) <= 0 or not np.all(np.isfinite(g)):
            raise SynthError(f"gains must be 3 positive numbers, got {self.gains}")
        object.__setattr__(self, "gains", g)
        if self.cohort not in ("*",) + COHORTS:
            raise SynthError(f"bad cohort in effect rule: {self.cohort!r}")
        if self.emotion not in ("*",) + EMOTIONS:
            raise SynthError(f"bad emotion in effect rule: {self.emotion!r}")
        if isinstance(self.channels, str):
            if self.channels not in CHANNEL_GROUPS:
                raise SynthError(f"unknown channel group {self.channels!r}")
        else:
            chans = tuple(self.channels)
            bad = [c for c in chans if c not in CHANNEL_NAMES]
            if bad:
                raise SynthError(f"unknown channels {bad}")
            object.__setattr__(self, "channels", chans)

    def channel_index(self) -> list[int]:
        names = CHANNEL_GROUPS[self.channels] if isinstance(self.channels, str) else self.channels
        return [CHANNEL_NAMES.index(n) for n in names]

    def matches(self, cohort: str, emotion: str) -> bool:
        return self.cohort in ("*", cohort) and self.emotion in ("*", emotion)

    def to_dict(self) -> dict:
        ch = self.channels if isinstance(self.channels, str) else list(self.channels)
        return {"cohort": self.cohort, "emotion": self.emotion, "channels": ch,
                "gains": list(self.gains)}


@dataclass(frozen=True)
class CohortSpec:
    subjects_per_cohort: int = 20
    trials_per_emotion: int = 6
    duration_s: float = 10.0
    seed: int = 0
    effects: tuple[EffectRule, ...] = field(default_factory=tuple)
    band_sigma: tuple[float, float, float] = (6.0, 4.0, 2.0)     # uV per band before gains
    noise_sigma: float = 1.0                                     # uV white floor
    subject_jitter: float = 0.0     # sd of the per-subject log-gain offset

    def __post_init__(self):
        if self.subjects_per_cohort < 1 or self.trials_per_emotion < 1:
            raise SynthError("need at least one subject per cohort and one trial per emotion")
        if self.duration_s < EPOCH_SAMPLES / SAMPLE_RATE:
            raise SynthError("trial duration must be at least 5 s")
        sig = tuple(float(s) for s in self.band_sigma)
        if len(sig) != len(BANDS) or min(sig) <= 0:
            raise SynthError("band_sigma must be 3 positive numbers")
        object.__setattr__(self, "band_sigma", sig)
        if self.noise_sigma < 0 or self.subject_jitter < 0:
            raise SynthError("noise_sigma and subject_jitter must be >= 0")
        object.__setattr__(self, "effects", tuple(
            e if isinstance(e, EffectRule) else EffectRule(**e) for e in self.effects))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * SAMPLE_RATE))

    @property
    def n_trials(self) -> int:
        return len(COHORTS) * self.subjects_per_cohort * len(EMOTIONS) * self.trials_per_emotion

    def gain_table(self, cohort: str, emotion: str) -> np.ndarray:
        """(14, 3) amplitude multipliers for a cohort/emotion cell."""
        g = np.ones((N_CHANNELS, len(BANDS)))
        for rule in self.effects:
            if rule.matches(cohort, emotion):
                g[rule.channel_index()] *= rule.gains
        return g

    def to_dict(self) -> dict:
        d = asdict(self)
        d["effects"] = [e.to_dict() for e in self.effects]
        d["band_sigma"] = list(self.band_sigma)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CohortSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SynthError(f"unknown cohort spec fields: {sorted(unknown)}")
        d["effects"] = tuple(EffectRule(**{**e, "gains": tuple(e["gains"]),
                                           "channels": e.get("channels", "all")
                                           if isinstance(e.get("channels", "all"), str)
                                           else tuple(e["channels"])})
                             for e in d.get("effects", ()))
        if "band_sigma" in d:
            d["band_sigma"] = tuple(d["band_sigma"])
        return cls(**d)

    def with_effects(self, effects) -> "CohortSpec":
        return CohortSpec(**{**self.__dict__, "effects": tuple(effects)})


def load_spec(path: str | Path) -> CohortSpec:
    return CohortSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------- noise processes

@lru_cache(maxsize=None)
def _band_sos(i: int) -> tuple[np.ndarray, float]:
    b = BANDS[i]
    sos = design_bandpass(BandpassSpec(b.low, b.high, SYNTH_FILTER_ORDER))
    # zero-phase filtering applies |H|^2; output variance of unit white noise is mean |H|^4
    f = np.linspace(0, SAMPLE_RATE / 2, 16385)
    h4 = np.abs(frequency_response(sos, f)) ** 4
    var = trapezoid(h4, f) / (SAMPLE_RATE / 2)
    return sos, float(1.0 / np.sqrt(var))


def band_noise(rng: np.random.Generator, shape: tuple, band_index: int) -> np.ndarray:
    """Unit-variance band-limited Gaussian noise along the last axis."""
    sos, scale = _band_sos(band_index)
    n = shape[-1]
    white = rng.standard_normal(shape[:-1] + (n + 2 * EDGE_PAD,))
    return scale * apply_bandpass(sos, white)[..., EDGE_PAD:EDGE_PAD + n]


def subject_offsets(spec: CohortSpec, cohort: str, subject: int) -> np.ndarray:
    if spec.subject_jitter == 0:
        return np.ones((N_CHANNELS, len(BANDS)))
    rng = np.random.default_rng([spec.seed, 1, COHORTS.index(cohort), subject])
    return np.exp(spec.subject_jitter * rng.standard_normal((N_CHANNELS, len(BANDS))))


def synthesize(rng: np.random.Generator, amplitudes: np.ndarray, n_samples: int,
               noise_sigma: float) -> np.ndarray:
    """Signals for amplitude tables of shape (..., 14, 3) -> (..., 14, n_samples)."""
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    lead = amplitudes.shape[:-1]
    out = np.zeros(lead + (n_samples,))
    for b in range(len(BANDS)):
        out += amplitudes[..., b, None] * band_noise(rng, lead + (n_samples,), b)
    if noise_sigma:
        out += noise_sigma * rng.standard_normal(out.shape)
    return out


def _trial_key(spec: CohortSpec, cohort: str, subject: int, emotion: str, trial: int) -> list[int]:
    return [spec.seed, 2, COHORTS.index(cohort), subject, EMOTIONS.index(emotion), trial]


def _make_trial(spec: CohortSpec, cohort: str, subject: int, emotion: str, trial: int) -> Trial:
    amp = (np.asarray(spec.band_sigma) * spec.gain_table(cohort, emotion)
           * subject_offsets(spec, cohort, subject))
    rng = np.random.default_rng(_trial_key(spec, cohort, subject, emotion, trial))
    sig = synthesize(rng, amp, spec.n_samples, spec.noise_sigma)
    return Trial(subject_id(cohort, subject), cohort, emotion, trial, sig)


def subject_id(cohort: str, subject: int) -> str:
    return f"{cohort}{subject + 1:02d}"


def trial_cells(spec: CohortSpec):
    """(cohort, subject, emotion, trial) tuples in canonical order."""
    for cohort in COHORTS:
        for s in range(spec.subjects_per_cohort):
            for emotion in EMOTIONS:
                for t in range(1, spec.trials_per_emotion + 1):
                    yield cohort, s, emotion, t


def generate_trials(spec: CohortSpec):
    """Yield every trial of the cohort in memory (no files)."""
    for cell in trial_cells(spec):
        yield _make_trial(spec, *cell)


def _trial_path(cohort, subject, emotion, trial) -> str:
    return f"trials/{subject_id(cohort, subject)}_{emotion}_{trial}.csv"


def _write_one(args) -> str:
    spec, out_dir, cell = args
    tr = _make_trial(spec, *cell)
    rel = _trial_path(*cell)
    (Path(out_dir) / rel).write_text(format_signal_csv(tr.signal), encoding="utf-8")
    return rel


def generate(spec: CohortSpec, out_dir: str | Path, jobs: int = 1) -> DatasetManifest:
    """Write manifest.json, cohort.json and one CSV per trial under `out_dir`."""
    out = Path(out_dir)
    (out / "trials").mkdir(parents=True, exist_ok=True)
    cells = list(trial_cells(spec))
    tasks = [(spec, str(out), c) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            paths = list(pool.map(_write_one, tasks, chunksize=8))
    else:
        paths = [_write_one(t) for t in tasks]
    entries = tuple(TrialEntry(subject_id(c, s), c, e, t, Path(p))
                    for (c, s, e, t), p in zip(cells, paths))
    manifest = DatasetManifest(1, entries, out)
    (out / "manifest.json").write_text(manifest_to_json(manifest), encoding="utf-8")
    (out / "cohort.json").write_text(json.dumps(spec.to_dict(), indent=1, sort_keys=True) + "\n",
                                     encoding="utf-8")
    return manifest


# ---------------------------------------------------------------- separability oracle

def _oracle_features(spec: CohortSpec, cells, rng: np.random.Generator, fresh_subjects: bool,
                     chunk: int = 128) -> np.ndarray:
    """Log band powers of freshly generated, 8-49 Hz filtered single epochs."""
    sos = design_bandpass(BandpassSpec())
    feats = []
    subj_rng = np.random.default_rng(rng.integers(2**63))
    for s in range(0, len(cells), chunk):
        part = cells[s:s + chunk]
        amp = np.stack([np.asarray(spec.band_sigma) * spec.gain_table(c, e) for c, e in part])
        if fresh_subjects and spec.subject_jitter:
            amp = amp * np.exp(spec.subject_jitter * subj_rng.standard_normal(amp.shape))
        sig = synthesize(rng, amp, EPOCH_SAMPLES + 2 * EDGE_PAD, spec.noise_sigma)
        ep = apply_bandpass(sos, sig)[..., EDGE_PAD:EDGE_PAD + EPOCH_SAMPLES]
        feats.append(np.log(band_powers(ep).reshape(len(part), -1) + 1e-12))
    return np.concatenate(feats)


def _qda_fit(X, y, priors):
    params = []
    for c, prior in enumerate(priors):
        Xc = X[y == c]
        mu = Xc.mean(axis=0)
        cov = np.cov(Xc, rowvar=False, bias=True)
        cov += 1e-6 * np.trace(cov) / len(cov) * np.eye(len(cov))
        sign, logdet = np.linalg.slogdet(cov)
        params.append((mu, np.linalg.inv(cov), logdet, np.log(prior)))
    return params


def _qda_predict(params, X):
    scores = []
    for mu, prec, logdet, logprior in params:
        d = X - mu
        scores.append(-0.5 * np.einsum("ij,jk,ik->i", d, prec, d) - 0.5 * logdet + logprior)
    return np.argmax(np.stack(scores, axis=1), axis=1)


def oracle_separability(spec: CohortSpec, task: TaskSpec | None = None, n_fit: int = 300,
                        n_test: int = 1000, seed: int = 0) -> float:
    """Monte-Carlo accuracy of a quadratic discriminant on log band powers.

    Epochs are drawn from the generator's own cell parameters (cohort/emotion
    gains, fresh per-epoch subject offsets), the discriminant is fit on `n_fit`
    draws per class and scored on `n_test` further draws. The random streams
    depend only on `seed`, so specs that differ only in gains share noise.
    """
    task = task or TaskSpec("pd_vs_hc")
    cells = [(c, e) for c in COHORTS for e in EMOTIONS if task.accepts(c, e)]
    k = len(task.classes)
    labels = np.array([task.label(c, e) for c, e in cells])
    priors = np.bincount(labels, minlength=k) / len(cells)
    rng = np.random.default_rng([seed, 7])
    fit_idx = np.concatenate([rng.choice(np.flatnonzero(labels == c), size=n_fit) for c in range(k)])
    fit_cells = [cells[i] for i in fit_idx]
    test_cells = [cells[i] for i in rng.integers(len(cells), size=n_test)]
    Xf = _oracle_features(spec, fit_cells, np.random.default_rng([seed, 8]), True)
    Xt = _oracle_features(spec, test_cells, np.random.default_rng([seed, 9]), True)
    params = _qda_fit(Xf, labels[fit_idx], priors)
    return float(np.mean(_qda_predict(params, Xt) == np.array([task.label(c, e) for c, e in test_cells])))
