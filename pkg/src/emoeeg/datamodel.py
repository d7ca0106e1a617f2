"""Domain types, electrode geometry and dataset ingestion.

On disk a dataset is a JSON manifest plus one CSV per trial::

    {"version": 1,
     "trials": [{"subject": "PD01", "cohort": "PD", "emotion": "fear",
                 "trial": 0, "path": "trials/PD01_fear_0.csv"}, ...]}

Trial CSVs carry a header row of channel names (layout order) followed by one
row per sample, in microvolts at 128 Hz. An optional leading comment line
``# sample_rate=<Hz>`` declares the rate explicitly; anything but 128 is rejected.
"""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SAMPLE_RATE = 128
EPOCH_SECONDS = 5
EPOCH_SAMPLES = SAMPLE_RATE * EPOCH_SECONDS
N_CHANNELS = 14
MANIFEST_VERSION = 1

COHORTS = ("PD", "HC")
EMOTIONS = ("sadness", "happiness", "fear", "disgust", "surprise", "anger")

CHANNEL_NAMES = (
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
    "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
)


class DataError(ValueError):
    """Raised when a manifest or trial file violates its format contract."""


class DuplicateTrialError(DataError):
    pass


class MissingFileError(DataError):
    pass


@dataclass(frozen=True)
class Channel:
    name: str
    position: tuple[float, float, float]


@dataclass(frozen=True)
class ChannelLayout:
    channels: tuple[Channel, ...]

    def __post_init__(self):
        names = [c.name for c in self.channels]
        if len(names) != N_CHANNELS:
            raise DataError(f"layout needs {N_CHANNELS} channels, got {len(names)}")
        if len(set(names)) != len(names):
            raise DataError("channel names must be unique")
        for c in self.channels:
            if abs(np.linalg.norm(c.position) - 1.0) > 1e-9:
                raise DataError(f"{c.name} is not on the unit sphere")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    @property
    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.channels])

    def index(self, name: str) -> int:
        return self.names.index(name)


def _sph(colatitude_deg: float, azimuth_deg: float) -> np.ndarray:
    # x to the right ear, y to the nose, z to the vertex; azimuth is measured
    # from the nose towards the left ear.
    th, ph = np.deg2rad(colatitude_deg), np.deg2rad(azimuth_deg)
    return np.array([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.cos(th)])


def _slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    omega = np.arccos(np.clip(a @ b, -1.0, 1.0))
    p = (np.sin((1 - t) * omega) * a + np.sin(t * omega) * b) / np.sin(omega)
    return p / np.linalg.norm(p)


def _left_hemisphere() -> dict[str, np.ndarray]:
    # Idealised spherical 10-10 system: the Fpz-T7-Oz ring sits 10% of the
    # nasion-inion arc (18 deg) above the equator, midline/coronal steps are 18 deg.
    ring = 72.0
    fz, afz, fcz = _sph(36.0, 0.0), _sph(54.0, 0.0), _sph(18.0, 0.0)
    af7, f7, ft7 = _sph(ring, 36.0), _sph(ring, 54.0), _sph(ring, 72.0)
    return {
        "AF3": _slerp(af7, afz, 0.5),
        "F7": f7,
        "F3": _slerp(f7, fz, 0.5),
        "FC5": _slerp(ft7, fcz, 0.25),
        "T7": _sph(ring, 90.0),
        "P7": _sph(ring, 126.0),
        "O1": _sph(ring, 162.0),
    }


_MIRROR = {"AF3": "AF4", "F7": "F8", "F3": "F4", "FC5": "FC6",
           "T7": "T8", "P7": "P8", "O1": "O2"}


def standard_layout() -> ChannelLayout:
    """Return the 14 Emotiv Epoc electrodes on the unit sphere.

    Right-hemisphere electrodes are exact mirror images of their left
    counterparts across the sagittal (x = 0) plane.
    """
    left = _left_hemisphere()
    pos = dict(left)
    for l_name, r_name in _MIRROR.items():
        pos[r_name] = left[l_name] * np.array([-1.0, 1.0, 1.0])
    return ChannelLayout(tuple(Channel(n, tuple(float(v) for v in pos[n]))
                               for n in CHANNEL_NAMES))


@dataclass(frozen=True)
class Trial:
    subject_id: str
    cohort: str
    emotion: str
    trial_index: int
    signal: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.cohort not in COHORTS:
            raise DataError(f"unknown cohort {self.cohort!r}")
        if self.emotion not in EMOTIONS:
            raise DataError(f"unknown emotion {self.emotion!r}")
        if self.sample_rate != SAMPLE_RATE:
            raise DataError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        sig = np.asarray(self.signal, dtype=np.float64)
        if sig.ndim != 2 or sig.shape[0] != N_CHANNELS:
            raise DataError(f"signal must be {N_CHANNELS} x samples, got {sig.shape}")
        if not np.all(np.isfinite(sig)):
            raise DataError("signal contains non-finite samples")
        sig.setflags(write=False)
        object.__setattr__(self, "signal", sig)

    @property
    def n_samples(self) -> int:
        return self.signal.shape[1]

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.subject_id, self.emotion, self.trial_index)


@dataclass(frozen=True)
class Epoch:
    data: np.ndarray
    subject_id: str
    cohort: str
    emotion: str
    trial_index: int
    start: int

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.shape != (N_CHANNELS, EPOCH_SAMPLES):
            raise DataError(f"epoch must be {N_CHANNELS}x{EPOCH_SAMPLES}, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise DataError("epoch contains non-finite samples")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)


@dataclass(frozen=True)
class TrialEntry:
    subject: str
    cohort: str
    emotion: str
    trial: int
    path: Path


@dataclass(frozen=True)
class DatasetManifest:
    version: int
    trials: tuple[TrialEntry, ...] = field(default_factory=tuple)
    root: Path = Path(".")

    def counts_by(self, attr: str) -> dict[str, int]:
        return dict(Counter(getattr(t, attr) for t in self.trials))

    def __len__(self):
        return len(self.trials)


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingFileError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"cannot parse manifest {path}: {exc}") from None
    return parse_manifest(raw, path.parent)


def parse_manifest(raw: dict, root: str | Path = ".") -> DatasetManifest:
    """Validate a decoded manifest object; trial paths resolve against `root`."""
    root = Path(root)
    if not isinstance(raw, dict) or raw.get("version") != MANIFEST_VERSION:
        raise DataError(f"manifest must be an object with version {MANIFEST_VERSION}")
    items = raw.get("trials")
    if not isinstance(items, list):
        raise DataError("manifest 'trials' must be a list")
    entries, seen = [], set()
    for i, item in enumerate(items):
        try:
            entry = TrialEntry(subject=str(item["subject"]), cohort=item["cohort"],
                               emotion=item["emotion"], trial=int(item["trial"]),
                               path=Path(item["path"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"trial entry {i} malformed: {exc!r}") from None
        if entry.cohort not in COHORTS or entry.emotion not in EMOTIONS:
            raise DataError(f"trial entry {i}: bad cohort/emotion")
        key = (entry.subject, entry.emotion, entry.trial)
        if key in seen:
            raise DuplicateTrialError(f"duplicate trial {key}")
        seen.add(key)
        if not (root / entry.path).is_file():
            raise MissingFileError(f"trial file not found: {root / entry.path}")
        entries.append(entry)
    return DatasetManifest(version=MANIFEST_VERSION, trials=tuple(entries), root=root)


def manifest_to_json(manifest: DatasetManifest) -> str:
    obj = {"version": manifest.version,
           "trials": [{"subject": t.subject, "cohort": t.cohort, "emotion": t.emotion,
                       "trial": t.trial, "path": t.path.as_posix()} for t in manifest.trials]}
    return json.dumps(obj, indent=1) + "\n"


def load_trial(entry: TrialEntry, root: str | Path = ".",
               sample_rate: int = SAMPLE_RATE) -> Trial:
    path = Path(root) / entry.path
    if not path.is_file():
        raise MissingFileError(f"trial file not found: {path}")
    header, signal, meta = read_signal_csv(path)
    if "sample_rate" in meta:
        try:
            sample_rate = int(float(meta["sample_rate"]))
        except ValueError:
            raise DataError(f"{path}: bad sample_rate {meta['sample_rate']!r}") from None
    if len(header) != N_CHANNELS:
        raise DataError(f"{path}: expected {N_CHANNELS} channel columns, got {len(header)}")
    if header != list(CHANNEL_NAMES):
        raise DataError(f"{path}: header does not match the channel layout order")
    return Trial(entry.subject, entry.cohort, entry.emotion, entry.trial,
                 signal, sample_rate=sample_rate)


def read_signal_csv(path: str | Path) -> tuple[list[str], np.ndarray, dict[str, str]]:
    meta = {}
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    while lines and lines[0].startswith("#"):
        key, _, value = lines.pop(0).lstrip("#").partition("=")
        meta[key.strip()] = value.strip()
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{path}: empty trial file") from None
    rows = [r for r in reader if r]
    try:
        data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    except ValueError as exc:
        raise DataError(f"{path}: malformed sample rows ({exc})") from None
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite sample")
    return header, data.T.copy(), meta


def format_signal_csv(signal: np.ndarray, names=CHANNEL_NAMES) -> str:
    """Render a channels x samples matrix; repr() floats round-trip exactly."""
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for row in np.asarray(signal, dtype=np.float64).T:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def write_trial(trial: Trial, path: str | Path) -> None:
    Path(path).write_text(format_signal_csv(trial.signal), encoding="utf-8")
