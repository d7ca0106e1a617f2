"""Alpha/beta/gamma band power and the 42-d spectral power vector (SPV).

Band power of an N-sample signal is the unnormalised DFT energy in the band,
counting positive and negative frequencies::

    P = sum_{k : low <= |f_k| < high} |X_k|^2,    X_k = sum_n x_n exp(-2 pi i k n / N)

with a rectangular window and the DC bin excluded. By Parseval, P equals
N * sum_n y_n^2 where y is the band-limited (DFT-masked) part of the signal.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .datamodel import EPOCH_SAMPLES, N_CHANNELS, SAMPLE_RATE
from .preprocess import BandpassSpec, apply_bandpass, design_bandpass


@dataclass(frozen=True)
class Band:
    name: str
    low: float
    high: float


ALPHA = Band("alpha", 8.0, 13.0)
BETA = Band("beta", 13.0, 30.0)
GAMMA = Band("gamma", 30.0, 49.0)
BANDS = (ALPHA, BETA, GAMMA)
SPV_DIM = N_CHANNELS * len(BANDS)
# steep per-band filters keep the three bands from leaking energy at 13 and 30 Hz
BAND_FILTER_ORDER = 10


@lru_cache(maxsize=None)
def band_filter(band: Band, order: int = BAND_FILTER_ORDER, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    return design_bandpass(BandpassSpec(band.low, band.high, order), sample_rate)


def band_mask(n: int, band: Band, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Boolean mask over the rfft bins of an n-sample signal (DC excluded)."""
    f = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    return (f >= band.low) & (f < band.high) & (f > 0)


def _bin_weights(n: int) -> np.ndarray:
    # bins other than DC and Nyquist stand for a +/- frequency pair
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def dft_band_energy(x: np.ndarray, band: Band, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Band energy of already-filtered samples along the last axis (no extra filtering)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    spec = np.abs(np.fft.rfft(x, axis=-1)) ** 2
    w = _bin_weights(n) * band_mask(n, band, sample_rate)
    return spec @ w


def band_power(x: np.ndarray, band: Band, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Bandpass `x` to `band` (zero-phase Butterworth) and sum its DFT energy in the band.

    Works along the last axis; a single 640-sample channel gives a scalar.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("band_power input contains non-finite samples")
    y = apply_bandpass(band_filter(band, sample_rate=sample_rate), x)
    return dft_band_energy(y, band, sample_rate)


def band_component(x: np.ndarray, band: Band, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Time-domain signal keeping only the DFT bins of `band` (both signs of frequency)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    X = np.fft.rfft(x, axis=-1)
    return np.fft.irfft(X * band_mask(n, band, sample_rate), n=n, axis=-1)


def band_powers(data: np.ndarray, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """(..., channels, samples) -> (..., channels, 3) alpha/beta/gamma powers."""
    return np.stack([band_power(data, b, sample_rate) for b in BANDS], axis=-1)


def spv(epoch) -> np.ndarray:
    """42-d vector [a1, b1, g1, ..., a14, b14, g14] for one epoch (or a stack of them)."""
    data = getattr(epoch, "data", epoch)
    data = np.asarray(data, dtype=np.float64)
    if data.shape[-2:] != (N_CHANNELS, EPOCH_SAMPLES):
        raise ValueError(f"expected (..., {N_CHANNELS}, {EPOCH_SAMPLES}), got {data.shape}")
    p = band_powers(data)
    return p.reshape(*p.shape[:-2], SPV_DIM)


def window_band_powers(data: np.ndarray, n_windows: int = 5,
                       sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Per-window band energies of an already bandpassed epoch.

    (..., channels, samples) -> (..., n_windows, channels, 3), windows in time order.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[-1]
    if n % n_windows:
        raise ValueError(f"{n} samples do not split into {n_windows} windows")
    w = n // n_windows
    win = data.reshape(*data.shape[:-1], n_windows, w)
    win = np.moveaxis(win, -2, -3)          # (..., n_windows, channels, w)
    return np.stack([dft_band_energy(win, b, sample_rate) for b in BANDS], axis=-1)
