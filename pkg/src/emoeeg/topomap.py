"""Topographic EEG images (32x32x3) and movies (5x32x32x3) from band powers.

Electrodes are flattened with an azimuthal equidistant projection about the
vertex and band powers are spread over the grid by inverse-distance weighting.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .datamodel import ChannelLayout, standard_layout

GRID = 32
N_FRAMES = 5
IDW_POWER = 2.0
HIT_RADIUS = 1e-9
VERTEX = np.array([0.0, 0.0, 1.0])


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectedLayout:
    xy: np.ndarray      # (n_electrodes, 2)
    names: tuple


def aep(points: np.ndarray) -> np.ndarray:
    """Project unit-sphere points (n, 3) to the plane; radius = arc length from the vertex."""
    p = np.asarray(points, dtype=np.float64)
    p = p / np.linalg.norm(p, axis=-1, keepdims=True)
    rho = np.arccos(np.clip(p[..., 2], -1.0, 1.0))
    if np.any(np.isclose(rho, np.pi, rtol=0, atol=1e-12)):
        raise ProjectionError("point antipodal to the vertex has no defined azimuth")
    phi = np.arctan2(p[..., 1], p[..., 0])
    return np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=-1)


def project_aep(layout: ChannelLayout | None = None) -> ProjectedLayout:
    layout = layout or standard_layout()
    return ProjectedLayout(aep(layout.positions), tuple(layout.names))


@dataclass(frozen=True)
class RasterGrid:
    """Pixel-centre coordinates of a square grid and the IDW weight tensor."""
    centers: np.ndarray     # (grid, grid, 2); row 0 is the most anterior (max y)
    weights: np.ndarray     # (grid*grid, n_electrodes), rows sum to 1

    @classmethod
    def build(cls, projected: ProjectedLayout, grid: int = GRID, pad: float = 0.10) -> "RasterGrid":
        xy = projected.xy
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo).max() * (1.0 + 2.0 * pad)
        step = 2.0 * half / grid
        cx = mid[0] - half + step * (np.arange(grid) + 0.5)
        cy = mid[1] + half - step * (np.arange(grid) + 0.5)
        gx, gy = np.meshgrid(cx, cy)
        centers = np.stack([gx, gy], axis=-1)
        d = np.linalg.norm(centers.reshape(-1, 1, 2) - xy[None], axis=-1)
        hit = d < HIT_RADIUS
        with np.errstate(divide="ignore"):
            w = 1.0 / d ** IDW_POWER
        rows = hit.any(axis=1)
        w[rows] = hit[rows].astype(np.float64)
        w /= w.sum(axis=1, keepdims=True)
        return cls(centers, w)


_DEFAULT_GRID: RasterGrid | None = None


def default_grid() -> RasterGrid:
    global _DEFAULT_GRID
    if _DEFAULT_GRID is None:
        _DEFAULT_GRID = RasterGrid.build(project_aep())
    return _DEFAULT_GRID


def rasterize(values, projected: ProjectedLayout | None = None, grid: int = GRID) -> np.ndarray:
    """IDW-interpolate per-electrode values (..., n_electrodes) onto (..., grid, grid)."""
    v = np.asarray(values, dtype=np.float64)
    rg = default_grid() if projected is None and grid == GRID else \
        RasterGrid.build(projected or project_aep(), grid)
    if v.shape[-1] != rg.weights.shape[1]:
        raise ValueError(f"expected {rg.weights.shape[1]} electrode values, got {v.shape[-1]}")
    out = v @ rg.weights.T
    return out.reshape(*v.shape[:-1], grid, grid)


@dataclass(frozen=True)
class BandNormalizer:
    """Per-band min/max fitted on training rasters; values outside clamp."""
    lo: np.ndarray      # (3,)
    hi: np.ndarray
    log_power: bool = False

    def apply(self, raster: np.ndarray) -> np.ndarray:
        span = np.maximum(self.hi - self.lo, 1e-12)
        return np.clip((raster - self.lo) / span, 0.0, 1.0)


def _powers_to_raster(p: np.ndarray, log_power: bool) -> np.ndarray:
    # p: (..., channels, 3) -> (..., grid, grid, 3)
    if log_power:
        p = np.log10(1.0 + p)
    r = rasterize(np.moveaxis(p, -1, -2))       # (..., 3, grid, grid)
    return np.moveaxis(r, -3, -1)


def image_raster(epochs, log_power: bool = False) -> np.ndarray:
    """Un-normalised 32x32x3 rasters for one epoch or (n, 14, 640) stacks."""
    data = np.asarray(getattr(epochs, "data", epochs), dtype=np.float64)
    return _powers_to_raster(spectral.band_powers(data), log_power)


def movie_raster(epochs, log_power: bool = False) -> np.ndarray:
    """Un-normalised 5x32x32x3 rasters: five 1 s windows of the bandpassed epoch."""
    data = np.asarray(getattr(epochs, "data", epochs), dtype=np.float64)
    return _powers_to_raster(spectral.window_band_powers(data, N_FRAMES), log_power)


def fit_normalizer(rasters: np.ndarray, log_power: bool = False) -> BandNormalizer:
    r = np.asarray(rasters).reshape(-1, 3)
    return BandNormalizer(r.min(axis=0), r.max(axis=0), log_power)


def eeg_image(epoch, normalizer: BandNormalizer) -> np.ndarray:
    return normalizer.apply(image_raster(epoch, normalizer.log_power))


def eeg_movie(epoch, normalizer: BandNormalizer) -> np.ndarray:
    return normalizer.apply(movie_raster(epoch, normalizer.log_power))
