"""Image and geometry error measures."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.spatial import cKDTree

from .grids import amplitude, band_energy, dft2, fftshift

LUMA = np.array([0.299, 0.587, 0.114])


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio for images in [0, 1]; ``inf`` when identical."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def _luma(img) -> np.ndarray:
    x = np.asarray(img, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, :, 0] if x.shape[2] == 1 else x @ LUMA
    return x


def ssim(a, b, window: int = 8, c1: float = 0.01**2, c2: float = 0.03**2) -> float:
    """Mean SSIM over all ``window x window`` patches (uniform weights, stride 1)."""
    x, y = _luma(a), _luma(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < window:
        raise ValueError(f"image smaller than the {window}px window")
    px = sliding_window_view(x, (window, window))
    py = sliding_window_view(y, (window, window))
    mx, my = px.mean(axis=(2, 3)), py.mean(axis=(2, 3))
    vx = px.var(axis=(2, 3))
    vy = py.var(axis=(2, 3))
    cov = ((px - mx[..., None, None]) * (py - my[..., None, None])).mean(axis=(2, 3))
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx**2 + my**2 + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def chamfer(points_a, points_b) -> float:
    """Symmetric mean nearest-neighbour distance, averaged over both directions."""
    pa = np.asarray(points_a, dtype=np.float64).reshape(-1, 3)
    pb = np.asarray(points_b, dtype=np.float64).reshape(-1, 3)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("chamfer needs two non-empty point sets")
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


def spectral_gap(a, b, cut: float = 0.5) -> float:
    """High-band energy share of ``a`` minus that of ``b``; positive when ``a`` is sharper."""
    ea = band_energy(fftshift(amplitude(dft2(a))), cut, 1.0)
    eb = band_energy(fftshift(amplitude(dft2(b))), cut, 1.0)
    return ea - eb
