"""Image grids, unitary 2D DFT, and amplitude/phase diagnostics.

Grids are plain ``float64`` numpy arrays shaped ``(H, W, C)``; spectra are
``complex128`` arrays of the same shape. Every channel is transformed
independently and the forward and inverse transforms both carry the
``1/sqrt(HW)`` factor, so Parseval holds without rescaling.
"""

from __future__ import annotations

import numpy as np

PHASE_AMPLITUDE_FLOOR = 1e-12


class GridError(ValueError):
    """Raised for malformed grids or invalid spectral parameters."""


def as_grid(data, *, allow_complex: bool = False) -> np.ndarray:
    """Validate and promote ``data`` to an ``(H, W, C)`` double-precision grid.

    2D input is treated as single-channel.
    """
    arr = np.asarray(data)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise GridError(f"expected an (H, W, C) grid, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0 or arr.shape[2] == 0:
        raise GridError(f"zero-sized grid {arr.shape}")
    if np.iscomplexobj(arr):
        if not allow_complex:
            raise GridError("complex data where a real grid was expected")
        arr = arr.astype(np.complex128, copy=False)
    else:
        arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise GridError("grid contains non-finite samples")
    return arr


def dft2(img) -> np.ndarray:
    x = as_grid(img, allow_complex=True)
    return np.fft.fft2(x, axes=(0, 1), norm="ortho")


def idft2(spec, *, real: bool = True, tol: float = 1e-6) -> np.ndarray:
    """Inverse unitary DFT.

    With ``real=True`` the imaginary residue must stay below ``tol`` (relative
    to the peak magnitude) and the real part is returned; otherwise the full
    complex result comes back.
    """
    X = as_grid(spec, allow_complex=True)
    x = np.fft.ifft2(X, axes=(0, 1), norm="ortho")
    if not real:
        return x
    scale = max(1.0, float(np.max(np.abs(x))))
    residue = float(np.max(np.abs(x.imag)))
    if residue > tol * scale:
        raise GridError(
            f"inverse transform is not real (imaginary residue {residue:.3e}); "
            "spectrum lacks conjugate symmetry"
        )
    return np.ascontiguousarray(x.real)


def amplitude(spec) -> np.ndarray:
    X = as_grid(spec, allow_complex=True)
    return np.sqrt(X.real**2 + X.imag**2)


def phase(spec) -> np.ndarray:
    """Per-entry angle in (-pi, pi]; entries with negligible amplitude map to 0."""
    X = as_grid(spec, allow_complex=True)
    ang = np.arctan2(X.imag, X.real)
    # atan2 returns -pi on the negative real axis with a -0.0 imaginary part
    ang = np.where(ang <= -np.pi, np.pi, ang)
    ang[np.abs(X) < PHASE_AMPLITUDE_FLOOR] = 0.0
    return ang


def fftshift(grid) -> np.ndarray:
    g = np.asarray(grid)
    if g.ndim == 2:
        g = g[:, :, None]
    return np.roll(g, (g.shape[0] // 2, g.shape[1] // 2), axis=(0, 1))


def _radius_fraction(h: int, w: int) -> np.ndarray:
    """Distance of each cell from the fftshifted center, divided by the max distance."""
    cy, cx = h // 2, w // 2
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.hypot(yy - cy, xx - cx)
    rmax = r.max()
    if rmax == 0:
        return np.zeros((h, w))
    return r / rmax


def radial_profile(amp, bins: int) -> np.ndarray:
    """Mean amplitude over ``bins`` equal-width annuli of a centered spectrum.

    Channels are averaged together. The outermost annulus is closed so the
    corner cells are counted.
    """
    if bins < 1:
        raise GridError(f"bins must be >= 1, got {bins}")
    a = as_grid(amp)
    frac = _radius_fraction(a.shape[0], a.shape[1])
    idx = np.minimum((frac * bins).astype(int), bins - 1)
    per_cell = a.mean(axis=2)
    sums = np.bincount(idx.ravel(), weights=per_cell.ravel(), minlength=bins)
    counts = np.bincount(idx.ravel(), minlength=bins)
    out = np.zeros(bins)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz]
    return out


def band_energy(amp, cut_low: float, cut_high: float) -> float:
    """Fraction of squared amplitude with radius fraction in ``[cut_low, cut_high]``.

    ``amp`` must already be fftshifted. The lower edge is inclusive only at 0,
    so adjacent bands partition the spectrum.
    """
    if not (0.0 <= cut_low < cut_high <= 1.0):
        raise GridError(f"need 0 <= cut_low < cut_high <= 1, got ({cut_low}, {cut_high})")
    a = as_grid(amp)
    frac = _radius_fraction(a.shape[0], a.shape[1])
    energy = (a**2).sum(axis=2)
    total = energy.sum()
    if total == 0:
        return 0.0
    if cut_low == 0.0:
        mask = frac <= cut_high
    else:
        mask = (frac > cut_low) & (frac <= cut_high)
    return float(energy[mask].sum() / total)


def high_band_energy(img, cut: float = 0.5) -> float:
    """Share of spectral energy above ``cut`` of the max radius for a spatial image."""
    return band_energy(fftshift(amplitude(dft2(img))), cut, 1.0)


def log_amplitude_image(amp) -> np.ndarray:
    """``log(1 + A)`` of the channel-mean amplitude, rescaled to 8-bit."""
    a = as_grid(amp).mean(axis=2)
    v = np.log1p(a)
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.round((v - lo) / (hi - lo) * 255.0).astype(np.uint8)
