"""PNG/PPM image and CSV helpers shared by the CLI and fixtures."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    return np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path: str | os.PathLike, img) -> None:
    """Write a float image in [0, 1] (or a uint8 array) as 8-bit PNG or PPM/PGM by suffix."""
    arr = np.asarray(img)
    data = arr if arr.dtype == np.uint8 else to_uint8(arr)
    suffix = Path(path).suffix.lower()
    if suffix in (".ppm", ".pgm", ".pnm"):
        if data.ndim == 2 and suffix == ".ppm":
            data = np.repeat(data[:, :, None], 3, axis=2)
        Image.fromarray(data).save(path, format="PPM")
    else:
        Image.fromarray(data).save(path, format="PNG")


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Load an image as ``(H, W, 3)`` float64 in [0, 1]; alpha is dropped."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


def write_csv(path: str | os.PathLike, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def hstack_strip(images) -> np.ndarray:
    return np.concatenate([np.asarray(im) for im in images], axis=1)
