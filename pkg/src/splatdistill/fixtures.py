"""Synthetic ground-truth scenes and reference-view sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera, orbit, reference_camera
from .diffusion import ViewSet, displacement_field, save_view_set, gaussian_blur, unsharp_mask, warp
from .renderer import render
from .scene import GaussianScene

VARIANTS = ("exact", "smooth", "detailed")


@dataclass
class BlobFixture:
    scene: GaussianScene
    positions: np.ndarray  # geometry ground truth


@dataclass
class VariantParams:
    blur_sigma: float = 2.0
    sharpen_gain: float = 1.5
    warp_px: float = 2.0


def make_textured_blob_scene(seed: int = 0, count: int = 300) -> BlobFixture:
    """A bumpy ellipsoidal shell of splats painted with a striped, checkered pattern.

    The shape is deliberately not a sphere so a ball initialization starts
    with measurable geometry error.
    """
    if not 200 <= count <= 500:
        raise ValueError("fixture splat count must be in [200, 500]")
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    theta = np.arccos(np.clip(d[:, 1], -1, 1))
    phi = np.arctan2(d[:, 0], d[:, 2])
    bumps = 1.0 + 0.12 * np.sin(3 * phi) * np.sin(2 * theta)
    axes = np.array([0.42, 0.32, 0.30])
    mu = d * axes * bumps[:, None]

    checker = np.sign(np.sin(4 * phi) * np.sin(4 * theta))
    stripes = np.sin(6 * theta)
    rgb = np.stack(
        [0.5 + 0.3 * checker, 0.45 + 0.25 * stripes, 0.5 - 0.25 * checker * stripes], axis=1
    )
    scale = 0.055 * np.exp(rng.normal(scale=0.1, size=(count, 3)))
    rot = rng.normal(size=(count, 4))
    scene = GaussianScene.from_activated(mu=mu, scale=scale, rotation=rot, rgb=rgb, opacity=0.85)
    return BlobFixture(scene, mu.copy())


def fixture_orbit(count: int = 8, width: int = 64, height: int = 64) -> list[Camera]:
    return orbit(count, polar=90.0, width=width, height=height)


def make_reference_views(scene: GaussianScene, cameras, variant: str = "exact",
                         params: VariantParams | None = None, seed: int = 0, directory=None) -> ViewSet:
    """Render ``scene`` from each camera and apply the variant's image transform.

    With ``directory`` the views are also written there with a ``manifest.csv``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    p = params or VariantParams()
    cameras = list(cameras)
    images = [render(scene, cam).color for cam in cameras]
    if variant == "smooth":
        images = [gaussian_blur(im, p.blur_sigma) for im in images]
    elif variant == "detailed":
        field = displacement_field(images[0].shape, p.warp_px, seed)
        images = [warp(unsharp_mask(im, p.sharpen_gain), field) for im in images]
    ref = reference_camera(cameras[0].width, cameras[0].height)
    views = ViewSet(cameras, images, ref)
    if directory is not None:
        save_view_set(views, directory)
    return views
