"""Noise schedules, forward noising, DDIM updates, guidance, and synthetic score oracles.

The oracles stand in for pretrained denoisers. Each one owns a set of
reference views and an *implied target* per view; its noise prediction is the
exact inversion of the forward noising step against that target, so the
score-distillation fixed point of an oracle is known in closed form.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import ndimage

from .camera import Camera, PoseEmbedding, reference_camera, relative_embedding
from .grids import as_grid


class DiffusionError(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionSchedule:
    steps: int
    alpha_bar: np.ndarray  # length steps + 1, alpha_bar[0] == 1
    beta: np.ndarray  # length steps, beta[t - 1] belongs to timestep t

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if len(ab) != self.steps + 1 or len(self.beta) != self.steps:
            raise DiffusionError("schedule arrays do not match the step count")
        if ab[0] != 1.0 or np.any(ab <= 0) or np.any(ab > 1):
            raise DiffusionError("alpha_bar must start at 1 and stay in (0, 1]")
        if np.any(np.diff(ab) >= 0):
            raise DiffusionError("alpha_bar must be strictly decreasing")

    def check_t(self, t: int, lo: int = 0) -> int:
        if not lo <= t <= self.steps:
            raise DiffusionError(f"timestep {t} outside [{lo}, {self.steps}]")
        return int(t)


def make_schedule(steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    if steps < 1:
        raise DiffusionError(f"steps must be >= 1, got {steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise DiffusionError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    beta = np.linspace(beta_start, beta_end, steps)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - beta)])
    return DiffusionSchedule(steps, alpha_bar, beta)


@dataclass
class NoisySample:
    z_t: np.ndarray
    eps: np.ndarray
    t: int


def add_noise(z0, t: int, schedule: DiffusionSchedule, seed) -> NoisySample:
    """``z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps`` with seeded standard-normal ``eps``."""
    z0 = as_grid(z0)
    t = schedule.check_t(t)
    eps = np.random.default_rng(seed).standard_normal(z0.shape)
    ab = schedule.alpha_bar[t]
    return NoisySample(np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps, eps, t)


def ddim_update(z_t, eps_hat, abar_t: float, abar_prev: float) -> np.ndarray:
    x0 = (z_t - np.sqrt(1.0 - abar_t) * eps_hat) / np.sqrt(abar_t)
    return np.sqrt(abar_prev) * x0 + np.sqrt(1.0 - abar_prev) * eps_hat


def ddim_step(z_t, eps_hat, t: int, t_prev: int, schedule: DiffusionSchedule) -> np.ndarray:
    """Deterministic (eta = 0) DDIM move from ``t`` to ``t_prev``."""
    if not 0 <= t_prev < t <= schedule.steps:
        raise DiffusionError(f"need 0 <= t_prev < t <= T, got t={t}, t_prev={t_prev}")
    return ddim_update(as_grid(z_t), as_grid(eps_hat), schedule.alpha_bar[t], schedule.alpha_bar[t_prev])


def weight(t: int, schedule: DiffusionSchedule, mode: str = "sds") -> float:
    """Timestep weighting: ``1 - abar_t`` (``sds``) or ``1`` (``constant``)."""
    t = schedule.check_t(t)
    if mode == "sds":
        return float(1.0 - schedule.alpha_bar[t])
    if mode == "constant":
        return 1.0
    raise DiffusionError(f"unknown weight mode {mode!r}")


def cfg_combine(eps_uncond, eps_cond, scale: float) -> np.ndarray:
    u, c = np.asarray(eps_uncond, dtype=np.float64), np.asarray(eps_cond, dtype=np.float64)
    if u.shape != c.shape:
        raise DiffusionError(f"shape mismatch {u.shape} vs {c.shape}")
    # exact at the endpoints, where u + s * (c - u) would round
    if scale == 1.0:
        return c.copy()
    if scale == 0.0:
        return u.copy()
    return u + scale * (c - u)


def predicted_x0(z_t, eps_hat, t: int, schedule: DiffusionSchedule) -> np.ndarray:
    ab = schedule.alpha_bar[t]
    return (z_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


@dataclass(frozen=True)
class OracleCondition:
    kind: str  # "text" or "pose"
    text_tag: str = ""
    pose: PoseEmbedding | None = None
    unconditional: bool = False

    def __post_init__(self):
        if self.kind not in ("text", "pose"):
            raise DiffusionError(f"condition kind must be 'text' or 'pose', got {self.kind!r}")
        if (self.kind == "pose") != (self.pose is not None):
            raise DiffusionError("a pose embedding is required exactly for pose conditions")

    @classmethod
    def text(cls, tag: str = "a high-quality image") -> OracleCondition:
        return cls("text", text_tag=tag)

    @classmethod
    def from_pose(cls, pose: PoseEmbedding) -> OracleCondition:
        return cls("pose", pose=pose)

    def dropped(self) -> OracleCondition:
        """The same condition flagged as the unconditional branch of guidance."""
        return OracleCondition(self.kind, self.text_tag, self.pose, unconditional=True)


class ScoreOracle(Protocol):
    schedule: DiffusionSchedule

    def predict_noise(self, z_t: np.ndarray, t: int, cond: OracleCondition) -> np.ndarray: ...


class LatentCodec:
    """Identity encoder/decoder; distillation runs directly on pixels."""

    def encode(self, x):
        return x

    def decode(self, z):
        return z


@dataclass
class ViewSet:
    """Reference images keyed by camera, plus the camera that defines relative poses."""

    cameras: list
    images: list
    reference: Camera

    def __post_init__(self):
        if not self.cameras:
            raise DiffusionError("empty reference view set")
        if len(self.cameras) != len(self.images):
            raise DiffusionError("camera/image count mismatch")
        self.images = [as_grid(im) for im in self.images]
        self._keys = np.stack(
            [relative_embedding(self.reference, c).as_array() for c in self.cameras]
        )

    def __len__(self) -> int:
        return len(self.cameras)

    def nearest_pose(self, pose: PoseEmbedding) -> int:
        return int(np.argmin(np.sum((self._keys - pose.as_array()) ** 2, axis=1)))

    def embedding(self, cam: Camera) -> PoseEmbedding:
        return relative_embedding(self.reference, cam)


def load_view_set(directory: str | os.PathLike, reference: Camera | None = None) -> ViewSet:
    """Read ``manifest.csv`` (``azimuth_deg,polar_deg,radius,file``) and its images."""
    from .imageio import read_image

    directory = Path(directory)
    manifest = directory / "manifest.csv"
    if not manifest.is_file():
        raise FileNotFoundError(f"no manifest.csv in {directory}")
    cams, imgs = [], []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            img = read_image(directory / row["file"])
            cams.append(Camera(float(row["azimuth_deg"]), float(row["polar_deg"]), float(row["radius"]),
                               width=img.shape[1], height=img.shape[0]))
            imgs.append(img)
    if not cams:
        raise DiffusionError(f"manifest {manifest} lists no views")
    if reference is None:
        reference = reference_camera(cams[0].width, cams[0].height)
    return ViewSet(cams, imgs, reference)


def save_view_set(views: ViewSet, directory: str | os.PathLike, fmt: str = "png") -> None:
    from .imageio import write_csv, write_image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (cam, img) in enumerate(zip(views.cameras, views.images)):
        name = f"view_{i:03d}.{fmt}"
        write_image(directory / name, img)
        rows.append((cam.azimuth, cam.polar, cam.radius, name))
    write_csv(directory / "manifest.csv", ["azimuth_deg", "polar_deg", "radius", "file"], rows)


def gaussian_blur(img, sigma: float) -> np.ndarray:
    img = as_grid(img)
    if sigma <= 0:
        return img.copy()
    return ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="nearest")


def unsharp_mask(img, gain: float, radius: float = 1.0) -> np.ndarray:
    img = as_grid(img)
    if gain == 0:
        return img.copy()
    return np.clip(img + gain * (img - gaussian_blur(img, radius)), 0.0, 1.0)


def displacement_field(shape, rms_px: float, seed, smoothness: float | None = None) -> np.ndarray:
    """Smooth random ``(H, W, 2)`` pixel offsets with the given RMS magnitude."""
    h, w = shape[:2]
    if rms_px <= 0:
        return np.zeros((h, w, 2))
    rng = np.random.default_rng(seed)
    sigma = smoothness if smoothness is not None else max(h, w) / 8.0
    field = ndimage.gaussian_filter(rng.standard_normal((h, w, 2)), sigma=(sigma, sigma, 0), mode="wrap")
    rms = np.sqrt(np.mean(np.sum(field**2, axis=2)))
    return field * (rms_px / rms)


def warp(img, field) -> np.ndarray:
    img = as_grid(img)
    if not np.any(field):
        return img.copy()
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [yy + field[:, :, 1], xx + field[:, :, 0]]
    return np.stack(
        [ndimage.map_coordinates(img[:, :, c], coords, order=1, mode="nearest") for c in range(img.shape[2])],
        axis=2,
    )


class ImpliedTargetOracle:
    """Noise predictor that inverts forward noising against per-view target images.

    Pose conditions select the view with the nearest pose key. Text conditions
    carry no pose, so the view most likely to have produced ``z_t`` is used,
    i.e. the target closest to ``z_t / sqrt(abar_t)``; this mimics a 2D prior
    snapping a render to whichever mode it resembles. The unconditional branch
    uses ``null_target`` when one is given and otherwise matches the
    conditional branch, which makes guidance a no-op.
    """

    def __init__(self, views: ViewSet, targets, schedule: DiffusionSchedule, null_target=None,
                 condition_kinds=("text", "pose")):
        self.condition_kinds = tuple(condition_kinds)
        self.views = views
        self.targets = [as_grid(t) for t in targets]
        self.schedule = schedule
        self.null_target = None if null_target is None else as_grid(null_target)

    def select_view(self, z_t, t: int, cond: OracleCondition) -> int:
        if cond.kind == "pose":
            return self.views.nearest_pose(cond.pose)
        scaled = np.sqrt(self.schedule.alpha_bar[t])
        errs = [float(np.sum((z_t - scaled * tgt) ** 2)) for tgt in self.targets]
        return int(np.argmin(errs))

    def implied_target(self, z_t, t: int, cond: OracleCondition) -> np.ndarray:
        if cond.unconditional and self.null_target is not None:
            return self.null_target
        return self.targets[self.select_view(z_t, t, cond)]

    def predict_noise(self, z_t, t: int, cond: OracleCondition) -> np.ndarray:
        t = self.schedule.check_t(t, lo=1)
        z_t = as_grid(z_t)
        target = self.implied_target(z_t, t, cond)
        if target.shape != z_t.shape:
            raise DiffusionError(f"oracle target shape {target.shape} != input {z_t.shape}")
        ab = self.schedule.alpha_bar[t]
        return (z_t - np.sqrt(ab) * target) / np.sqrt(1.0 - ab)


def oracle_target(views: ViewSet, blur_sigma: float, schedule: DiffusionSchedule,
                  null_target=None, condition_kinds=("text", "pose")) -> ImpliedTargetOracle:
    """Smooth, structure-faithful oracle: targets are blurred reference views."""
    return ImpliedTargetOracle(views, [gaussian_blur(im, blur_sigma) for im in views.images],
                               schedule, null_target, condition_kinds)


def oracle_detail(views: ViewSet, sharpen_gain: float, warp_px: float, seed,
                  schedule: DiffusionSchedule, null_target=None,
                  condition_kinds=("text", "pose")) -> ImpliedTargetOracle:
    """Detailed but distorted oracle: sharpened views pushed through one fixed random warp."""
    if warp_px < 0:
        raise DiffusionError("warp_px must be >= 0")
    field = displacement_field(views.images[0].shape, warp_px, seed)
    targets = [warp(unsharp_mask(im, sharpen_gain), field) for im in views.images]
    oracle = ImpliedTargetOracle(views, targets, schedule, null_target, condition_kinds)
    oracle.field = field
    return oracle
