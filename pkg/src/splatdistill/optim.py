"""Optimization loop: sample views, distill, backpropagate, Adam update, prune."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .camera import Camera
from .diffusion import DiffusionSchedule, OracleCondition, ViewSet, make_schedule
from .distill import SETTINGS, DistillationConfig, ablation_residual
from .imageio import write_csv
from .metrics import psnr
from .renderer import render, render_backward
from .scene import GaussianScene, SceneGradients

log = logging.getLogger(__name__)

PARAM_GROUPS = {
    "mu": "position",
    "log_scale": "scale",
    "rotation": "rotation",
    "sh": "sh",
    "opacity_logit": "opacity",
}


class OptimizationError(RuntimeError):
    pass


@dataclass
class RunConfig:
    iterations: int = 400
    lr_position_start: float = 1e-3
    lr_position_end: float = 2e-5
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_sh: float = 2.5e-3
    lr_opacity: float = 5e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-15
    resolution: int = 64
    prune_opacity_below: float = 0.01
    prune_every: int = 100
    setting: str = "e"
    polar_jitter_deg: float = 0.0
    ddim_steps_2d: int = 1
    checkpoint_every: int = 0
    seed: int = 0
    distillation: DistillationConfig = field(default_factory=DistillationConfig)

    def validate(self) -> None:
        if self.iterations < 1:
            raise OptimizationError(f"iterations must be >= 1, got {self.iterations}")
        if not 0 < self.lr_position_end <= self.lr_position_start:
            raise OptimizationError("need 0 < lr_position_end <= lr_position_start")
        if self.setting not in SETTINGS:
            raise OptimizationError(f"unknown setting {self.setting!r}")
        if not 0.0 <= self.prune_opacity_below < 1.0:
            raise OptimizationError("prune_opacity_below must be in [0, 1)")
        if self.ddim_steps_2d < 1:
            raise OptimizationError("ddim_steps_2d must be >= 1")
        self.distillation.validate()

    def flat(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "distillation"}
        out.update(asdict(self.distillation))
        return out

    def digest(self) -> str:
        text = "\n".join(f"{k}={v!r}" for k, v in sorted(self.flat().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def lr_at(iteration: int, config: RunConfig) -> float:
    """Exponential interpolation from the start to the end position rate."""
    n = config.iterations
    if not 0 <= iteration < n:
        raise OptimizationError(f"iteration {iteration} outside [0, {n})")
    if iteration == 0:
        return config.lr_position_start
    if iteration == n - 1:
        return config.lr_position_end
    frac = iteration / (n - 1)
    return config.lr_position_start * (config.lr_position_end / config.lr_position_start) ** frac


def group_rates(iteration: int, config: RunConfig) -> dict[str, float]:
    return {
        "position": lr_at(iteration, config),
        "scale": config.lr_scale,
        "rotation": config.lr_rotation,
        "sh": config.lr_sh,
        "opacity": config.lr_opacity,
    }


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15

    @classmethod
    def for_scene(cls, scene: GaussianScene, beta1=0.9, beta2=0.999, eps=1e-15) -> AdamState:
        zeros = {name: np.zeros_like(arr) for name, arr in scene.params().items()}
        return cls({k: v.copy() for k, v in zeros.items()}, zeros, 0, beta1, beta2, eps)

    def subset(self, keep) -> AdamState:
        return AdamState({k: a[keep] for k, a in self.m.items()}, {k: a[keep] for k, a in self.v.items()},
                         self.step, self.beta1, self.beta2, self.eps)


def adam_step(state: AdamState, scene: GaussianScene, grads: SceneGradients, lr_groups: dict):
    """Bias-corrected Adam update applied in place to the pre-activation parameters."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        param = getattr(scene, name)
        if g.shape != param.shape or state.m[name].shape != param.shape:
            raise OptimizationError(f"shape mismatch for {name}: grad {g.shape}, param {param.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        lr = lr_groups[PARAM_GROUPS[name]]
        param -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return scene, state


def prune_mask(scene: GaussianScene, threshold: float) -> np.ndarray:
    keep = scene.opacity >= threshold
    if not np.any(keep):
        keep[np.argmax(scene.opacity_logit)] = True
    return keep


def prune(scene: GaussianScene, threshold: float) -> GaussianScene:
    """Drop splats with activated opacity below ``threshold``; at least one splat survives."""
    return scene.subset(prune_mask(scene, threshold))


@dataclass
class Oracles:
    """The 3D (pose-conditioned) prior is required; the 2D (text) prior is optional."""

    oracle_3d: object
    views_3d: ViewSet
    oracle_2d: object | None = None
    text_tag: str = "a high-quality image"


@dataclass
class RunReport:
    rows: list = field(default_factory=list)  # (iter, setting, t2, t3, loss2d, loss3d)
    final_psnr: float = float("nan")
    iterations: int = 0
    wall_seconds: float = 0.0
    config_hash: str = ""

    HEADER = ("iter", "setting", "t2", "t3", "loss2d", "loss3d")

    def column(self, name: str) -> np.ndarray:
        i = self.HEADER.index(name)
        return np.array([row[i] for row in self.rows], dtype=np.float64)

    def write_csv(self, path) -> None:
        write_csv(path, self.HEADER, self.rows)

    def summary(self) -> dict:
        return {
            "final_psnr": self.final_psnr,
            "iterations": self.iterations,
            "wall_seconds": self.wall_seconds,
            "config_hash": self.config_hash,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def mean_psnr(scene: GaussianScene, views: ViewSet) -> float:
    return float(np.mean([psnr(np.clip(render(scene, c).color, 0, 1), im)
                          for c, im in zip(views.cameras, views.images)]))


def _free_camera(rng, config: RunConfig, like: Camera) -> Camera:
    az = float(rng.uniform(0.0, 360.0))
    jitter = config.polar_jitter_deg
    polar = 90.0 + (float(rng.uniform(-jitter, jitter)) if jitter > 0 else 0.0)
    return Camera(az, polar, like.radius, like.fov_y, config.resolution, config.resolution)


def optimize(scene: GaussianScene, oracles: Oracles, config: RunConfig,
             schedule: DiffusionSchedule | None = None, eval_views: ViewSet | None = None,
             checkpoint=None) -> tuple[GaussianScene, RunReport]:
    """Run the distillation loop and return the optimized copy of ``scene``.

    ``checkpoint(iteration, scene)`` is called every ``config.checkpoint_every``
    iterations when given.
    """
    config.validate()
    schedule = schedule or make_schedule()
    dc = config.distillation
    dc.validate(schedule)
    setting = config.setting
    uses_2d = setting != "b"
    uses_3d = setting != "a"
    if uses_2d and oracles.oracle_2d is None:
        raise OptimizationError(f"setting {setting!r} needs a 2D oracle")
    res = config.resolution
    for im in oracles.views_3d.images:
        if im.shape[:2] != (res, res):
            raise OptimizationError(f"reference view is {im.shape[1]}x{im.shape[0]}, run resolution is {res}")

    scene = scene.copy()
    state = AdamState.for_scene(scene, config.adam_beta1, config.adam_beta2, config.adam_eps)
    report = RunReport(config_hash=config.digest())
    views = oracles.views_3d
    text_cond = OracleCondition.text(oracles.text_tag)
    start = time.perf_counter()
    n = config.iterations

    for it in range(n):
        rng = np.random.default_rng([config.seed, it])
        frac = it / (n - 1) if n > 1 else 0.0
        t_hi = int(round(dc.t_max + (dc.t_max_end - dc.t_max) * frac))
        t2 = int(rng.integers(dc.t_min, t_hi + 1))
        t3 = int(rng.integers(dc.t_min, t_hi + 1))
        view_idx = int(rng.integers(len(views)))
        cam3 = views.cameras[view_idx]
        cam3 = Camera(cam3.azimuth, cam3.polar, cam3.radius, cam3.fov_y, config.resolution, config.resolution)
        cam2 = _free_camera(rng, config, cam3)
        pose_cond = OracleCondition.from_pose(views.embedding(cam3))

        out2 = render(scene, cam2) if uses_2d else None
        out3 = render(scene, cam3) if uses_3d else None
        z2 = out2.color if out2 is not None else None
        z3 = out3.color if out3 is not None else None
        r2, r3 = ablation_residual(
            setting, z2, z3, oracles.oracle_2d, oracles.oracle_3d, text_cond, pose_cond,
            t2, t3, schedule, dc, [config.seed, it], ddim_steps_2d=config.ddim_steps_2d,
        )
        grads = SceneGradients.zeros_like(scene)
        if r2 is not None:
            grads = grads + render_backward(scene, cam2, r2.grad_z, forward=out2)
        if r3 is not None:
            grads = grads + render_backward(scene, cam3, r3.grad_z, forward=out3)
        if not grads.all_finite():
            raise OptimizationError(f"non-finite gradient at iteration {it}")

        adam_step(state, scene, grads, group_rates(it, config))
        report.rows.append((
            it, setting,
            t2 if r2 is not None else "", t3 if r3 is not None else "",
            r2.scalar_loss_proxy if r2 is not None else "",
            r3.scalar_loss_proxy if r3 is not None else "",
        ))

        if config.prune_every > 0 and (it + 1) % config.prune_every == 0 and it + 1 < n:
            keep = prune_mask(scene, config.prune_opacity_below)
            if not np.all(keep):
                scene = scene.subset(keep)
                state = state.subset(keep)
        if checkpoint is not None and config.checkpoint_every > 0 and (it + 1) % config.checkpoint_every == 0:
            checkpoint(it + 1, scene)

    report.iterations = n
    report.wall_seconds = time.perf_counter() - start
    if eval_views is not None:
        report.final_psnr = mean_psnr(scene, eval_views)
    log.info("finished %d iterations in %.1fs, %d splats", n, report.wall_seconds, len(scene))
    return scene, report


def moving_average(x, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(x) < window:
        return np.array([])
    c = np.cumsum(np.concatenate([[0.0], x]))
    return (c[window:] - c[:-window]) / window
