"""Score-distillation residuals in the spatial and frequency domains.

Every function returns the image-space gradient ``dL/dz`` that gets chained
through :func:`splatdistill.renderer.render_backward`. As in standard score
distillation the denoiser Jacobian is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import (
    DiffusionError,
    DiffusionSchedule,
    OracleCondition,
    add_noise,
    cfg_combine,
    ddim_step,
    predicted_x0,
    weight,
)
from .grids import amplitude, as_grid, dft2, idft2

SETTINGS = {
    "a": "2D-SDS",
    "b": "3D-SDS",
    "c": "2D-SDS & 3D-SDS",
    "d": "2D-SDS & 3D-FSD",
    "e": "2D-FSD & 3D-SDS",
}
FSD_MODES = ("chain", "literal")


@dataclass
class DistillationConfig:
    lambda_2d: float = 0.1
    lambda_3d: float = 1.0
    guidance_2d: float = 7.5
    guidance_3d: float = 5.0
    t_min: int = 20
    t_max: int = 980
    t_max_end: int = 500
    fsd_mode: str = "chain"
    weight_mode: str = "sds"

    def validate(self, schedule: DiffusionSchedule | None = None) -> None:
        if self.lambda_2d < 0 or self.lambda_3d < 0:
            raise DiffusionError("lambda weights must be non-negative")
        if self.lambda_2d == 0 and self.lambda_3d == 0:
            raise DiffusionError("lambda_2d and lambda_3d cannot both be zero")
        if self.t_min < 1 or self.t_min > self.t_max or self.t_max_end < self.t_min:
            raise DiffusionError(f"bad timestep bounds [{self.t_min}, {self.t_max}] -> {self.t_max_end}")
        if schedule is not None and max(self.t_max, self.t_max_end) > schedule.steps:
            raise DiffusionError(f"t_max exceeds schedule length {schedule.steps}")
        if self.fsd_mode not in FSD_MODES:
            raise DiffusionError(f"fsd_mode must be one of {FSD_MODES}, got {self.fsd_mode!r}")


@dataclass
class ScoreResidual:
    grad_z: np.ndarray
    t: int
    scalar_loss_proxy: float

    def scaled(self, k: float) -> ScoreResidual:
        return ScoreResidual(k * self.grad_z, self.t, k * self.scalar_loss_proxy)


def _check_condition(oracle, cond: OracleCondition) -> None:
    kinds = getattr(oracle, "condition_kinds", None)
    if kinds is not None and cond.kind not in kinds:
        raise DiffusionError(f"oracle accepts {kinds} conditions, got {cond.kind!r}")


def guided_noise(oracle, z_t, t: int, cond: OracleCondition, guidance: float) -> np.ndarray:
    eps_cond = oracle.predict_noise(z_t, t, cond)
    if guidance == 1.0:
        return eps_cond
    eps_uncond = oracle.predict_noise(z_t, t, cond.dropped())
    return cfg_combine(eps_uncond, eps_cond, guidance)


def denoised_noise(oracle, z_t, t: int, cond: OracleCondition, guidance: float,
                   schedule: DiffusionSchedule, steps: int) -> np.ndarray:
    """Noise estimate implied by ``steps`` guided DDIM steps from ``t`` down to 0.

    One step is the plain guided prediction.
    """
    if steps <= 1:
        return guided_noise(oracle, z_t, t, cond, guidance)
    ts = np.unique(np.linspace(t, 0, steps + 1).round().astype(int))[::-1]
    z = z_t
    for cur, nxt in zip(ts[:-1], ts[1:]):
        z = ddim_step(z, guided_noise(oracle, z, int(cur), cond, guidance), int(cur), int(nxt), schedule)
    ab = schedule.alpha_bar[t]
    return (z_t - np.sqrt(ab) * z) / np.sqrt(1.0 - ab)


def _noised_prediction(z, oracle, cond, t, schedule, guidance, seed, steps=1):
    _check_condition(oracle, cond)
    z = as_grid(z)
    ns = add_noise(z, schedule.check_t(t, lo=1), schedule, seed)
    eps_hat = denoised_noise(oracle, ns.z_t, t, cond, guidance, schedule, steps)
    return z, ns, eps_hat


def sds_residual(z, oracle, cond: OracleCondition, t: int, schedule: DiffusionSchedule,
                 guidance: float, seed, weight_mode: str = "sds", ddim_steps: int = 1) -> ScoreResidual:
    """``w(t) (eps_hat - eps)``; the proxy is the squared gap between ``z`` and the denoised estimate."""
    z, ns, eps_hat = _noised_prediction(z, oracle, cond, t, schedule, guidance, seed, ddim_steps)
    grad = weight(t, schedule, weight_mode) * (eps_hat - ns.eps)
    x0 = predicted_x0(ns.z_t, eps_hat, t, schedule)
    return ScoreResidual(grad, int(t), 0.5 * float(np.mean((z - x0) ** 2)))


def amplitude_residual_grad(eps_hat, eps, mode: str = "chain") -> np.ndarray:
    """Map the amplitude gap ``A(eps_hat) - A(eps)`` back to the spatial grid.

    ``chain`` returns the exact gradient of ``0.5 * sum(gap**2)`` with respect
    to the samples of ``eps_hat``; ``literal`` gives the gap a zero phase.
    """
    X = dft2(eps_hat)
    mag = amplitude(X)
    gap = mag - amplitude(dft2(eps))
    if mode == "chain":
        unit = np.zeros_like(X)
        nz = mag >= 1e-12
        unit[nz] = X[nz] / mag[nz]
        return idft2(gap * unit)
    if mode == "literal":
        return idft2(gap.astype(np.complex128))
    raise DiffusionError(f"unknown fsd mode {mode!r}")


def fsd_residual(z, oracle, cond: OracleCondition, t: int, schedule: DiffusionSchedule,
                 guidance: float, seed, mode: str = "chain", weight_mode: str = "sds",
                 ddim_steps: int = 1) -> ScoreResidual:
    """Amplitude-spectrum distillation residual.

    The proxy compares amplitude spectra of ``z`` and the oracle's denoised
    estimate, so it is blind to circular shifts applied to both.
    """
    z, ns, eps_hat = _noised_prediction(z, oracle, cond, t, schedule, guidance, seed, ddim_steps)
    grad = weight(t, schedule, weight_mode) * amplitude_residual_grad(eps_hat, ns.eps, mode)
    x0 = predicted_x0(ns.z_t, eps_hat, t, schedule)
    gap = amplitude(dft2(z)) - amplitude(dft2(x0))
    return ScoreResidual(grad, int(t), 0.5 * float(np.mean(gap**2)))


def _branch_seeds(seed):
    base = list(np.atleast_1d(seed).astype(np.int64))
    return base + [2], base + [3]


def hyfsd_residual(z_for_2d, z_for_3d, oracle_2d, oracle_3d, cond_2d, cond_3d, t2: int, t3: int,
                   schedule: DiffusionSchedule, config: DistillationConfig, seed, ddim_steps_2d: int = 1):
    """``(lambda_2d * FSD(2D prior), lambda_3d * SDS(3D prior))``; callers sum the parameter gradients."""
    s2, s3 = _branch_seeds(seed)
    r2 = fsd_residual(z_for_2d, oracle_2d, cond_2d, t2, schedule, config.guidance_2d, s2,
                      config.fsd_mode, config.weight_mode, ddim_steps_2d)
    r3 = sds_residual(z_for_3d, oracle_3d, cond_3d, t3, schedule, config.guidance_3d, s3,
                      config.weight_mode)
    return r2.scaled(config.lambda_2d), r3.scaled(config.lambda_3d)


def ablation_residual(setting: str, z_for_2d, z_for_3d, oracle_2d, oracle_3d, cond_2d, cond_3d,
                      t2: int, t3: int, schedule: DiffusionSchedule, config: DistillationConfig, seed,
                      ddim_steps_2d: int = 1):
    """Residual pair ``(2D branch, 3D branch)`` for one of the five score-function settings.

    A branch the setting does not use comes back as ``None``. Single-branch
    settings are unweighted.
    """
    if setting not in SETTINGS:
        raise DiffusionError(f"unknown ablation setting {setting!r}; expected one of {sorted(SETTINGS)}")
    s2, s3 = _branch_seeds(seed)
    c = config
    if setting == "a":
        return sds_residual(z_for_2d, oracle_2d, cond_2d, t2, schedule, c.guidance_2d, s2, c.weight_mode,
                            ddim_steps_2d), None
    if setting == "b":
        return None, sds_residual(z_for_3d, oracle_3d, cond_3d, t3, schedule, c.guidance_3d, s3, c.weight_mode)
    if setting == "e":
        return hyfsd_residual(z_for_2d, z_for_3d, oracle_2d, oracle_3d, cond_2d, cond_3d, t2, t3,
                              schedule, config, seed, ddim_steps_2d)
    r2 = sds_residual(z_for_2d, oracle_2d, cond_2d, t2, schedule, c.guidance_2d, s2, c.weight_mode,
                      ddim_steps_2d)
    if setting == "c":
        r3 = sds_residual(z_for_3d, oracle_3d, cond_3d, t3, schedule, c.guidance_3d, s3, c.weight_mode)
    else:
        r3 = fsd_residual(z_for_3d, oracle_3d, cond_3d, t3, schedule, c.guidance_3d, s3,
                          c.fsd_mode, c.weight_mode)
    return r2.scaled(c.lambda_2d), r3.scaled(c.lambda_3d)
