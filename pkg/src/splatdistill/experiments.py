"""Reusable experiment harnesses: the convergence run and the score-function ablation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .diffusion import DiffusionSchedule, ViewSet, make_schedule, oracle_detail, oracle_target
from .fixtures import VariantParams, fixture_orbit, make_reference_views, make_textured_blob_scene
from .grids import high_band_energy
from .metrics import chamfer
from .optim import Oracles, RunConfig, RunReport, optimize
from .renderer import render
from .scene import GaussianScene, sphere_init

ABLATION_HEADER = ("setting", "chamfer", "psnr", "high_band_energy")
INIT_COUNT = 300
INIT_RADIUS = 0.5
DETAIL_WARP_SEED = 7


@dataclass
class AblationSetup:
    scene: GaussianScene
    positions: np.ndarray
    views: ViewSet
    oracles: Oracles
    schedule: DiffusionSchedule


def ablation_setup(fixture_seed: int = 0, params: VariantParams | None = None,
                   resolution: int = 64, view_count: int = 8) -> AblationSetup:
    """Textured-blob fixture with a smooth pose-conditioned oracle and a detailed text-conditioned one."""
    p = params or VariantParams()
    fx = make_textured_blob_scene(fixture_seed)
    views = make_reference_views(fx.scene, fixture_orbit(view_count, resolution, resolution), "exact")
    sch = make_schedule()
    o3 = oracle_target(views, p.blur_sigma, sch, condition_kinds=("pose",))
    o2 = oracle_detail(views, p.sharpen_gain, p.warp_px, DETAIL_WARP_SEED, sch, condition_kinds=("text",))
    return AblationSetup(fx.scene, fx.positions, views, Oracles(o3, views, o2), sch)


def initial_scene(seed: int, count: int = INIT_COUNT, radius: float = INIT_RADIUS) -> GaussianScene:
    return sphere_init(count, radius, 100 + seed)


def mean_high_band_energy(scene: GaussianScene, cameras) -> float:
    return float(np.mean([high_band_energy(render(scene, cam).color) for cam in cameras]))


@dataclass
class AblationRow:
    setting: str
    seed: int
    chamfer: float
    psnr: float
    high_band_energy: float
    report: RunReport
    scene: GaussianScene

    def as_tuple(self):
        return (self.setting, self.chamfer, self.psnr, self.high_band_energy)


def run_setting(setup: AblationSetup, setting: str, config: RunConfig,
                init: GaussianScene | None = None) -> AblationRow:
    cfg = replace(config, setting=setting, distillation=replace(config.distillation))
    start = init if init is not None else initial_scene(cfg.seed)
    scene, report = optimize(start, setup.oracles, cfg, setup.schedule, eval_views=setup.views)
    return AblationRow(
        setting, cfg.seed,
        chamfer(scene.mu, setup.positions), report.final_psnr,
        mean_high_band_energy(scene, setup.views.cameras), report, scene,
    )


def run_ablation(setup: AblationSetup, config: RunConfig, settings="abcde", init=None) -> list[AblationRow]:
    """All requested settings from the same initial scene and seed."""
    return [run_setting(setup, s, config, init) for s in settings]


def ordering_checks(rows: dict[str, AblationRow], chamfer_slack: float = 1.25) -> dict[str, bool]:
    """Expected relations between settings for a single seed."""
    a, b, c, d, e = (rows[k] for k in "abcde")
    return {
        "a_chamfer_above_b": a.chamfer > b.chamfer,
        "e_chamfer_near_b": e.chamfer <= chamfer_slack * b.chamfer,
        "e_sharper_than_b": e.high_band_energy > b.high_band_energy,
        "d_chamfer_not_below_c": d.chamfer >= c.chamfer,
    }


def markdown_table(rows) -> str:
    lines = ["| setting | seed | chamfer | psnr | high-band energy |", "|---|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {r.setting} | {r.seed} | {r.chamfer:.5f} | {r.psnr:.2f} | {r.high_band_energy:.4e} |")
    return "\n".join(lines) + "\n"


def convergence_run(iterations: int = 400, seed: int = 0, count: int = INIT_COUNT,
                    fixture_seed: int = 0) -> tuple[GaussianScene, RunReport, float]:
    """3D-SDS against exact reference views; returns the scene, report and initial PSNR."""
    from .optim import mean_psnr

    fx = make_textured_blob_scene(fixture_seed)
    views = make_reference_views(fx.scene, fixture_orbit(8), "exact")
    sch = make_schedule()
    oracle = oracle_target(views, 0.0, sch)
    init = sphere_init(count, INIT_RADIUS, 1 + seed)
    cfg = RunConfig(setting="b", iterations=iterations, seed=seed)
    before = mean_psnr(init, views)
    scene, report = optimize(init, Oracles(oracle, views), cfg, sch, eval_views=views)
    return scene, report, before
