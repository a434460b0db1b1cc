"""Hybrid Fourier score distillation for Gaussian-splat scenes, with synthetic score oracles."""

from .camera import Camera, orbit
from .diffusion import ImpliedTargetOracle, OracleCondition, ViewSet, make_schedule, oracle_detail, oracle_target
from .distill import DistillationConfig, fsd_residual, hyfsd_residual, sds_residual
from .fixtures import fixture_orbit, make_reference_views, make_textured_blob_scene
from .optim import Oracles, RunConfig, optimize
from .ply import load_pointcloud, save_pointcloud
from .renderer import render, render_backward
from .scene import GaussianScene, sphere_init

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "DistillationConfig",
    "GaussianScene",
    "ImpliedTargetOracle",
    "OracleCondition",
    "Oracles",
    "RunConfig",
    "ViewSet",
    "fixture_orbit",
    "fsd_residual",
    "hyfsd_residual",
    "load_pointcloud",
    "make_reference_views",
    "make_schedule",
    "make_textured_blob_scene",
    "optimize",
    "oracle_detail",
    "oracle_target",
    "orbit",
    "render",
    "render_backward",
    "save_pointcloud",
    "sds_residual",
    "sphere_init",
]
