"""Command-line entry point: ``splatdistill <command> [options]``.

Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .camera import CameraError, orbit
from .config import ConfigError, load_config
from .diffusion import DiffusionError, load_view_set, make_schedule, oracle_detail, oracle_target
from .distill import FSD_MODES, SETTINGS
from .experiments import ABLATION_HEADER, ablation_setup, initial_scene, markdown_table, run_ablation
from .fixtures import VARIANTS, VariantParams, fixture_orbit, make_reference_views, make_textured_blob_scene
from .grids import GridError, amplitude, dft2, fftshift, log_amplitude_image, phase, radial_profile
from .imageio import hstack_strip, read_image, write_csv, write_image
from .optim import OptimizationError, Oracles, RunConfig, optimize
from .ply import PlyError, load_pointcloud, save_pointcloud
from .renderer import RenderError, render
from .scene import SceneError, sphere_init

log = logging.getLogger("splatdistill")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "setting", None):
        cfg.setting = args.setting
    if getattr(args, "fsd_mode", None):
        cfg.distillation.fsd_mode = args.fsd_mode
    if getattr(args, "iterations", None) is not None:
        cfg.iterations = args.iterations
    try:
        cfg.validate()
    except (OptimizationError, DiffusionError) as exc:
        raise UsageError(f"invalid run config: {exc}") from None
    return cfg


def cmd_init_scene(args) -> int:
    if args.mode == "sphere":
        scene = sphere_init(args.count, args.radius, args.seed or 0, sh_order=args.sh_order)
    else:
        if not args.input:
            raise UsageError("--mode ply needs --input")
        scene = load_pointcloud(args.input)
    save_pointcloud(scene, args.output, ascii=args.ascii)
    print(len(scene))
    return EXIT_OK


def cmd_fixture(args) -> int:
    fx = make_textured_blob_scene(args.seed or 0, args.count)
    out = _ensure_dir(args.out)
    save_pointcloud(fx.scene, out / "fixture.ply")
    cams = fixture_orbit(args.views, args.resolution, args.resolution)
    for variant in VARIANTS:
        make_reference_views(fx.scene, cams, variant, seed=args.seed or 0, directory=out / variant)
    print(len(fx.scene))
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _run_config(args)
    views = load_view_set(args.views)
    views_2d = load_view_set(args.views_2d) if args.views_2d else views
    h, w = views.images[0].shape[:2]
    if h != w:
        raise UsageError(f"reference views must be square, got {w}x{h}")
    cfg.resolution = h
    sch = make_schedule()
    o3 = oracle_target(views, args.blur_sigma, sch, condition_kinds=("pose",))
    o2 = oracle_detail(views_2d, args.sharpen_gain, args.warp_px, cfg.seed, sch, condition_kinds=("text",))
    if args.scene:
        init = load_pointcloud(args.scene)
    else:
        init = sphere_init(args.count, args.radius, cfg.seed)
    out = _ensure_dir(args.out)

    def checkpoint(it, scene):
        save_pointcloud(scene, out / f"checkpoint_{it:05d}.ply")

    scene, report = optimize(init, Oracles(o3, views, o2), cfg, sch, eval_views=views, checkpoint=checkpoint)
    save_pointcloud(scene, out / "final.ply")
    report.write_csv(out / "report.csv")
    summary = report.summary()
    summary.pop("wall_seconds")
    with open(out / "summary.txt", "w") as fh:
        fh.writelines(f"{k}={v}\n" for k, v in sorted(summary.items()))
    print(f"psnr={report.final_psnr:.3f} splats={len(scene)} config={report.config_hash}")
    return EXIT_OK


def cmd_render(args) -> int:
    scene = load_pointcloud(args.scene)
    cams = orbit(args.views, polar=args.polar, offset=args.offset, radius=args.radius,
                 width=args.resolution, height=args.resolution)
    out = _ensure_dir(args.out)
    images = []
    for i, cam in enumerate(cams):
        img = render(scene, cam).color
        write_image(out / f"view_{i:03d}.png", img)
        images.append(img)
    if args.strip:
        write_image(out / "strip.png", hstack_strip(images))
    print(len(cams))
    return EXIT_OK


def _spectrum_outputs(img, out: Path, stem: str, bins: int) -> np.ndarray:
    spec = dft2(img)
    amp = amplitude(spec)
    write_image(out / f"{stem}.png", log_amplitude_image(fftshift(amp)))
    profile = radial_profile(fftshift(amp), bins)
    write_csv(out / f"{stem}.csv", ("bin", "value"), list(enumerate(profile.tolist())))
    return spec


def cmd_spectrum(args) -> int:
    out = _ensure_dir(args.out)
    first = read_image(args.images[0])
    spec_a = _spectrum_outputs(first, out, "spectrum", args.bins)
    if len(args.images) == 2:
        second = read_image(args.images[1])
        if second.shape != first.shape:
            raise UsageError(f"image shapes differ: {first.shape} vs {second.shape}")
        spec_b = dft2(second)
        amp_diff = np.abs(fftshift(amplitude(spec_a) - amplitude(spec_b)))
        write_image(out / "amplitude_difference.png", log_amplitude_image(amp_diff))
        dphi = np.angle(np.exp(1j * (phase(spec_a) - phase(spec_b))))
        write_image(out / "phase_difference.png", np.abs(fftshift(dphi)) / np.pi)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _run_config(args)
    params = VariantParams(args.blur_sigma, args.sharpen_gain, args.warp_px)
    setup = ablation_setup(args.fixture_seed, params, cfg.resolution)
    out = _ensure_dir(args.out)
    rows = run_ablation(setup, cfg, args.settings, initial_scene(cfg.seed))
    write_csv(out / "ablation.csv", ABLATION_HEADER, [r.as_tuple() for r in rows])
    with open(out / "ablation.md", "w") as fh:
        fh.write(f"# Score-function ablation (seed {cfg.seed}, {cfg.iterations} iterations)\n\n")
        for key in args.settings:
            fh.write(f"- ({key}) {SETTINGS[key]}\n")
        fh.write("\n" + markdown_table(rows))
    for r in rows:
        print(f"{r.setting} chamfer={r.chamfer:.5f} psnr={r.psnr:.2f} hbe={r.high_band_energy:.4e}")
    return EXIT_OK


def _settings_arg(text: str) -> str:
    bad = sorted(set(text) - set(SETTINGS))
    if not text or bad:
        raise argparse.ArgumentTypeError(f"settings must be letters from {''.join(SETTINGS)}")
    return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=None, help="cap on numeric worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--config", help="key=value run config")
    run.add_argument("--setting", choices=sorted(SETTINGS))
    run.add_argument("--fsd-mode", choices=FSD_MODES)
    run.add_argument("--iterations", type=int)
    run.add_argument("--blur-sigma", type=float, default=None)
    run.add_argument("--sharpen-gain", type=float, default=None)
    run.add_argument("--warp-px", type=float, default=None)

    p = _Parser(prog="splatdistill", description="Hybrid Fourier score distillation of Gaussian splats.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("init-scene", parents=[common], help="write an initial scene PLY")
    s.add_argument("--mode", choices=("sphere", "ply"), default="sphere")
    s.add_argument("--count", type=int, default=500)
    s.add_argument("--radius", type=float, default=0.5)
    s.add_argument("--sh-order", type=int, default=0, choices=range(4))
    s.add_argument("--input")
    s.add_argument("--ascii", action="store_true")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_init_scene)

    s = sub.add_parser("fixture", parents=[common], help="write the textured-blob fixture and its view sets")
    s.add_argument("--count", type=int, default=300)
    s.add_argument("--views", type=int, default=8)
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fixture)

    s = sub.add_parser("optimize", parents=[common, run], help="distill a scene from reference views")
    s.add_argument("--views", required=True, help="directory with manifest.csv")
    s.add_argument("--views-2d", help="separate views for the 2D prior (default: --views)")
    s.add_argument("--scene", help="initial scene PLY (default: sphere init)")
    s.add_argument("--count", type=int, default=300)
    s.add_argument("--radius", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("render", parents=[common], help="render an orbit of a scene PLY")
    s.add_argument("--scene", required=True)
    s.add_argument("--views", type=int, default=8)
    s.add_argument("--polar", type=float, default=90.0)
    s.add_argument("--offset", type=float, default=0.0)
    s.add_argument("--radius", type=float, default=1.5)
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--strip", action="store_true", help="also write strip.png")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("spectrum", parents=[common], help="amplitude spectrum of one or two images")
    s.add_argument("images", nargs="+")
    s.add_argument("--bins", type=int, default=32)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("ablate", parents=[common, run], help="compare the five score-function settings")
    s.add_argument("--settings", type=_settings_arg, default="abcde")
    s.add_argument("--fixture-seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.command in ("optimize", "ablate"):
        # pre-transformed view sets (optimize --views/--views-2d) default to no extra transform
        variant = VariantParams()
        raw_3d = args.command == "optimize"
        raw_2d = args.command == "optimize" and args.views_2d is not None
        if args.blur_sigma is None:
            args.blur_sigma = 0.0 if raw_3d else variant.blur_sigma
        if args.sharpen_gain is None:
            args.sharpen_gain = 0.0 if raw_2d else variant.sharpen_gain
        if args.warp_px is None:
            args.warp_px = 0.0 if raw_2d else variant.warp_px
    if args.command == "spectrum" and len(args.images) > 2:
        parser.error("spectrum takes one or two images")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except (UsageError, ConfigError, CameraError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PlyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OptimizationError, DiffusionError, RenderError, GridError, SceneError,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
