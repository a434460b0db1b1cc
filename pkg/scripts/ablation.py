"""Score-function ablation over settings a-e and several seeds.

Prints one table row per (setting, seed), the per-seed ordering checks and
the seed means. Roughly two minutes per seed on one core.

    python3 scripts/ablation.py --seeds 0 1 2 --out runs/ablation
"""

import argparse
from pathlib import Path

import numpy as np

from splatdistill.experiments import ablation_setup, markdown_table, ordering_checks, run_ablation
from splatdistill.imageio import write_csv
from splatdistill.optim import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--iterations", type=int, default=400)
    ap.add_argument("--lambda-2d", type=float, default=None)
    ap.add_argument("--fsd-mode", choices=("chain", "literal"), default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    setup = ablation_setup()
    rows = []
    for seed in args.seeds:
        cfg = RunConfig(iterations=args.iterations, seed=seed)
        if args.lambda_2d is not None:
            cfg.distillation.lambda_2d = args.lambda_2d
        if args.fsd_mode:
            cfg.distillation.fsd_mode = args.fsd_mode
        seed_rows = run_ablation(setup, cfg)
        rows.extend(seed_rows)
        checks = ordering_checks({r.setting: r for r in seed_rows})
        print(f"seed {seed}: " + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()), flush=True)

    print(markdown_table(rows))
    for s in "abcde":
        sub = [r for r in rows if r.setting == s]
        print(f"mean {s}: chamfer {np.mean([r.chamfer for r in sub]):.5f} "
              f"psnr {np.mean([r.psnr for r in sub]):.2f} "
              f"high-band {np.mean([r.high_band_energy for r in sub]):.4e}")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "ablation.csv", ("setting", "seed", "chamfer", "psnr", "high_band_energy"),
                  [(r.setting, r.seed, r.chamfer, r.psnr, r.high_band_energy) for r in rows])
        (out / "ablation.md").write_text(markdown_table(rows))


if __name__ == "__main__":
    main()
