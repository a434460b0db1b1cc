"""3D-SDS convergence on the textured-blob fixture with an exact score oracle.

    python3 scripts/convergence.py --iterations 400 --out runs/convergence
"""

import argparse
import time
from pathlib import Path

from splatdistill.experiments import convergence_run
from splatdistill.ply import save_pointcloud


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--iterations", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--count", type=int, default=300)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    start = time.perf_counter()
    scene, report, before = convergence_run(args.iterations, args.seed, args.count)
    elapsed = time.perf_counter() - start
    print(f"PSNR {before:.2f} -> {report.final_psnr:.2f} dB, {len(scene)} splats, {elapsed:.1f}s")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_pointcloud(scene, out / "final.ply")
        report.write_csv(out / "report.csv")


if __name__ == "__main__":
    main()
