"""Rate/distortion sweep over the global quantization scale.

    python scripts/rd_sweep.py --points 100000 --scales 1 2 4 8
    python scripts/rd_sweep.py --input scene.ply --csv sweep.csv
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from gspyramid import GaussianCloud, PyramidConfig, QuantSpec, build_pyramid, compress, read_ply, stats
from gspyramid.pyramid import default_base_resolution

ATTRS = ("opacity", "scale_0", "scale_1", "scale_2", "f_dc_0", "f_dc_1", "f_dc_2")


def synthetic_cloud(n: int, seed: int) -> GaussianCloud:
    rng = np.random.default_rng(seed)
    # clustered positions with smooth colour fields, closer to real scenes than uniform noise
    centers = rng.uniform(0, 10, (max(1, n // 500), 3))
    pos = centers[rng.integers(0, len(centers), n)] + rng.normal(0, 0.4, (n, 3))
    colour = np.sin(pos @ rng.normal(0, 0.5, (3, 3)))
    ch = np.column_stack([
        rng.logistic(0, 1, n),
        rng.normal(-4, 0.6, (n, 3)),
        colour + rng.normal(0, 0.05, (n, 3)),
    ])
    return GaussianCloud(pos.astype(np.float32), ch.astype(np.float32), ATTRS)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--input", help="PLY to sweep (default: synthetic cloud)")
    ap.add_argument("--points", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--levels", type=int, default=6)
    ap.add_argument("--scales", type=float, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--csv", help="also write the table as CSV")
    args = ap.parse_args(argv)

    cloud = read_ply(args.input) if args.input else synthetic_cloud(args.points, args.seed)
    pyr = build_pyramid(cloud, PyramidConfig(default_base_resolution(cloud.positions), args.levels))
    print(f"{cloud.n} points, levels {pyr.counts()}", file=sys.stderr)

    rows = []
    for s in args.scales:
        t0 = time.perf_counter()
        data = compress(pyr, QuantSpec(q_scale=s))
        rep = stats(data, cloud)
        rows.append({
            "q_scale": s,
            "bytes": len(data),
            "bits_per_primitive": rep["bits_per_primitive"],
            "attribute_mse": rep["attribute_mse"],
            "position_mse": rep["position_mse"],
            "seconds": time.perf_counter() - t0,
        })

    print(f"{'q_scale':>8} {'bytes':>10} {'bpp':>8} {'attr_mse':>11} {'pos_mse':>11}")
    for r in rows:
        print(f"{r['q_scale']:>8g} {r['bytes']:>10d} {r['bits_per_primitive']:>8.2f} "
              f"{r['attribute_mse']:>11.4e} {r['position_mse']:>11.4e}")
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
