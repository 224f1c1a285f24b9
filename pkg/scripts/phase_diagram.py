"""Sync(h, K) surfaces for every (theta0, omega) regime on both tree models.

    python scripts/phase_diagram.py --preset reduced --out runs/sync
    python scripts/phase_diagram.py --preset full --workers 8   # overnight
"""
import argparse
import os
import time

import numpy as np

from sparsediff import persist
from sparsediff.kuramoto_experiments import SyncConfig, all_regimes, high_sync_region, phase_diagram


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", choices=("full", "reduced"), default="reduced")
    ap.add_argument("--models", nargs="+", default=["binomial", "dregular"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/sync")
    args = ap.parse_args()

    summary = {"preset": args.preset, "seed": args.seed, "surfaces": {}}
    t0 = time.perf_counter()
    for model in args.models:
        base = SyncConfig(model=model)
        if args.preset == "reduced":
            base = base.reduced()
        for cfg in all_regimes(base):
            t1 = time.perf_counter()
            surf = phase_diagram(cfg, args.seed, args.workers)
            tag = f"{cfg.model}_{cfg.theta0_mode}_{cfg.omega_mode}"
            persist.write_csv(os.path.join(args.out, f"sync_{tag}.csv"),
                              *persist.surface_rows(surf.h_values, surf.K_values, surf.mean))
            persist.write_csv(os.path.join(args.out, f"sync_{tag}_stderr.csv"),
                              *persist.surface_rows(surf.h_values, surf.K_values, surf.stderr))
            region = high_sync_region(surf)
            summary["surfaces"][tag] = {**surf.manifest(), "high_sync_max_h": region,
                                        "seconds": time.perf_counter() - t1}
            print(f"{tag:32s} max h with <Sync> > 0.8: {region}   "
                  f"Sync(1,.) min {np.nanmin(surf.mean[0]):.3f}   ({time.perf_counter() - t1:.0f} s)",
                  flush=True)
    summary["seconds"] = time.perf_counter() - t0
    persist.write_json(os.path.join(args.out, "summary.json"), summary)
    print(f"total {summary['seconds']:.0f} s")


if __name__ == "__main__":
    main()
