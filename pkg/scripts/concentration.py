"""Spread of the radius-1 neighbourhood average of a path functional under
noise-only resampling, for n and 4n."""
import argparse

from sparsediff.hydrodynamics import GraphModel, PathFunctional, concentration_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[250, 1000])
    ap.add_argument("--m", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mode", choices=("noise", "all"), default="noise")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    h = PathFunctional((3,), (1.0,), (0.0,), "tanh(theta_T)")
    res = concentration_scan(GraphModel(), args.sizes, args.m, h, r=1, seed=args.seed,
                             mode=args.mode, workers=args.workers)
    for a in res:
        print(f"n={a.n:<6d} std={a.std:.5f}  95% CI [{a.ci[0]:.5f}, {a.ci[1]:.5f}]")
    for a, b in zip(res, res[1:]):
        print(f"ratio std({a.n})/std({b.n}) = {a.std / b.std:.3f}")


if __name__ == "__main__":
    main()
