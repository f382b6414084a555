#!/usr/bin/env python3
"""Survey the geometric condition certifiers over the whole catalog and
classify each annotated critical point."""

import argparse

from saddlelab import conditions as C
from saddlelab.functions import builtin

NAMES = ("saddle_abs", "neg_abs", "double_abs", "abs_z", "quad_min",
         "z_squared", "sqrt_kink")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--radius", type=float, default=0.1)
    ap.add_argument("--samples", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    header = (f"{'function':12s} {'sharpness':>18s} {'angle':>18s} "
              f"{'tangential-C':>18s} {'rho':>12s}  classification")
    print(header)
    print("-" * len(header))
    for name in NAMES:
        f = builtin(name)
        m, x = f.manifold, f.critical_point
        sharp = C.estimate_sharpness(f, m, x, args.radius, args.samples, args.seed)
        angle = C.estimate_angle_beta(f, m, x, args.radius, args.samples, args.seed)
        verd = C.estimate_verdier_constant(f, m, x, args.radius, args.samples,
                                           args.seed)
        rho = C.estimate_weak_convexity_rho(f, [-1.0] * f.dim, [1.0] * f.dim,
                                            [0.5, 1.0, 2.0], 400, args.seed)
        try:
            label = C.classify_critical_point(f, m, x, args.radius,
                                              seed=args.seed)
        except Exception as exc:  # sqrt_kink generators blow up at the kink
            label = f"({type(exc).__name__})"
        print(f"{name:12s} {sharp.estimate:10.4f}/{sharp.verdict:>7s} "
              f"{angle.estimate:+10.4f}/{angle.verdict:>7s} "
              f"{verd.estimate:10.4f}/{verd.verdict:>7s} "
              f"{str(rho.estimate):>12s}  {label}")


if __name__ == "__main__":
    main()
