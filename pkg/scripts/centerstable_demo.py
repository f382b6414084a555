#!/usr/bin/env python3
"""Two-block escape toy: with omnidirectional noise the contracting-block
norm U_n is pushed over the sqrt(L*chi_n) threshold and never settles back,
so the iterate cannot converge to the origin; with noise restricted to the
expanding block and started on the invariant graph, every run converges."""

import argparse

import numpy as np

from saddlelab.center_stable import (AbstractNoise, RSeriesSpec,
                                     RTildeSeriesSpec, build_system,
                                     nonconvergence_experiment,
                                     pathwise_inequality_probe,
                                     quadratic_graph, simulate_abstract)
from saddlelab.sgd import SphereUniform, StepSchedule, SubspaceRestricted


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=500)
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--level", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=9000)
    args = ap.parse_args()

    system = build_system(np.array([[1.0]]), np.array([[-1.0]]),
                          quadratic_graph(1, 1, 0.1), delta_scale=0.05)
    schedule = StepSchedule(0.5, 0.7)
    omni = AbstractNoise(SphereUniform(2, 0.2), RSeriesSpec(0.05),
                         RTildeSeriesSpec(0.05))
    expanding_axis = np.array([[1.0], [0.0]])
    restricted = AbstractNoise(
        SubspaceRestricted(SphereUniform(1, 0.2), expanding_axis))

    for label, noise in [("omnidirectional", omni), ("restricted", restricted)]:
        stats = nonconvergence_experiment(system, schedule, noise, args.steps,
                                          10, args.level, args.runs, args.seed,
                                          eps_converge=0.05)
        print(f"{label:16s} y->0: {stats.fraction_y_to_zero:.3f}  "
              f"tau finite: {stats.fraction_tau_finite:.3f}  "
              f"held after tau: {stats.fraction_held_after_tau:.3f}")

    run = simulate_abstract(system, schedule, omni, args.steps, 10, args.level,
                            seed=args.seed)
    probe = pathwise_inequality_probe(run)
    print(f"pathwise probe over {probe.n_steps} steps: "
          f"{probe.increment_violations} increment violations, "
          f"{probe.a_bound_violations} bound violations, "
          f"fitted C = {probe.fitted_c:.3g}")


if __name__ == "__main__":
    main()
