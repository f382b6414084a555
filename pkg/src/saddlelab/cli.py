"""Command-line front end: experiment orchestration and bit-stable outputs.

Every output file embeds the tool version, a hash of the canonical config
text and the master seed. Numbers are serialized with 17 significant digits,
so identical configs and seeds reproduce byte-identical files regardless of
the worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, center_stable, conditions, dynamics
from .config import (ExperimentConfig, build_abstract_noise,
                     build_constructed_system, build_function, build_manifold,
                     build_schedule, build_sgd_config, load_config)
from .errors import ConfigError, SaddleLabError
from .sgd import monte_carlo, run_ensemble, run_sgd

SUBCOMMANDS = ("run", "mc", "conditions", "drift", "rates", "centerstable", "apt")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _meta_lines(cfg: ExperimentConfig, seed: int) -> list[str]:
    return [f"# version={__version__}",
            f"# config_sha256={cfg.sha256()}",
            f"# seed={seed}"]


def _write_csv(path: str, cfg: ExperimentConfig, seed: int, header: list[str],
               rows) -> None:
    lines = _meta_lines(cfg, seed)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) if not isinstance(x, str) else x
                              for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _write_json(path: str, cfg: ExperimentConfig, seed: int, payload: dict
                ) -> None:
    doc = {"version": __version__, "config_sha256": cfg.sha256(),
           "seed": seed, "config": cfg.to_text()}
    doc.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(doc), fh, indent=2)
        fh.write("\n")


def _out_dir(cfg: ExperimentConfig) -> str:
    out = cfg.get("out.dir", "results")
    os.makedirs(out, exist_ok=True)
    return out


# -- subcommand handlers ---------------------------------------------------------


def _cmd_run(cfg: ExperimentConfig) -> int:
    sgd_cfg = build_sgd_config(cfg)
    traj = run_sgd(sgd_cfg)
    out = _out_dir(cfg)
    d = sgd_cfg.f.dim
    header = ["n", "gamma"] + [f"x_{i}" for i in range(d)] + ["f", "dist_M"]
    rows = []
    for n in range(traj.x.shape[0]):
        gamma_n = 0.0 if n == 0 else traj.gamma[n - 1]
        rows.append([n, gamma_n, *traj.x[n], traj.f_values[n], traj.dist_m[n]])
    _write_csv(os.path.join(out, "trajectory.csv"), cfg, sgd_cfg.master_seed,
               header, rows)
    return 0


def _cmd_mc(cfg: ExperimentConfig) -> int:
    sgd_cfg = build_sgd_config(cfg)
    n_runs = cfg.require("mc.runs")
    workers = cfg.get("sgd.workers", 1)
    stats = monte_carlo(sgd_cfg, n_runs, workers=workers)
    out = _out_dir(cfg)
    counts = {label: sum(1 for s in stats.runs if s.classification == label)
              for label in ("escaped", "at_saddle", "other")}
    _write_json(os.path.join(out, "mc_summary.json"), cfg, sgd_cfg.master_seed, {
        "n_runs": stats.n_runs,
        "n_escaped": counts["escaped"],
        "n_at_saddle": counts["at_saddle"],
        "n_other": counts["other"],
        "fraction_escaped": stats.fraction_escaped,
        "fraction_at_saddle": stats.fraction_at_saddle,
        "fraction_at_other_critical": stats.fraction_at_other_critical,
        "mean_final_f": stats.mean_final_f,
        "epsilon_saddle": stats.epsilon_saddle,
    })
    header = ["run", "seed", "classification", "final_f",
              "final_dist_to_xstar", "exit_index", "last_decile_dist",
              "diverged"]
    rows = [[s.run_index, s.seed, s.classification, s.final_f,
             s.final_dist_to_xstar, s.exit_index, s.last_decile_dist,
             int(s.diverged)] for s in stats.runs]
    _write_csv(os.path.join(out, "mc_runs.csv"), cfg, sgd_cfg.master_seed,
               header, rows)
    return 0


def _cmd_conditions(cfg: ExperimentConfig) -> int:
    f = build_function(cfg)
    kind = cfg.require("conditions.kind")
    seed = cfg.get("sgd.seed", 0)
    out = _out_dir(cfg)
    if kind == "weak_convexity":
        report = conditions.estimate_weak_convexity_rho(
            f, cfg.get("conditions.box_lo", [-1.0] * f.dim),
            cfg.get("conditions.box_hi", [1.0] * f.dim),
            cfg.get("conditions.rho_grid", [0.5, 1.0, 2.0]),
            cfg.get("conditions.n_segments", 400), seed)
        distances = np.linalg.norm(
            report.samples[:, :f.dim] - report.samples[:, f.dim:2 * f.dim],
            axis=1)
    else:
        manifold = build_manifold(cfg, f)
        x_star = np.asarray(cfg.get("sgd.x_star", f.critical_point), dtype=float)
        r = cfg.get("conditions.r", 0.1)
        n = cfg.get("conditions.n_samples", 10000)
        if kind == "sharpness":
            report = conditions.estimate_sharpness(f, manifold, x_star, r, n, seed)
        elif kind == "angle":
            report = conditions.estimate_angle_beta(f, manifold, x_star, r, n, seed)
        else:
            report = conditions.estimate_verdier_constant(f, manifold, x_star,
                                                          r, n, seed)
        if kind == "verdier":
            distances = report.meta["distances"]
        else:
            distances = np.linalg.norm(report.samples - x_star, axis=1)
    _write_json(os.path.join(out, f"conditions_{kind}.json"), cfg, seed, {
        "kind": report.kind, "estimate": report.estimate,
        "verdict": report.verdict, "n_samples": report.n_samples,
        "radius": report.radius, "witness": report.witness,
    })
    rows = [[i, report.ratios[i], distances[i]]
            for i in range(report.ratios.shape[0])]
    _write_csv(os.path.join(out, f"conditions_{kind}_ratios.csv"), cfg, seed,
               ["sample", "ratio", "distance"], rows)
    return 0


def _cmd_drift(cfg: ExperimentConfig) -> int:
    f = build_function(cfg)
    manifold = build_manifold(cfg, f)
    from .config import build_noise

    noise = build_noise(cfg, f.dim)
    seed = cfg.get("sgd.seed", 0)
    beta = cfg.get("drift.beta", 1.0)
    c_user = cfg.get("drift.c")
    report = dynamics.drift_probe(
        f, manifold, cfg.require("drift.x_grid"),
        cfg.get("drift.gamma_grid", [1e-2, 1e-3]),
        noise, cfg.get("drift.n_mc", 10000), seed, beta, c_user=c_user)
    out = _out_dir(cfg)
    d = f.dim
    header = [f"probe_x_{i}" for i in range(d)] + ["gamma", "lhs", "bound",
                                                   "fitted_C"]
    c_for_bound = c_user if c_user is not None else report.fitted_c
    rows = []
    for p in report.probes:
        bound = p.z_norm ** 2 - p.gamma * beta * p.z_norm + c_for_bound * p.gamma ** 2
        rows.append([*p.x, p.gamma, p.lhs, bound, p.fitted_c])
    _write_csv(os.path.join(out, "drift.csv"), cfg, seed, header, rows)
    _write_json(os.path.join(out, "drift_summary.json"), cfg, seed, {
        "beta": report.beta, "fitted_C": report.fitted_c,
        "violations": report.violations, "c_user": report.c_user,
        "n_mc": report.n_mc,
    })
    return 0


def _cmd_rates(cfg: ExperimentConfig) -> int:
    sgd_cfg = build_sgd_config(cfg)
    n_runs = cfg.get("rates.runs", 100)
    workers = cfg.get("sgd.workers", 1)
    ensemble = run_ensemble(sgd_cfg, n_runs, workers=workers)
    a = cfg.get("rates.a", 0.2)
    checkpoints = cfg.get("rates.checkpoints")
    rate = dynamics.rate_diagnostic(ensemble, a, checkpoints)
    out = _out_dir(cfg)
    _write_csv(os.path.join(out, "rates.csv"), cfg, sgd_cfg.master_seed,
               ["n", "mean_scaled_z2"],
               [[int(n), v] for n, v in zip(rate.checkpoints, rate.values)])
    payload = {"a": a, "rate_checkpoints": rate.checkpoints,
               "rate_values": rate.values, "rate_decreasing": rate.decreasing,
               "n_runs": n_runs}
    tail_grid = cfg.get("rates.tail_grid")
    if tail_grid:
        tails = dynamics.weighted_tail_diagnostic(ensemble, tail_grid)
        payload.update({"tail_grid": tails.checkpoints,
                        "tail_values": tails.values,
                        "tail_decreasing": tails.decreasing})
    _write_json(os.path.join(out, "rates_summary.json"), cfg,
                sgd_cfg.master_seed, payload)
    return 0


def _cmd_centerstable(cfg: ExperimentConfig) -> int:
    system = build_constructed_system(cfg)
    noise = build_abstract_noise(cfg, system)
    schedule = build_schedule(cfg)
    seed = cfg.get("cs.seed", 0)
    n_steps = cfg.require("cs.steps")
    tau_start = cfg.get("cs.tau_start", 1)
    level = cfg.require("cs.level")
    n_runs = cfg.get("cs.runs", 1)
    w0 = cfg.get("cs.w0")
    w0 = None if w0 is None else np.asarray(w0, dtype=float)
    stats = center_stable.nonconvergence_experiment(
        system, schedule, noise, n_steps, tau_start, level, n_runs, seed,
        w0=w0, eps_converge=cfg.get("cs.eps_converge", 1e-2))
    out = _out_dir(cfg)
    _write_json(os.path.join(out, "centerstable_summary.json"), cfg, seed, {
        "n_runs": stats.n_runs,
        "fraction_tau_finite": stats.fraction_tau_finite,
        "fraction_held_after_tau": stats.fraction_held_after_tau,
        "fraction_y_to_zero": stats.fraction_y_to_zero,
        "eps_converge": stats.eps_converge, "level": stats.level,
    })
    n_csv = min(n_runs, cfg.get("cs.write_runs", 1))
    for i in range(n_csv):
        run = center_stable.simulate_abstract(system, schedule, noise, n_steps,
                                              tau_start, level, seed + i, w0=w0)
        dm = system.d_minus
        header = (["n", "gamma", "chi", "U"]
                  + [f"w_minus_{j}" for j in range(dm)] + ["tau_flag"])
        rows = []
        for n in range(run.w.shape[0]):
            gamma_n = 0.0 if n == 0 else run.gammas[n - 1]
            chi_n = run.chi[max(n - 1, 0)]
            flag = int(run.tau is not None and n >= run.tau)
            rows.append([n, gamma_n, chi_n, run.u[n],
                         *run.w[n, system.d_plus:], flag])
        _write_csv(os.path.join(out, f"centerstable_run_{i}.csv"), cfg,
                   seed + i, header, rows)
    return 0


def _cmd_apt(args, cfg: ExperimentConfig | None) -> int:
    gap = conditions.apt_gap(args.T, args.t)
    print(_fmt(gap))
    if cfg is not None and cfg.get("out.dir"):
        _write_json(os.path.join(_out_dir(cfg), "apt.json"), cfg, 0,
                    {"T": args.T, "t": args.t, "gap": gap})
    return 0


def dispatch(subcommand: str, cfg: ExperimentConfig | None, args) -> int:
    """Run one subcommand; returns the process exit code."""
    try:
        if subcommand == "apt":
            return _cmd_apt(args, cfg)
        if cfg is None:
            print("error: this subcommand needs --config", file=sys.stderr)
            return 1
        handler = {"run": _cmd_run, "mc": _cmd_mc, "conditions": _cmd_conditions,
                   "drift": _cmd_drift, "rates": _cmd_rates,
                   "centerstable": _cmd_centerstable}[subcommand]
        return handler(cfg)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 1
    except (SaddleLabError, ValueError, TypeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _apply_overrides(cfg: ExperimentConfig, subcommand: str,
                     args) -> ExperimentConfig:
    pairs = {}
    if args.seed is not None:
        pairs["sgd.seed"] = args.seed
        pairs["cs.seed"] = args.seed
    if args.runs is not None:
        if args.runs < 1:
            raise ConfigError(["RangeError: --runs must be at least 1"])
        key = {"mc": "mc.runs", "rates": "rates.runs",
               "centerstable": "cs.runs"}.get(subcommand)
        if key:
            pairs[key] = args.runs
    if args.out is not None:
        pairs["out.dir"] = args.out
    if args.workers is not None:
        pairs["sgd.workers"] = args.workers
    if not pairs:
        return cfg
    return ExperimentConfig({**cfg.entries, **pairs})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="saddlelab",
        description="Subgradient-descent laboratory: runs, Monte Carlo escape "
                    "experiments, geometric condition certifiers and the "
                    "two-block escape toy.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("-c", "--config", help="path to a flat key-value config")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--runs", type=int, help="override the run count")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--workers", type=int, help="override the worker count")
    parser.add_argument("--T", type=float, default=1.0,
                        help="window length for the apt subcommand")
    parser.add_argument("--t", type=float, default=99.0,
                        help="start time for the apt subcommand")
    args = parser.parse_args(argv)

    cfg = None
    if args.config is not None:
        try:
            cfg = load_config(args.config)
            cfg = _apply_overrides(cfg, args.subcommand, args)
        except ConfigError as exc:
            for err in exc.errors:
                print(f"config error: {err}", file=sys.stderr)
            return 1
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    elif args.subcommand != "apt":
        print("error: --config is required for this subcommand", file=sys.stderr)
        return 1
    return dispatch(args.subcommand, cfg, args)


if __name__ == "__main__":
    sys.exit(main())
