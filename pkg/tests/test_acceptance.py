"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; the heavy Monte Carlo criteria use fixed seeds throughout.
"""

import time

import numpy as np
import pytest

from saddlelab import conditions as C
from saddlelab import dynamics as D
from saddlelab.center_stable import (AbstractNoise, RSeriesSpec,
                                     RTildeSeriesSpec, build_system,
                                     lyapunov_solve,
                                     nonconvergence_experiment,
                                     pathwise_inequality_probe,
                                     quadratic_graph, simulate_abstract)
from saddlelab.cli import main as cli_main
from saddlelab.errors import InvalidExponent
from saddlelab.functions import builtin
from saddlelab.geometry import riem_gradient, riem_hessian
from saddlelab.sgd import (SGDConfig, SphereUniform, StepSchedule,
                           SubspaceRestricted, constant_ensemble, monte_carlo,
                           run_ensemble, run_sgd)

FLAT_AXIS = np.array([[0.0], [1.0]])          # the |z| direction of saddle_abs
EXPANDING_AXIS = np.array([[1.0], [0.0]])     # the w+ block of the toy


def _report(num, text):
    print(f"ACCEPTANCE {num:02d} PASS: {text}")


@pytest.fixture(scope="module", autouse=True)
def warmup():
    """Compile the kernels so the timed criteria measure steady state."""
    f = builtin("saddle_abs")
    cfg = SGDConfig(f=f, manifold=f.manifold, x_star=np.zeros(2),
                    x0=np.array([0.0, 0.1]), schedule=StepSchedule(0.05, 0.7),
                    noise=SphereUniform(2, 0.5), selection="active_piece",
                    horizon=10, radius=0.5, master_seed=0)
    run_sgd(cfg)
    system = build_system(np.array([[1.0]]), np.array([[-1.0]]),
                          quadratic_graph(1, 1, 0.1), delta_scale=0.05)
    simulate_abstract(system, StepSchedule(0.5, 0.7),
                      AbstractNoise(SphereUniform(2, 0.3)), 10, 1, 0.01, seed=0)


@pytest.fixture(scope="module")
def stable_ensemble():
    """100 fixed seeds, horizon 1e5, on the sharp-minimum function: the
    normal part decays toward the shrinking noise floor."""
    f = builtin("quad_min")
    cfg = SGDConfig(f=f, manifold=f.manifold, x_star=np.zeros(2),
                    x0=np.array([0.05, 0.05]), schedule=StepSchedule(0.05, 0.7),
                    noise=SphereUniform(2, 0.5), selection="active_piece",
                    horizon=100_000, radius=0.3, master_seed=2024)
    return run_ensemble(cfg, 100, workers=8)


def test_criterion_01_clarke_oracle_exact():
    f = builtin("saddle_abs")
    x = np.array([0.5, 0.0])
    # warm call, then time the oracle
    f.clarke_generators(x)
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        gens = f.clarke_generators(x).generators
        mn = f.min_norm_subgradient(x)
        mn0 = f.min_norm_subgradient(np.zeros(2))
        best = min(best, time.perf_counter() - t0)
    assert gens.tolist() == [[-1.0, 1.0], [-1.0, -1.0]]
    assert np.allclose(mn, [-1.0, 0.0], atol=0)
    assert np.linalg.norm(mn0) == 0.0
    assert best < 1e-3
    _report(1, f"generators and min-norm exact, {best * 1e6:.0f} us")


def test_criterion_02_riemannian_calculus():
    f = builtin("saddle_abs")
    t0 = time.perf_counter()
    grad = riem_gradient(f.representative, f.manifold, np.array([0.5, 0.0]))
    hess = riem_hessian(f.representative, f.manifold, np.zeros(2))
    elapsed = time.perf_counter() - t0
    assert np.max(np.abs(grad - [-1.0, 0.0])) <= 1e-8
    assert abs(hess[0, 0] - (-2.0)) <= 1e-4
    assert elapsed < 10e-3
    _report(2, f"gradient (-1,0), Hessian [[-2]], {elapsed * 1e3:.2f} ms")


def test_criterion_03_condition_certifiers():
    # hand values: angle ratio for -y^2+|z| is <(-2y, s), (0,z)>/|z| = 1;
    # for -y^2-|z| it is -1; the tangential deviation is
    # 2|x_1 - y_1|/||x-y|| with supremum 2; the min-norm distance off the
    # axis is sqrt(4y^2+1) >= 1.
    saddle = builtin("saddle_abs")
    neg = builtin("neg_abs")
    timings = {}

    t0 = time.perf_counter()
    beta_s = C.estimate_angle_beta(saddle, saddle.manifold, np.zeros(2), 0.1,
                                   10_000, seed=101)
    timings["angle+"] = time.perf_counter() - t0
    assert beta_s.verdict == C.HOLDS
    assert 0.999 <= beta_s.estimate <= 1.0

    t0 = time.perf_counter()
    beta_n = C.estimate_angle_beta(neg, neg.manifold, np.zeros(2), 0.1,
                                   10_000, seed=101)
    timings["angle-"] = time.perf_counter() - t0
    assert beta_n.verdict == C.FAILS
    assert beta_n.estimate <= -0.999

    t0 = time.perf_counter()
    verd = C.estimate_verdier_constant(saddle, saddle.manifold, np.zeros(2),
                                       0.1, 10_000, seed=101)
    timings["verdier"] = time.perf_counter() - t0
    assert 1.9 <= verd.estimate <= 2.0

    t0 = time.perf_counter()
    sharp = C.estimate_sharpness(saddle, saddle.manifold, np.zeros(2), 0.1,
                                 10_000, seed=101)
    timings["sharpness"] = time.perf_counter() - t0
    assert 0.999 <= sharp.estimate <= 1.05

    assert all(dt < 1.0 for dt in timings.values()), timings
    _report(3, f"beta {beta_s.estimate:.4f}/{beta_n.estimate:.4f}, "
               f"C {verd.estimate:.3f}, sharpness {sharp.estimate:.4f}; "
               f"max {max(timings.values()):.2f} s")


def test_criterion_04_weak_convexity_chain():
    t0 = time.perf_counter()
    grid = [0.5, 1.0, 2.0]
    saddle = builtin("saddle_abs")
    rho_s = C.estimate_weak_convexity_rho(saddle, [-1, -1], [1, 1], grid,
                                          400, seed=7)
    assert rho_s.verdict == C.HOLDS and rho_s.estimate == 1.0

    dbl = builtin("double_abs")
    rho_d = C.estimate_weak_convexity_rho(dbl, [-1, -1], [1, 1], grid,
                                          400, seed=7)
    assert rho_d.verdict == C.FAILS

    checked = []
    for name in ("saddle_abs", "neg_abs", "double_abs", "abs_z", "quad_min"):
        f = builtin(name)
        wc = C.estimate_weak_convexity_rho(f, [-1] * f.dim, [1] * f.dim, grid,
                                           400, seed=7)
        if wc.verdict != C.HOLDS:
            continue
        label = C.classify_critical_point(f, f.manifold, f.critical_point,
                                          0.1, seed=7)
        if label != C.ACTIVE_STRICT_SADDLE:
            continue
        angle = C.estimate_angle_beta(f, f.manifold, f.critical_point, 0.1,
                                      4000, seed=7)
        assert angle.verdict == C.HOLDS, name
        checked.append(name)
    elapsed = time.perf_counter() - t0
    assert "saddle_abs" in checked
    assert elapsed < 5.0
    _report(4, f"rho(saddle_abs)=1, double_abs fails, angle holds at "
               f"{checked}; {elapsed:.2f} s")


def test_criterion_05_classifier():
    expected = {"saddle_abs": C.ACTIVE_STRICT_SADDLE,
                "double_abs": C.SHARPLY_REPULSIVE,
                "quad_min": C.LOCAL_MIN_CANDIDATE}
    for name, want in expected.items():
        f = builtin(name)
        first = C.classify_critical_point(f, f.manifold, f.critical_point,
                                          0.1, seed=42)
        second = C.classify_critical_point(f, f.manifold, f.critical_point,
                                           0.1, seed=42)
        assert first == want, name
        assert first == second
    _report(5, "saddle/repulsive/minimum labels, deterministic at seed 42")


def test_criterion_06_escape_contrast():
    t0 = time.perf_counter()
    f = builtin("saddle_abs")
    base = dict(f=f, manifold=f.manifold, x_star=np.zeros(2),
                x0=np.array([0.0, 0.3]), schedule=StepSchedule(0.05, 0.7),
                selection="active_piece", horizon=100_000, radius=0.5,
                master_seed=0)
    omni = monte_carlo(SGDConfig(noise=SphereUniform(2, 0.5), **base),
                       200, workers=8)
    restricted = monte_carlo(
        SGDConfig(noise=SubspaceRestricted(SphereUniform(1, 0.5), FLAT_AXIS),
                  **base), 200, workers=8)
    elapsed = time.perf_counter() - t0
    diff = omni.fraction_escaped - restricted.fraction_escaped
    assert diff >= 0.9
    # no force ever acts along the unstable axis, so staying is exact
    assert restricted.fraction_at_saddle == 1.0
    assert elapsed < 120.0
    _report(6, f"escape fractions {omni.fraction_escaped:.3f} vs "
               f"{restricted.fraction_escaped:.3f}; {elapsed:.1f} s")


def test_criterion_07_drift_inequality():
    t0 = time.perf_counter()
    f = builtin("saddle_abs")
    sigma = 0.5
    bound = 10.0 * (sigma ** 2 + 1.0)
    x_grid = [[0.0, z] for z in np.linspace(0.01, 0.1, 10)]
    report = D.drift_probe(f, f.manifold, x_grid, [1e-2, 1e-3],
                           SphereUniform(2, sigma), 10_000, seed=77,
                           beta=1.0, c_user=bound)
    elapsed = time.perf_counter() - t0
    assert report.violations == 0
    assert report.fitted_c <= bound
    assert elapsed < 30.0
    _report(7, f"0 violations, fitted C={report.fitted_c:.3f} <= {bound}; "
               f"{elapsed:.2f} s")


def test_criterion_08_rate_law(stable_ensemble):
    series = D.rate_diagnostic(stable_ensemble, 0.2, [1000, 10_000, 100_000])
    ratio = series.values[-1] / series.values[0]
    assert ratio <= 0.2
    with pytest.raises(InvalidExponent):
        D.rate_diagnostic(stable_ensemble, 0.5)
    _report(8, f"scaled z^2 ratio {ratio:.4f} <= 0.2, a=0.5 rejected")


def test_criterion_09_weighted_tails(stable_ensemble):
    series = D.weighted_tail_diagnostic(stable_ensemble, [1000, 10_000, 50_000])
    assert series.decreasing
    control = D.weighted_tail_diagnostic(
        constant_ensemble(1.0, 10 ** 6, stable_ensemble.schedule),
        [1000, 10_000, 50_000])
    assert np.all(np.diff(control.values) > 0)
    _report(9, f"tail series {np.round(series.values, 5).tolist()} "
               f"decreasing; constant control increasing")


def test_criterion_10_residual_split():
    f = builtin("separable", a=[-1.0, 2.0], b=[0.5, 0.5])
    cfg = SGDConfig(f=f, manifold=f.manifold, x_star=np.zeros(4),
                    x0=np.array([0.02, 0.0, 0.05, 0.03]),
                    schedule=StepSchedule(0.05, 0.7),
                    noise=SphereUniform(4, 0.5), selection="active_piece",
                    horizon=2000, radius=0.3, master_seed=5)
    traj = run_sgd(cfg)
    dec = D.decompose(traj)
    drift = D.projected_drift(f.representative, f.manifold, cfg.x_star,
                              cfg.radius)
    res = D.robbins_monro_residuals(dec, drift)
    assert res.reconstruction_error() <= 1e-12
    assert res.c_rho == 0.0
    verd = C.estimate_verdier_constant(f, f.manifold, np.zeros(4), 0.3,
                                       4000, seed=2)
    assert res.c_rho_tilde <= verd.estimate + 0.1

    saddle = builtin("saddle_abs")
    cfg2 = SGDConfig(f=saddle, manifold=saddle.manifold, x_star=np.zeros(2),
                     x0=np.array([0.0, 0.05]), schedule=StepSchedule(0.05, 0.7),
                     noise=SphereUniform(2, 0.5), selection="active_piece",
                     horizon=2000, radius=0.3, master_seed=6)
    res2 = D.robbins_monro_residuals(
        D.decompose(run_sgd(cfg2)),
        D.projected_drift(saddle.representative, saddle.manifold,
                          np.zeros(2), 0.3))
    assert res2.reconstruction_error() <= 1e-12
    assert res2.c_rho == 0.0
    _report(10, f"reconstruction exact, C_rho=0, C_rho_tilde="
                f"{res.c_rho_tilde:.2e} <= {verd.estimate:.3f}+0.1")


def test_criterion_11_lyapunov_certificates():
    hand = lyapunov_solve(np.array([[-1.0, 1.0], [0.0, -1.0]]))
    assert np.max(np.abs(hand.q - [[1.0, 0.5], [0.5, 1.5]])) <= 1e-12
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 6))
        a = rng.normal(size=(d, d))
        shift = max(np.linalg.eigvals(a).real.max(), 0.0)
        cert = lyapunov_solve(a - (shift + 0.5 + rng.random()) * np.eye(d))
        worst = max(worst, cert.residual)
        assert cert.residual <= 1e-10
        assert cert.lambda_min > 0
    _report(11, f"hand case exact, 100 random certificates, worst residual "
                f"{worst:.2e}")


def test_criterion_12_center_stable_toy():
    system = build_system(np.array([[1.0]]), np.array([[-1.0]]),
                          quadratic_graph(1, 1, 0.1), delta_scale=0.05)
    schedule = StepSchedule(0.5, 0.7)
    omni_noise = AbstractNoise(SphereUniform(2, 0.2), RSeriesSpec(0.05),
                               RTildeSeriesSpec(0.05))
    restricted_noise = AbstractNoise(
        SubspaceRestricted(SphereUniform(1, 0.2), EXPANDING_AXIS))

    omni = nonconvergence_experiment(system, schedule, omni_noise, 10_000,
                                     10, 0.01, 500, 9000, eps_converge=0.05)
    assert omni.fraction_y_to_zero == 0.0

    restricted = nonconvergence_experiment(system, schedule, restricted_noise,
                                           10_000, 10, 0.01, 500, 9000,
                                           eps_converge=0.05)
    assert restricted.fraction_y_to_zero == 1.0

    run = simulate_abstract(system, schedule, omni_noise, 100_000, 10, 0.01,
                            seed=424242)
    probe = pathwise_inequality_probe(run)
    assert probe.standing_assumption_ok
    assert probe.increment_violations == 0
    assert probe.a_bound_violations == 0
    _report(12, f"0/500 converge with omnidirectional noise, 500/500 with "
                f"restricted; probes clean over {probe.n_steps} steps")


def test_criterion_13_apt_demo():
    closed_form = 1.0 + 1.0 / 100.0 - 1.0 / 101.0
    gap = C.apt_gap(1.0, 99.0)
    assert abs(gap - closed_form) <= 1e-9
    far = C.apt_gap(1.0, 1e4)
    assert far >= 1.0 - 0.01
    _report(13, f"gap(1, 99)={gap:.9f}, gap(1, 1e4)={far:.6f} >= T - 0.01")


def test_criterion_14_byte_identical_outputs(tmp_path):
    base = """
function.name = saddle_abs
schedule.c = 0.05
schedule.alpha = 0.7
noise.kind = sphere
noise.sigma = 0.5
sgd.x0 = 0, 0.3
sgd.x_star = 0, 0
sgd.horizon = 500
sgd.radius = 0.5
sgd.seed = 99
sgd.selection = active_piece
mc.runs = 10
"""
    cs = """
schedule.c = 0.5
schedule.alpha = 0.7
cs.j_plus = 1
cs.j_minus = -1
cs.g_coeff = 0.1
cs.delta_scale = 0.05
cs.steps = 500
cs.tau_start = 10
cs.level = 0.01
cs.runs = 5
cs.seed = 31
cs.e_kind = sphere
cs.e_sigma = 0.3
cs.r_scale = 0.05
cs.rt_scale = 0.05
"""

    def emit(tag, text, extra):
        out = tmp_path / tag
        cfg = tmp_path / f"{tag}.cfg"
        cfg.write_text(text + f"out.dir = {out}\n")
        sub = "centerstable" if text is cs else None
        args = extra + ["-c", str(cfg)]
        assert cli_main(args) == 0
        return out

    runs = {}
    for tag, workers in (("a", "1"), ("b", "4")):
        out = emit(f"mc_{tag}", base, ["mc", "--workers", workers])
        runs[tag] = {name: (out / name).read_bytes()
                     for name in ("mc_summary.json", "mc_runs.csv")}
    assert runs["a"] == runs["b"]

    t1 = emit("run1", base, ["run"])
    t2 = emit("run2", base, ["run"])
    assert (t1 / "trajectory.csv").read_bytes() == (
        t2 / "trajectory.csv").read_bytes()

    c1 = emit("cs1", cs, ["centerstable"])
    c2 = emit("cs2", cs, ["centerstable"])
    for name in ("centerstable_summary.json", "centerstable_run_0.csv"):
        assert (c1 / name).read_bytes() == (c2 / name).read_bytes()
    _report(14, "CSV/JSON bytes identical across reruns and worker counts")
