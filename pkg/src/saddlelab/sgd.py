"""The stochastic subgradient recursion, noise models and escape experiments.

Iterates follow x_{n+1} = x_n - gamma_n v_n + gamma_n eta_{n+1} with
v_n a selected subgradient, gamma_n = c/n^alpha and eta zero-mean noise.
Every run is a pure function of (config, seed); Monte Carlo experiments fan
runs out over threads with per-run seeds, so results are independent of the
worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DivergentChi
from .functions import (PiecewiseSmoothFunction, QuadAbsFunction,
                        SELECTION_RULES)
from .geometry import AffineManifold, Manifold, manifold_distance


# -- step schedules -----------------------------------------------------------


@dataclass(frozen=True)
class StepSchedule:
    """gamma_n = c / n^alpha with alpha in (1/2, 1]."""

    c: float
    alpha: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("step constant c must be positive")
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError("step exponent alpha must lie in (0.5, 1] so that "
                             "steps are square-summable but not summable")

    def gamma(self, n: int) -> float:
        if n < 1:
            raise ValueError("step index starts at 1")
        return self.c / float(n) ** self.alpha

    def gamma_array(self, n_steps: int) -> np.ndarray:
        return self.c / np.arange(1, n_steps + 1, dtype=float) ** self.alpha

    def chi(self, n: int) -> float:
        return chi_tail(self.c, self.alpha, n)

    def chi_array(self, n_max: int) -> np.ndarray:
        """chi_n for n = 1..n_max as one suffix pass anchored at chi_{n_max+1}."""
        g2 = self.gamma_array(n_max) ** 2
        out = np.empty(n_max)
        anchor = chi_tail(self.c, self.alpha, n_max + 1)
        out[-1] = g2[-1] + anchor
        for i in range(n_max - 2, -1, -1):
            out[i] = g2[i] + out[i + 1]
        return out


def chi_tail(c: float, alpha: float, n: int, extra_terms: int = 100_000) -> float:
    """Tail sum of squared steps, sum_{i>=n} (c/i^alpha)^2, to ~1e-9 relative.

    Sums explicitly out to n + extra_terms, then adds the Euler-Maclaurin
    midpoint tail, accurate to O(K^(-2*alpha-1)).
    """
    if alpha <= 0.5:
        raise DivergentChi("tail sum of squared steps diverges for alpha <= 1/2")
    if n < 1:
        raise ValueError("step index starts at 1")
    s = 2.0 * alpha
    k_max = n + extra_terms
    i = np.arange(n, k_max + 1, dtype=float)
    head = float(np.sum(i ** (-s)))
    tail = (k_max + 0.5) ** (1.0 - s) / (s - 1.0)
    return c * c * (head + tail)


# -- noise models --------------------------------------------------------------


@dataclass(frozen=True)
class ZeroNoise:
    dim: int

    scale: float = field(default=0.0, init=False)

    @property
    def fourth_moment_bound(self) -> float:
        return 0.0

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        if n is None:
            return np.zeros(self.dim)
        return np.zeros((n, self.dim))


@dataclass(frozen=True)
class SphereUniform:
    """Uniform on the sphere of radius sigma: ||eta|| = sigma exactly."""

    dim: int
    sigma: float

    @property
    def scale(self) -> float:
        return self.sigma

    @property
    def fourth_moment_bound(self) -> float:
        return self.sigma ** 4

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        size = (1 if n is None else n, self.dim)
        g = rng.standard_normal(size)
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        g *= self.sigma
        return g[0] if n is None else g


@dataclass(frozen=True)
class TruncGaussian:
    """N(0, sigma^2 I) conditioned on ||eta|| <= bound (resampled)."""

    dim: int
    sigma: float
    bound: float

    @property
    def scale(self) -> float:
        return self.sigma

    @property
    def fourth_moment_bound(self) -> float:
        return min(self.bound ** 4, self.dim * (self.dim + 2) * self.sigma ** 4)

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        count = 1 if n is None else n
        out = self.sigma * rng.standard_normal((count, self.dim))
        bad = np.linalg.norm(out, axis=1) > self.bound
        while np.any(bad):
            out[bad] = self.sigma * rng.standard_normal((int(bad.sum()), self.dim))
            bad = np.linalg.norm(out, axis=1) > self.bound
        return out[0] if n is None else out


@dataclass(frozen=True)
class Rademacher:
    """Independent +/- sigma signs per coordinate."""

    dim: int
    sigma: float

    @property
    def scale(self) -> float:
        return self.sigma

    @property
    def fourth_moment_bound(self) -> float:
        return (self.dim * self.sigma ** 2) ** 2

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        size = (1 if n is None else n, self.dim)
        out = self.sigma * (2.0 * rng.integers(0, 2, size=size) - 1.0)
        return out[0] if n is None else out


@dataclass(frozen=True)
class SubspaceRestricted:
    """Draws from `inner` mapped into span(basis); exactly zero elsewhere."""

    inner: "NoiseModel"
    basis: np.ndarray

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if basis.shape[1] != self.inner.dim:
            raise ValueError("inner noise dimension must match basis columns")
        gram = basis.T @ basis
        if np.max(np.abs(gram - np.eye(basis.shape[1]))) > 1e-12:
            raise ValueError("restriction basis columns must be orthonormal")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def scale(self) -> float:
        return self.inner.scale

    @property
    def fourth_moment_bound(self) -> float:
        return self.inner.fourth_moment_bound

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        xi = self.inner.sample(rng, 1 if n is None else n)
        out = xi @ self.basis.T
        return out[0] if n is None else out


NoiseModel = ZeroNoise | SphereUniform | TruncGaussian | Rademacher | SubspaceRestricted


def sample_noise(model: NoiseModel, rng: np.random.Generator,
                 n: int | None = None) -> np.ndarray:
    """Draw from a noise model (vector, or an (n, d) block)."""
    return model.sample(rng, n)


def minus_component_norms(draws: np.ndarray, e_minus_basis: np.ndarray) -> np.ndarray:
    """||projection onto span(e_minus_basis)|| per draw."""
    b = np.atleast_2d(np.asarray(e_minus_basis, dtype=float))
    return np.linalg.norm(np.atleast_2d(draws) @ b, axis=1)


# -- configuration and trajectories -------------------------------------------


@dataclass(frozen=True)
class SGDConfig:
    f: PiecewiseSmoothFunction
    manifold: Manifold
    x_star: np.ndarray
    x0: np.ndarray
    schedule: StepSchedule
    noise: NoiseModel
    selection: str
    horizon: int
    radius: float
    master_seed: int

    def __post_init__(self):
        object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.radius <= 0:
            raise ValueError("neighborhood radius must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.selection not in SELECTION_RULES:
            raise ValueError(f"unknown selection rule {self.selection!r}")
        if self.noise.dim != self.f.dim:
            raise ValueError("noise dimension must match the function dimension")
        if self.x0.shape != (self.f.dim,) or self.x_star.shape != (self.f.dim,):
            raise ValueError("x0 and x_star must match the function dimension")


@dataclass(frozen=True)
class Trajectory:
    """Recorded run: the recursion is bit-for-bit reconstructable from
    x[n+1] = x[n] - gamma[n] * v[n] + gamma[n] * eta[n]."""

    x: np.ndarray          # (T+1, d)
    v: np.ndarray          # (T, d)
    eta: np.ndarray        # (T, d)
    gamma: np.ndarray      # (T,), gamma[n] = c/(n+1)^alpha
    f_values: np.ndarray   # (T+1,)
    dist_m: np.ndarray     # (T+1,), NaN while outside B(x_star, radius)
    exit_index: int | None
    diverged_at: int | None
    seed: int
    config: SGDConfig

    @property
    def length(self) -> int:
        return self.x.shape[0] - 1

    def z_norms_stopped(self, total_len: int | None = None) -> np.ndarray:
        """Distance-to-manifold series with the stopped convention: the
        series freezes to zero from the first exit onward."""
        cutoff = self.exit_index if self.exit_index is not None else self.x.shape[0]
        n = self.x.shape[0] if total_len is None else total_len
        out = np.zeros(n)
        upto = min(cutoff, n)
        out[:upto] = self.dist_m[:upto]
        return out


def _derive_streams(seed: int):
    noise_ss, sel_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(noise_ss), np.random.default_rng(sel_ss)


_RULE_CODES = {"active_piece": _kernels.RULE_ACTIVE_PIECE,
               "min_norm": _kernels.RULE_MIN_NORM,
               "random_vertex": _kernels.RULE_RANDOM_VERTEX}


def run_sgd(config: SGDConfig, seed: int | None = None) -> Trajectory:
    """One run of the subgradient recursion; deterministic given (config, seed)."""
    if seed is None:
        seed = config.master_seed
    noise_rng, sel_rng = _derive_streams(seed)
    n_steps = config.horizon
    gammas = config.schedule.gamma_array(n_steps)
    eta = config.noise.sample(noise_rng, n_steps)

    fast = isinstance(config.f, QuadAbsFunction) and isinstance(
        config.manifold, AffineManifold)
    if fast:
        f = config.f
        m_tail = f.tail.size
        if config.selection == "random_vertex":
            signs = 2.0 * sel_rng.integers(0, 2, size=(n_steps, m_tail)) - 1.0
        else:
            signs = np.ones((n_steps, max(m_tail, 1)))
        xs, vs, fvals, dists, exit_idx, diverged, steps = _kernels.quad_abs_sgd(
            config.x0.copy(), f.head, f.tail, f.boundary_tolerance,
            _RULE_CODES[config.selection], gammas, eta, signs,
            config.x_star, config.radius, config.manifold.base_point,
            config.manifold.basis)
    else:
        xs, vs, fvals, dists, exit_idx, diverged, steps = _python_sgd(
            config, gammas, eta, sel_rng)

    t = steps
    return Trajectory(
        x=xs[:t + 1], v=vs[:t], eta=eta[:t], gamma=gammas[:t],
        f_values=fvals[:t + 1], dist_m=dists[:t + 1],
        exit_index=None if exit_idx < 0 else int(exit_idx),
        diverged_at=None if diverged < 0 else int(diverged),
        seed=seed, config=config)


def _python_sgd(config: SGDConfig, gammas: np.ndarray, eta: np.ndarray,
                sel_rng: np.random.Generator):
    """Reference loop for functions/manifolds without a compiled kernel."""
    f, manifold = config.f, config.manifold
    n_steps = gammas.shape[0]
    d = f.dim
    xs = np.empty((n_steps + 1, d))
    vs = np.empty((n_steps, d))
    fvals = np.empty(n_steps + 1)
    dists = np.empty(n_steps + 1)
    x = config.x0.copy()
    xs[0] = x
    exit_idx = -1
    diverged = -1
    steps = 0

    def record(n, x):
        fvals[n] = f.value(x)
        if np.linalg.norm(x - config.x_star) <= config.radius:
            dists[n] = manifold_distance(manifold, x)
            return True
        dists[n] = np.nan
        return False

    inside = record(0, x)
    if not inside:
        exit_idx = 0
    for n in range(n_steps):
        v = f.select_subgradient(x, config.selection, sel_rng)
        vs[n] = v
        g = gammas[n]
        x = x - g * v + g * eta[n]
        xs[n + 1] = x
        steps = n + 1
        if not np.all(np.isfinite(x)):
            diverged = n + 1
            fvals[n + 1] = np.nan
            dists[n + 1] = np.nan
            break
        inside = record(n + 1, x)
        if exit_idx < 0 and not inside:
            exit_idx = n + 1
    return xs, vs, fvals, dists, exit_idx, diverged, steps


# -- Monte Carlo ---------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    run_index: int
    seed: int
    final_f: float
    final_dist_to_xstar: float
    exit_index: int | None
    last_decile_dist: float
    classification: str
    diverged: bool


@dataclass(frozen=True)
class EscapeStats:
    n_runs: int
    fraction_escaped: float
    fraction_at_saddle: float
    fraction_at_other_critical: float
    mean_final_f: float
    epsilon_saddle: float
    master_seed: int
    runs: tuple


def default_epsilon_saddle(config: SGDConfig) -> float:
    """One-step scale at the horizon: 2 * gamma_N * (L + sigma)."""
    lip = config.f.lipschitz_bound_on(config.x_star, config.radius)
    return 2.0 * config.schedule.gamma(config.horizon) * (lip + config.noise.scale)


def _summarize_run(config: SGDConfig, run_index: int, eps: float) -> RunSummary:
    seed = config.master_seed + run_index
    traj = run_sgd(config, seed)
    final_dist = float(np.linalg.norm(traj.x[-1] - config.x_star))
    t = traj.length
    tail = traj.dist_m[max(0, (9 * (t + 1)) // 10):]
    last_decile = float(np.mean(tail))
    if traj.diverged_at is not None or final_dist > config.radius:
        label = "escaped"
    elif final_dist <= eps and last_decile <= eps:
        label = "at_saddle"
    else:
        label = "other"
    return RunSummary(run_index, seed, float(traj.f_values[-1]), final_dist,
                      traj.exit_index, last_decile, label,
                      traj.diverged_at is not None)


def monte_carlo(config: SGDConfig, n_runs: int, workers: int = 1,
                epsilon_saddle: float | None = None) -> EscapeStats:
    """Run n_runs independent trajectories (seeds master_seed + i) and
    classify each at the horizon. Aggregation is order-independent, so the
    result does not depend on the worker count."""
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    eps = default_epsilon_saddle(config) if epsilon_saddle is None else epsilon_saddle
    indices = range(n_runs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(
                lambda i: _summarize_run(config, i, eps), indices))
    else:
        summaries = [_summarize_run(config, i, eps) for i in indices]
    summaries.sort(key=lambda s: s.run_index)
    n = float(n_runs)
    counts = {"escaped": 0, "at_saddle": 0, "other": 0}
    for s in summaries:
        counts[s.classification] += 1
    finite_f = [s.final_f for s in summaries if np.isfinite(s.final_f)]
    return EscapeStats(
        n_runs=n_runs,
        fraction_escaped=counts["escaped"] / n,
        fraction_at_saddle=counts["at_saddle"] / n,
        fraction_at_other_critical=counts["other"] / n,
        mean_final_f=float(np.mean(finite_f)) if finite_f else float("nan"),
        epsilon_saddle=eps,
        master_seed=config.master_seed,
        runs=tuple(summaries))


# -- ensembles for the rate/tail diagnostics -----------------------------------


@dataclass(frozen=True)
class Ensemble:
    """Stacked stopped distance-to-manifold series, one row per run."""

    z_norms: np.ndarray            # (n_runs, horizon+1)
    schedule: StepSchedule
    master_seed: int

    @property
    def horizon(self) -> int:
        return self.z_norms.shape[1] - 1

    def mean_z(self) -> np.ndarray:
        return self.z_norms.mean(axis=0)


def run_ensemble(config: SGDConfig, n_runs: int, workers: int = 1) -> Ensemble:
    """Stopped z-series for n_runs trajectories (seeds master_seed + i)."""
    total = config.horizon + 1

    def one(i: int) -> np.ndarray:
        return run_sgd(config, config.master_seed + i).z_norms_stopped(total)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(n_runs)))
    else:
        rows = [one(i) for i in range(n_runs)]
    return Ensemble(np.vstack(rows), config.schedule, config.master_seed)


def constant_ensemble(value: float, horizon: int, schedule: StepSchedule,
                      n_runs: int = 1) -> Ensemble:
    """Artificial ensemble with ||z_n|| identically equal to `value`."""
    return Ensemble(np.full((n_runs, horizon + 1), float(value)), schedule, 0)
