"""Executable toy for the center-stable escape machinery.

A two-block linear system (expanding block J+, contracting block J-) is
augmented with a prescribed polynomial graph map G and a small perturbation
Delta, so the invariant set {y_minus = G(y_plus)} is known in closed form.
The abstract recursion drives the off-manifold block
    w-_{n+1} = w-_n + gamma_n (-J- + Delta(w_n)) w-_n + gamma_n (e + r + rt)
and the repulsion witness U_n = ||w-_n||_Q for the Lyapunov norm Q.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (InvalidManifoldSpec, NearDefective, NoNegativeEigenvalue,
                     SingularSystem, SpectralGapError)
from .sgd import NoiseModel, StepSchedule


# -- spectral split -------------------------------------------------------------


@dataclass(frozen=True)
class SpectralSplit:
    p: np.ndarray              # d x d change of basis
    j_plus: np.ndarray         # d+ x d+
    j_minus: np.ndarray        # d- x d-
    e_minus_basis: np.ndarray  # d x d-, orthonormal

    @property
    def d_plus(self) -> int:
        return self.j_plus.shape[0]

    @property
    def d_minus(self) -> int:
        return self.j_minus.shape[0]


def spectral_split(j: np.ndarray, tol_gap: float = 1e-8) -> SpectralSplit:
    """Split J into blocks for eigenvalues with nonnegative versus negative
    real part, in a real basis of the corresponding invariant subspaces.

    Requires a diagonalizable J with no eigenvalue real part inside
    (-tol_gap, 0) and at least one below -tol_gap.
    """
    j = np.asarray(j, dtype=float)
    eigvals, eigvecs = np.linalg.eig(j)
    if np.linalg.cond(eigvecs) > 1e8:
        raise NearDefective("eigenvector matrix condition number exceeds 1e8")
    re = eigvals.real
    if np.any((re > -tol_gap) & (re < 0.0)):
        raise SpectralGapError("eigenvalue real part inside the gap (-tol_gap, 0)")
    minus = re < -tol_gap
    if not np.any(minus):
        raise NoNegativeEigenvalue("no eigenvalue with real part below -tol_gap")

    def real_basis(mask):
        # keep one member of each conjugate pair (positive imaginary part)
        # and span its plane with the real and imaginary vector parts
        cols = []
        for idx in np.nonzero(mask)[0]:
            lam, vec = eigvals[idx], eigvecs[:, idx]
            if abs(lam.imag) < 1e-12:
                cols.append(vec.real)
            elif lam.imag > 0:
                cols.append(vec.real)
                cols.append(vec.imag)
        return np.column_stack(cols)

    basis_plus = real_basis(~minus) if np.any(~minus) else np.zeros((j.shape[0], 0))
    basis_minus = real_basis(minus)
    p = np.hstack([basis_plus, basis_minus])
    if np.linalg.matrix_rank(p) < j.shape[0]:
        raise NearDefective("real invariant bases do not span the space")
    blocks = np.linalg.solve(p, j @ p)
    dp = basis_plus.shape[1]
    j_plus = blocks[:dp, :dp]
    j_minus = blocks[dp:, dp:]
    off = max(np.max(np.abs(blocks[:dp, dp:]), initial=0.0),
              np.max(np.abs(blocks[dp:, :dp]), initial=0.0))
    if off > 1e-8 * max(1.0, float(np.max(np.abs(j)))):
        raise NearDefective("block factorization residual too large")
    q, _ = np.linalg.qr(basis_minus)
    return SpectralSplit(p, j_plus, j_minus, q)


# -- Lyapunov certificate ---------------------------------------------------------


@dataclass(frozen=True)
class LyapunovCertificate:
    q: np.ndarray
    residual: float
    lambda_min: float
    lambda_max: float

    def norm(self, w: np.ndarray) -> float:
        return float(np.sqrt(w @ self.q @ w))


def lyapunov_solve(j_minus: np.ndarray) -> LyapunovCertificate:
    """Solve Q J- + J-^T Q = -2 I as a dense linear system in vec(Q)."""
    j = np.atleast_2d(np.asarray(j_minus, dtype=float))
    dm = j.shape[0]
    eigs = np.linalg.eigvals(j)
    if np.any(eigs.real >= 0):
        raise ValueError("Lyapunov certificate needs a strictly stable block")
    sums = eigs[:, None] + eigs[None, :]
    if np.min(np.abs(sums)) < 1e-12:
        raise SingularSystem("eigenvalue-sum collision within 1e-12")
    eye = np.eye(dm)
    a = np.kron(eye, j.T) + np.kron(j.T, eye)
    q = np.linalg.solve(a, (-2.0 * eye).reshape(-1)).reshape(dm, dm)
    q = 0.5 * (q + q.T)
    residual = float(np.linalg.norm(q @ j + j.T @ q + 2.0 * eye, ord=2))
    lam = np.linalg.eigvalsh(q)
    if lam[0] <= 0:
        raise SingularSystem("Lyapunov solution is not positive definite")
    return LyapunovCertificate(q, residual, float(lam[0]), float(lam[-1]))


# -- constructed systems -----------------------------------------------------------


@dataclass(frozen=True)
class GraphMap:
    """Polynomial map from the expanding block to the contracting block,
    vanishing to second order at the origin. terms[i] lists
    (coefficient, exponent-vector) pairs for output coordinate i."""

    d_plus: int
    d_minus: int
    terms: tuple

    def __post_init__(self):
        for out_terms in self.terms:
            for coef, expo in out_terms:
                if len(expo) != self.d_plus:
                    raise InvalidManifoldSpec("exponent vector length mismatch")
                if coef != 0.0 and sum(expo) < 2:
                    raise InvalidManifoldSpec(
                        "graph map must vanish to second order at the origin")

    def __call__(self, y_plus: np.ndarray) -> np.ndarray:
        return self.batch(np.asarray(y_plus, dtype=float)[None, :])[0]

    def batch(self, y_plus: np.ndarray) -> np.ndarray:
        y_plus = np.atleast_2d(np.asarray(y_plus, dtype=float))
        out = np.zeros((y_plus.shape[0], self.d_minus))
        for i, out_terms in enumerate(self.terms):
            for coef, expo in out_terms:
                out[:, i] += coef * np.prod(y_plus ** np.asarray(expo, float),
                                            axis=1)
        return out

    def jacobian(self, y_plus: np.ndarray) -> np.ndarray:
        y_plus = np.asarray(y_plus, dtype=float)
        jac = np.zeros((self.d_minus, self.d_plus))
        for i, out_terms in enumerate(self.terms):
            for coef, expo in out_terms:
                expo = np.asarray(expo, dtype=float)
                for k in range(self.d_plus):
                    if expo[k] == 0:
                        continue
                    e = expo.copy()
                    e[k] -= 1
                    jac[i, k] += coef * expo[k] * float(np.prod(y_plus ** e))
        return jac


def quadratic_graph(d_plus: int, d_minus: int, coefficient: float) -> GraphMap:
    """G_i(y+) = coefficient * ||y+||^2 for every output coordinate."""
    terms = []
    for _ in range(d_minus):
        out = [(coefficient, tuple(2 if k == j else 0 for k in range(d_plus)))
               for j in range(d_plus)]
        terms.append(tuple(out))
    return GraphMap(d_plus, d_minus, tuple(terms))


def zero_graph(d_plus: int, d_minus: int) -> GraphMap:
    return GraphMap(d_plus, d_minus, tuple(tuple() for _ in range(d_minus)))


@dataclass(frozen=True)
class ConstructedSystem:
    """Two-block system with a prescribed invariant graph.

    In w-coordinates the flow is dw+/dt = -J+ w+ and
    dw-/dt = (-J- + Delta(w)) w- with
    Delta(w) = delta_scale * min(||w||, delta_cap) * I; the cap keeps Delta
    globally bounded, which the increment inequalities require. Original
    coordinates are y = (w+, w- + G(w+)). The set {w- = 0}, equivalently
    {y- = G(y+)}, is invariant by construction.
    """

    j_plus: np.ndarray
    j_minus: np.ndarray
    graph: GraphMap
    delta_scale: float
    delta_cap: float = 1.0

    @property
    def d_plus(self) -> int:
        return self.j_plus.shape[0]

    @property
    def d_minus(self) -> int:
        return self.j_minus.shape[0]

    @property
    def dim(self) -> int:
        return self.d_plus + self.d_minus

    def delta_value(self, w: np.ndarray) -> float:
        return self.delta_scale * min(float(np.linalg.norm(w)), self.delta_cap)

    def delta(self, w: np.ndarray) -> np.ndarray:
        return self.delta_value(w) * np.eye(self.d_minus)

    def to_w(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        dp = self.d_plus
        g = self.graph.batch(y[None, :dp])[0]
        return np.concatenate([y[:dp], y[dp:] - g])

    def to_y(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        dp = self.d_plus
        g = self.graph.batch(w[None, :dp])[0]
        return np.concatenate([w[:dp], w[dp:] + g])

    def to_y_batch(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(np.asarray(w, dtype=float))
        dp = self.d_plus
        g = self.graph.batch(w[:, :dp])
        return np.hstack([w[:, :dp], w[:, dp:] + g])

    def manifold_point(self, y_plus: np.ndarray) -> np.ndarray:
        y_plus = np.asarray(y_plus, dtype=float)
        return np.concatenate([y_plus, self.graph.batch(y_plus[None, :])[0]])

    def drift_w(self, w: np.ndarray) -> np.ndarray:
        """Drift D in w-coordinates: dw/dt = -D(w)."""
        w = np.asarray(w, dtype=float)
        dp = self.d_plus
        wp, wm = w[:dp], w[dp:]
        minus_part = self.j_minus @ wm - self.delta_value(w) * wm
        return np.concatenate([self.j_plus @ wp, minus_part])

    def drift(self, y: np.ndarray) -> np.ndarray:
        """Drift D in original coordinates: dy/dt = -D(y)."""
        y = np.asarray(y, dtype=float)
        dp = self.d_plus
        w = self.to_w(y)
        dw = self.drift_w(w)
        jac = self.graph.jacobian(y[:dp])
        return np.concatenate([dw[:dp], dw[dp:] + jac @ dw[:dp]])


def build_system(j_plus, j_minus, graph: GraphMap, delta_scale: float = 0.0,
                 delta_cap: float = 1.0) -> ConstructedSystem:
    """Assemble a constructed system, validating the graph-map constraints."""
    j_plus = np.atleast_2d(np.asarray(j_plus, dtype=float))
    j_minus = np.atleast_2d(np.asarray(j_minus, dtype=float))
    if graph.d_plus != j_plus.shape[0] or graph.d_minus != j_minus.shape[0]:
        raise InvalidManifoldSpec("graph map dimensions do not match the blocks")
    g0 = graph.batch(np.zeros((1, graph.d_plus)))[0]
    j0 = graph.jacobian(np.zeros(graph.d_plus))
    if np.any(g0 != 0.0) or np.any(j0 != 0.0):
        raise InvalidManifoldSpec("graph map must have zero value and Jacobian "
                                  "at the origin")
    return ConstructedSystem(j_plus, j_minus, graph, float(delta_scale),
                             float(delta_cap))


# -- abstract runs -----------------------------------------------------------------


@dataclass(frozen=True)
class RSeriesSpec:
    """r_n = scale * xi_n / n^exponent with xi uniform on the unit sphere.

    Square-summability of ||r_n|| needs exponent > 1/2; smaller exponents
    are allowed as deliberate contract violations and are flagged.
    """

    scale: float
    exponent: float = 1.0


@dataclass(frozen=True)
class RTildeSeriesSpec:
    """rt_n = scale * gamma_n * xi_n ('gamma' mode, meets the weighted-tail
    contract) or scale * xi_n ('constant' mode, violates it)."""

    scale: float
    mode: str = "gamma"

    def __post_init__(self):
        if self.mode not in ("gamma", "constant"):
            raise ValueError("mode must be 'gamma' or 'constant'")


@dataclass(frozen=True)
class AbstractNoise:
    """Noise bundle for the abstract recursion: the martingale term e lives
    in the full w-space (its minus block feeds the contracting recursion),
    r and rt live in the minus block only."""

    e_model: NoiseModel
    r_spec: RSeriesSpec | None = None
    rt_spec: RTildeSeriesSpec | None = None


@dataclass(frozen=True)
class AbstractRun:
    w: np.ndarray              # (T+1, d)
    y: np.ndarray              # (T+1, d)
    u: np.ndarray              # (T+1,)
    e: np.ndarray              # (T, d)
    r: np.ndarray              # (T, d-)
    rt: np.ndarray             # (T, d-)
    delta_norms: np.ndarray    # (T,) ||Delta(w_n)||
    gammas: np.ndarray         # (T,)
    chi: np.ndarray            # (T,) chi_n for n = 1..T
    tau: int | None
    tau_start: int
    level: float
    certificate: LyapunovCertificate
    system: ConstructedSystem
    schedule: StepSchedule
    seed: int
    contract_flags: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.w.shape[0] - 1

    def h_matrix(self, n: int) -> np.ndarray:
        """H_n = -J- + Delta(w_n)."""
        return (-self.system.j_minus
                + self.delta_norms[n] * np.eye(self.system.d_minus))

    def w_minus(self) -> np.ndarray:
        return self.w[:, self.system.d_plus:]

    def verify_recursion(self) -> float:
        """Max deviation of the stored series from the defining recursion,
        recomputed with the same operation order as the simulator."""
        sys_ = self.system
        dp = sys_.d_plus
        wm = self.w[:, dp:]
        wp = self.w[:, :dp]
        t = self.gammas.shape[0]
        err = 0.0
        for n in range(t):
            g = self.gammas[n]
            hw = -(sys_.j_minus @ wm[n]) + self.delta_norms[n] * wm[n]
            pred_m = wm[n] + g * hw + g * (self.e[n, dp:] + self.r[n]
                                           + self.rt[n])
            pred_p = wp[n] - g * (sys_.j_plus @ wp[n]) + g * self.e[n, :dp]
            err = max(err, float(np.max(np.abs(pred_m - wm[n + 1]))))
            err = max(err, float(np.max(np.abs(pred_p - wp[n + 1]))))
        return err


def _generate_noise(noise: AbstractNoise, system: ConstructedSystem,
                    schedule: StepSchedule, n_steps: int, seed: int):
    e_ss, r_ss, rt_ss = np.random.SeedSequence(seed).spawn(3)
    dm = system.d_minus
    e = noise.e_model.sample(np.random.default_rng(e_ss), n_steps)
    steps = np.arange(1, n_steps + 1, dtype=float)
    if noise.r_spec is None or noise.r_spec.scale == 0.0:
        r = np.zeros((n_steps, dm))
    else:
        xi = _unit_sphere(np.random.default_rng(r_ss), n_steps, dm)
        r = noise.r_spec.scale * xi / steps[:, None] ** noise.r_spec.exponent
    if noise.rt_spec is None or noise.rt_spec.scale == 0.0:
        rt = np.zeros((n_steps, dm))
    else:
        xi = _unit_sphere(np.random.default_rng(rt_ss), n_steps, dm)
        if noise.rt_spec.mode == "gamma":
            rt = noise.rt_spec.scale * schedule.gamma_array(n_steps)[:, None] * xi
        else:
            rt = noise.rt_spec.scale * xi
    return e, r, rt


def _unit_sphere(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g


def _contract_flags(noise: AbstractNoise, r: np.ndarray, rt: np.ndarray,
                    schedule: StepSchedule, n_steps: int) -> dict:
    flags = {}
    flags["sum_r_sq"] = float(np.sum(r ** 2))
    flags["r_square_summable"] = (noise.r_spec is None
                                  or noise.r_spec.scale == 0.0
                                  or noise.r_spec.exponent > 0.5)
    flags["rt_tail_contract"] = (noise.rt_spec is None
                                 or noise.rt_spec.scale == 0.0
                                 or noise.rt_spec.mode == "gamma")
    return flags


def simulate_abstract(system: ConstructedSystem, schedule: StepSchedule,
                      noise: AbstractNoise, n_steps: int, tau_start: int,
                      level: float, seed: int,
                      w0: np.ndarray | None = None) -> AbstractRun:
    """One run of the abstract recursion; deterministic given the seed.

    Records the Lyapunov norm U_n and the first index at or after tau_start
    where U_n^2 >= level * chi_n.
    """
    if tau_start < 1:
        raise ValueError("tau_start must be at least 1")
    if noise.e_model.dim != system.dim:
        raise ValueError("e noise must live in the full w-space")
    cert = lyapunov_solve(system.j_minus)
    gammas = schedule.gamma_array(n_steps)
    e, r, rt = _generate_noise(noise, system, schedule, n_steps, seed)
    if w0 is None:
        w0 = np.zeros(system.dim)
    w_block, delta_norms = _kernels.abstract_block(
        np.asarray(w0, dtype=float)[None, :], system.j_plus, system.j_minus,
        system.delta_scale, system.delta_cap, gammas, e[None, :, :],
        r[None, :, :], rt[None, :, :])
    w = w_block[0]
    u = _u_series(w[:, system.d_plus:], cert.q)
    chi = schedule.chi_array(n_steps)
    tau = _first_crossing(u, chi, tau_start, level)
    return AbstractRun(
        w=w, y=system.to_y_batch(w), u=u, e=e, r=r, rt=rt,
        delta_norms=delta_norms[0], gammas=gammas, chi=chi, tau=tau,
        tau_start=tau_start, level=level, certificate=cert, system=system,
        schedule=schedule, seed=seed,
        contract_flags=_contract_flags(noise, r, rt, schedule, n_steps))


def _u_series(wm: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ti,ij,tj->t", wm, q, wm))


def _first_crossing(u: np.ndarray, chi: np.ndarray, start: int,
                    level: float) -> int | None:
    for k in range(start, u.shape[0]):
        if u[k] ** 2 >= level * chi[k - 1]:
            return k
    return None


# -- pathwise probes ------------------------------------------------------------


@dataclass(frozen=True)
class InequalityProbeReport:
    n_steps: int
    increment_violations: int     # of U_{n+1}-U_n >= gamma_n <a_n, e+r+rt>
    a_bound_violations: int       # of ||a_n|| <= lambda_max/lambda_min
    fitted_c: float               # from the squared-increment bound
    n_below_threshold: int        # steps with U_n^2 <= level*chi_n
    standing_assumption_ok: bool  # ||Q (H_n + J-)|| <= 1/2 throughout


def pathwise_inequality_probe(run: AbstractRun,
                              certificate: LyapunovCertificate | None = None,
                              level: float | None = None
                              ) -> InequalityProbeReport:
    """Check the per-step increment inequalities of the repulsive norm.

    (a) U_{n+1} - U_n >= gamma_n <a_n, e- + r + rt> with a_n = Q w-/U
        (Q u for a fixed Q-unit u when U = 0), ||a_n|| <= lmax/lmin.
    (b) on steps with U_n^2 <= level * chi_n,
        (U_{n+1} - U_n)^2 <= C gamma_n^2 (level + ||e-||^2 + ||r||^2 + ||rt||^2);
        the smallest such C is reported.
    Zero violations of (a) are expected only while ||Q (H_n + J-)|| <= 1/2.
    """
    cert = run.certificate if certificate is None else certificate
    lvl = run.level if level is None else level
    q = cert.q
    dp = run.system.d_plus
    wm = run.w[:, dp:]
    t = run.gammas.shape[0]
    u = run.u
    q_norm = float(np.linalg.norm(q, ord=2))
    standing_ok = bool(np.all(q_norm * run.delta_norms <= 0.5 + 1e-12))

    u0 = np.zeros(run.system.d_minus)
    u0[0] = 1.0
    u0 /= cert.norm(u0)
    a_bound = cert.lambda_max / cert.lambda_min

    inc_viol = 0
    a_viol = 0
    fitted = 0.0
    n_below = 0
    noise_sum = run.e[:, dp:] + run.r + run.rt
    for n in range(t):
        if u[n] > 0.0:
            a_n = (q @ wm[n]) / u[n]
        else:
            a_n = q @ u0
        if np.linalg.norm(a_n) > a_bound + 1e-12:
            a_viol += 1
        du = u[n + 1] - u[n]
        rhs = run.gammas[n] * float(a_n @ noise_sum[n])
        if du < rhs - 1e-10 * max(1.0, u[n]):
            inc_viol += 1
        if u[n] ** 2 <= lvl * run.chi[max(n - 1, 0)]:
            n_below += 1
            denom = run.gammas[n] ** 2 * (
                lvl + float(run.e[n, dp:] @ run.e[n, dp:])
                + float(run.r[n] @ run.r[n]) + float(run.rt[n] @ run.rt[n]))
            if denom > 0:
                fitted = max(fitted, (u[n + 1] - u[n]) ** 2 / denom)
    return InequalityProbeReport(t, inc_viol, a_viol, float(fitted), n_below,
                                 standing_ok)


# -- experiments -----------------------------------------------------------------


@dataclass(frozen=True)
class NonconvergenceStats:
    n_runs: int
    fraction_tau_finite: float
    fraction_held_after_tau: float   # among tau-finite runs
    fraction_y_to_zero: float
    eps_converge: float
    level: float
    master_seed: int
    runs: tuple


def nonconvergence_experiment(system: ConstructedSystem, schedule: StepSchedule,
                              noise: AbstractNoise, n_steps: int,
                              tau_start: int, level: float, n_runs: int,
                              master_seed: int, w0: np.ndarray | None = None,
                              eps_converge: float = 1e-2,
                              chunk: int = 100) -> NonconvergenceStats:
    """Monte Carlo over seeds master_seed + i of three proxies: the stopping
    time is finite; after it, U stays above sqrt(level*chi_tau)/2; and the
    original-coordinate iterate converges to zero (small final norm with a
    decreasing last decile)."""
    cert = lyapunov_solve(system.j_minus)
    gammas = schedule.gamma_array(n_steps)
    chi = schedule.chi_array(n_steps)
    if w0 is None:
        w0 = np.zeros(system.dim)
    w0 = np.asarray(w0, dtype=float)
    records = []
    for lo in range(0, n_runs, chunk):
        hi = min(lo + chunk, n_runs)
        size = hi - lo
        e = np.empty((size, n_steps, system.dim))
        r = np.empty((size, n_steps, system.d_minus))
        rt = np.empty((size, n_steps, system.d_minus))
        for i in range(size):
            e[i], r[i], rt[i] = _generate_noise(noise, system, schedule,
                                                n_steps, master_seed + lo + i)
        w_block, _ = _kernels.abstract_block(
            np.repeat(w0[None, :], size, axis=0), system.j_plus,
            system.j_minus, system.delta_scale, system.delta_cap, gammas,
            e, r, rt)
        for i in range(size):
            w = w_block[i]
            u = _u_series(w[:, system.d_plus:], cert.q)
            tau = _first_crossing(u, chi, tau_start, level)
            held = False
            if tau is not None:
                floor = 0.5 * np.sqrt(level * chi[tau - 1])
                held = bool(np.min(u[tau:]) >= floor)
            y = system.to_y_batch(w)
            y_norms = np.linalg.norm(y, axis=1)
            n_dec = max(1, (n_steps + 1) // 10)
            last = float(np.mean(y_norms[-n_dec:]))
            prev = float(np.mean(y_norms[-2 * n_dec:-n_dec]))
            # settled at the shrinking noise floor counts as converged
            to_zero = bool(y_norms[-1] < eps_converge
                           and (last <= prev or last < eps_converge))
            records.append({"run": lo + i, "seed": master_seed + lo + i,
                            "tau": tau, "held_after_tau": held,
                            "y_to_zero": to_zero,
                            "final_y_norm": float(y_norms[-1]),
                            "final_u": float(u[-1])})
    n_tau = sum(1 for rec in records if rec["tau"] is not None)
    n_held = sum(1 for rec in records if rec["held_after_tau"])
    n_zero = sum(1 for rec in records if rec["y_to_zero"])
    return NonconvergenceStats(
        n_runs=n_runs,
        fraction_tau_finite=n_tau / n_runs,
        fraction_held_after_tau=(n_held / n_tau) if n_tau else 0.0,
        fraction_y_to_zero=n_zero / n_runs,
        eps_converge=eps_converge, level=level, master_seed=master_seed,
        runs=tuple(records))


# -- manifold invariance check -----------------------------------------------------


def manifold_invariance_error(system: ConstructedSystem, y_plus_starts,
                              t_final: float = 1.0) -> float:
    """Integrate the original-coordinate flow from on-graph starts and
    report the worst |y- - G(y+)| along the way."""
    from scipy.integrate import solve_ivp

    worst = 0.0
    dp = system.d_plus
    for yp in np.atleast_2d(np.asarray(y_plus_starts, dtype=float)):
        y0 = system.manifold_point(yp)
        sol = solve_ivp(lambda _, y: -system.drift(y), (0.0, t_final), y0,
                        rtol=1e-10, atol=1e-12, dense_output=False)
        for y in sol.y.T:
            g = system.graph.batch(y[None, :dp])[0]
            worst = max(worst, float(np.max(np.abs(y[dp:] - g))))
    return worst
