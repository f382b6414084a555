"""Runtime diagnostics for the iterate decomposition x = y + z.

y is the manifold projection of the iterate and z the normal remainder.
The module exposes the residual split of the projected recursion, a one-step
drift probe, and ensemble rate/tail diagnostics. All series follow the
stopped convention: they end (or freeze to zero) at the first exit from the
neighborhood ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AngleConditionFails, InvalidExponent
from .functions import PiecewiseSmoothFunction
from .geometry import (AffineManifold, Manifold, manifold_distance, project,
                       tangent_projector)
from .sgd import Ensemble, NoiseModel, Trajectory


@dataclass(frozen=True)
class DecomposedTrajectory:
    """y_n = P_M(x_n) and z_n = x_n - y_n, defined while the run stays in
    the neighborhood ball (length = exit index, or the whole run)."""

    y: np.ndarray            # (T, d)
    z: np.ndarray            # (T, d)
    trajectory: Trajectory
    manifold: Manifold

    @property
    def length(self) -> int:
        return self.y.shape[0]

    def z_norms(self) -> np.ndarray:
        return np.linalg.norm(self.z, axis=1)


def decompose(traj: Trajectory, manifold: Manifold | None = None
              ) -> DecomposedTrajectory:
    """Split the pre-exit iterates into manifold and normal parts."""
    m = traj.config.manifold if manifold is None else manifold
    cutoff = traj.x.shape[0]
    if traj.exit_index is not None:
        cutoff = min(cutoff, traj.exit_index)
    if traj.diverged_at is not None:
        cutoff = min(cutoff, traj.diverged_at)
    xs = traj.x[:cutoff]
    if isinstance(m, AffineManifold):
        w = xs - m.base_point
        y = m.base_point + (w @ m.basis) @ m.basis.T
    else:
        y = np.array([project(m, x) for x in xs])
    return DecomposedTrajectory(y=y, z=xs - y, trajectory=traj, manifold=m)


# -- the residual split of the projected recursion -----------------------------


@dataclass(frozen=True)
class ResidualSeries:
    """Terms of y_{n+1} = y_n - gamma_n D(y_n) + gamma_n (eta_tilde + rho
    + rho_tilde): the projected noise, the projection Taylor remainder and
    the tangential-control residual, with certified max-ratio constants."""

    eta_tilde: np.ndarray    # (T-1, d)
    rho: np.ndarray          # (T-1, d)
    rho_tilde: np.ndarray    # (T-1, d)
    drift_values: np.ndarray  # (T-1, d), D(y_n)
    c_rho: float
    c_rho_tilde: float
    decomposition: DecomposedTrajectory

    def reconstruction_error(self) -> float:
        """Max norm error of the recursion identity across all steps."""
        dec = self.decomposition
        traj = dec.trajectory
        t = self.eta_tilde.shape[0]
        g = traj.gamma[:t, None]
        d_term = dec.y[1:t + 1] - dec.y[:t] + g * self.drift_values
        err = d_term - g * (self.eta_tilde + self.rho + self.rho_tilde)
        return float(np.max(np.abs(err))) if err.size else 0.0


def projected_drift(representative, manifold: Manifold, x_star: np.ndarray,
                    radius: float):
    """Gradient of (representative o projection), clamped into the ball.

    The clamp realizes a bounded continuous extension outside B(x_star, r):
    D(x) = grad(F o P_M) evaluated at the radial clamp of x.
    """
    x_star = np.asarray(x_star, dtype=float)

    def drift(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        offset = x - x_star
        norm = float(np.linalg.norm(offset))
        if norm > radius:
            x = x_star + offset * (radius / norm)
        y = project(manifold, x)
        proj = tangent_projector(manifold, y)
        return proj(np.asarray(representative.gradient(y), dtype=float))

    return drift


def robbins_monro_residuals(decomp: DecomposedTrajectory, drift) -> ResidualSeries:
    """Split the projected increments into noise, Taylor and tangential terms.

    eta_tilde_n is the tangent projection of the incoming noise; rho_n the
    second-order Taylor remainder of the projection (identically zero for
    affine manifolds, whose projection is affine); rho_tilde_n closes the
    identity exactly. For implicit manifolds the projection Jacobian at an
    off-manifold point is approximated by the tangent projector at its
    projection.
    """
    traj = decomp.trajectory
    m = decomp.manifold
    t = max(decomp.length - 1, 0)
    d = traj.x.shape[1]
    eta_tilde = np.empty((t, d))
    rho = np.zeros((t, d))
    rho_tilde = np.empty((t, d))
    drift_vals = np.empty((t, d))

    affine = isinstance(m, AffineManifold)
    if affine:
        proj_matrix = m.basis @ m.basis.T
    for n in range(t):
        y_n = decomp.y[n]
        p_t = proj_matrix if affine else tangent_projector(m, y_n).matrix
        eta_tilde[n] = p_t @ traj.eta[n]
        g = traj.gamma[n]
        if not affine:
            dx = traj.x[n + 1] - traj.x[n]
            rho[n] = (decomp.y[n + 1] - y_n - p_t @ dx) / g
        drift_vals[n] = drift(y_n)
        rho_tilde[n] = ((decomp.y[n + 1] - y_n) / g + drift_vals[n]
                        - eta_tilde[n] - rho[n])

    eta_norms = np.linalg.norm(traj.eta[:t], axis=1)
    z_norms = decomp.z_norms()[:t]
    c_rho = _max_ratio(np.linalg.norm(rho, axis=1),
                       traj.gamma[:t] * (1.0 + eta_norms ** 2))
    c_rho_tilde = _max_ratio(np.linalg.norm(rho_tilde, axis=1),
                             z_norms * (1.0 + eta_norms))
    return ResidualSeries(eta_tilde, rho, rho_tilde, drift_vals, c_rho,
                          c_rho_tilde, decomp)


def _max_ratio(numer: np.ndarray, denom: np.ndarray) -> float:
    """max numer/denom with the 0/0 -> 0 convention."""
    if numer.size == 0:
        return 0.0
    out = np.zeros_like(numer)
    tiny = denom <= 0.0
    out[~tiny] = numer[~tiny] / denom[~tiny]
    out[tiny] = np.where(numer[tiny] <= 1e-300, 0.0, np.inf)
    return float(np.max(out))


# -- one-step drift probe -------------------------------------------------------


@dataclass(frozen=True)
class DriftProbeResult:
    x: np.ndarray
    gamma: float
    z_norm: float
    lhs: float               # estimated E ||z'||^2 after one step
    fitted_c: float          # (lhs - ||z||^2 + gamma*beta*||z||) / gamma^2


@dataclass(frozen=True)
class DriftReport:
    probes: tuple
    beta: float
    fitted_c: float          # max over probes
    violations: int          # against the user constant, if given
    c_user: float | None
    n_mc: int
    seed: int


def drift_probe(f: PiecewiseSmoothFunction, manifold: Manifold,
                x_grid: np.ndarray, gamma_grid, noise: NoiseModel,
                n_mc: int, seed: int, beta: float,
                c_user: float | None = None,
                rule: str = "active_piece") -> DriftReport:
    """Estimate E||z'||^2 for one noisy step from each probe point and fit
    the smallest constant making ||z||^2 - gamma*beta*||z|| + C*gamma^2 an
    upper bound."""
    if beta <= 0:
        raise AngleConditionFails("drift probe needs a positive angle constant")
    rng = np.random.default_rng(seed)
    probes = []
    violations = 0
    fitted = -np.inf
    for x in np.atleast_2d(np.asarray(x_grid, dtype=float)):
        v = f.select_subgradient(x, rule)
        z_norm = manifold_distance(manifold, x)
        for g in np.atleast_1d(gamma_grid):
            g = float(g)
            draws = noise.sample(rng, n_mc)
            x_next = x - g * v + g * draws
            if isinstance(manifold, AffineManifold):
                w = x_next - manifold.base_point
                resid = w - (w @ manifold.basis) @ manifold.basis.T
                z_next = np.linalg.norm(resid, axis=1)
            else:
                z_next = np.array([manifold_distance(manifold, xn)
                                   for xn in x_next])
            lhs = float(np.mean(z_next ** 2))
            c_probe = (lhs - z_norm ** 2 + g * beta * z_norm) / g ** 2
            fitted = max(fitted, c_probe)
            if c_user is not None:
                bound = z_norm ** 2 - g * beta * z_norm + c_user * g ** 2
                if lhs > bound + 1e-15:
                    violations += 1
            probes.append(DriftProbeResult(x, g, z_norm, lhs, c_probe))
    return DriftReport(tuple(probes), beta, float(fitted), violations, c_user,
                       n_mc, seed)


# -- ensemble diagnostics --------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticSeries:
    checkpoints: np.ndarray
    values: np.ndarray
    decreasing: bool


def rate_diagnostic(ensemble: Ensemble, a: float,
                    checkpoints=None) -> DiagnosticSeries:
    """Ensemble mean of n^a ||z_n||^2 at the checkpoints; the admissible
    exponent range is (0, 2*alpha - 1)."""
    alpha = ensemble.schedule.alpha
    if not 0.0 < a < 2.0 * alpha - 1.0:
        raise InvalidExponent(
            f"exponent {a} outside (0, {2.0 * alpha - 1.0:g}) for alpha={alpha}")
    horizon = ensemble.horizon
    if checkpoints is None:
        checkpoints = np.unique(np.geomspace(10, horizon, 5).astype(int))
    checkpoints = np.asarray(checkpoints, dtype=int)
    if np.any(checkpoints > horizon):
        raise ValueError("checkpoint beyond the ensemble horizon")
    values = np.array([
        float(np.mean(ensemble.z_norms[:, n] ** 2)) * float(n) ** a
        for n in checkpoints])
    return DiagnosticSeries(checkpoints, values, bool(values[-1] < values[0]))


def weighted_tail_diagnostic(ensemble: Ensemble, n_grid) -> DiagnosticSeries:
    """chi_n^(-1/2) * sum_{i=n}^{horizon} gamma_i * mean||z_i|| per grid point.

    The horizon must sit well beyond the largest grid point, otherwise the
    truncated tail sum is not meaningful.
    """
    n_grid = np.asarray(n_grid, dtype=int)
    horizon = ensemble.horizon
    if np.any(n_grid < 1) or np.any(n_grid >= horizon):
        raise ValueError("grid points must satisfy 1 <= n < horizon")
    sched = ensemble.schedule
    mean_z = ensemble.mean_z()
    gammas = sched.gamma_array(horizon)          # gamma_i at index i-1
    values = np.empty(n_grid.size)
    for j, n in enumerate(n_grid):
        tail = float(np.sum(gammas[n - 1:] * mean_z[n:]))
        values[j] = tail / np.sqrt(sched.chi(int(n)))
    decreasing = bool(np.all(np.diff(values) < 0))
    return DiagnosticSeries(n_grid, values, decreasing)
