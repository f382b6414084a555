"""Sampling-based certifiers for the geometric conditions around a critical
point: sharpness, the angle and tangential-control (Verdier-type) constants,
weak convexity, and the critical-point classifier built on top of them.

All verdicts are labeled estimates: conditions quantify over open
neighborhoods, so they are certified by sampling, never proven. Reports
record the seed, the sample count and the witness achieving the extremal
ratio, which reproduces the estimate on re-evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotCritical
from .functions import PiecewiseSmoothFunction, SmoothPiece
from .geometry import (AffineManifold, Manifold, project, riem_gradient,
                       riem_hessian, tangent_projector)

HOLDS = "holds"
FAILS = "fails"
INCONCLUSIVE = "inconclusive"

LOCAL_MIN_CANDIDATE = "local_min_candidate"
ACTIVE_STRICT_SADDLE = "active_strict_saddle"
SHARPLY_REPULSIVE = "sharply_repulsive"
OTHER = "other"

DEFAULT_SHARPNESS_FLOOR = 1e-6


@dataclass(frozen=True)
class ConditionReport:
    kind: str
    estimate: float
    n_samples: int
    radius: float
    witness: dict
    verdict: str
    seed: int
    samples: np.ndarray      # sampled points, one row per sample
    ratios: np.ndarray       # per-sample extremal values
    meta: dict = field(default_factory=dict)


def _ball_points(rng: np.random.Generator, center: np.ndarray, radius: float,
                 n: int) -> np.ndarray:
    d = center.shape[0]
    if d == 0:
        return np.zeros((n, 0))
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = radius * rng.random(n) ** (1.0 / d)
    return center + g * radii[:, None]


def _ball_points_off_manifold(rng, center, radius, n, manifold, dist_floor):
    """Uniform ball points rejected to keep dist(x, M) >= dist_floor."""
    if n <= 0:
        return np.zeros((0, center.shape[0]))
    batches = []
    total = 0
    while total < n:
        cand = _ball_points(rng, center, radius, max(n - total, 16))
        keep = _distances_to_manifold(manifold, cand) >= dist_floor
        batches.append(cand[keep])
        total += int(keep.sum())
    return np.vstack(batches)[:n]


def _project_batch(manifold: Manifold, xs: np.ndarray) -> np.ndarray:
    if isinstance(manifold, AffineManifold):
        w = xs - manifold.base_point
        return manifold.base_point + (w @ manifold.basis) @ manifold.basis.T
    return np.array([project(manifold, x) for x in xs])


def _representative(f: PiecewiseSmoothFunction, y: np.ndarray) -> SmoothPiece:
    if f.representative is not None:
        return f.representative
    for region, piece in f.pieces:
        if region.contains(y):
            return piece
    raise NotCritical(f"no piece covers {y}")


# -- sharpness -----------------------------------------------------------------


def _snap_to_boundaries(rng: np.random.Generator, xs: np.ndarray,
                        f: PiecewiseSmoothFunction) -> np.ndarray:
    """Project each point onto one randomly chosen region boundary, so the
    kink strata (where the subdifferential is largest) get sampled too."""
    normals = []
    seen = set()
    for region, _ in f.pieces:
        for normal, sign in region.constraints:
            key = normal.tobytes()
            if key not in seen:
                seen.add(key)
                normals.append(normal)
    if not normals:
        return xs
    out = xs.copy()
    pick = rng.integers(0, len(normals), size=xs.shape[0])
    for i, j in enumerate(pick):
        a = normals[j]
        out[i] = out[i] - (a @ out[i]) / (a @ a) * a
    return out


def estimate_sharpness(f: PiecewiseSmoothFunction, manifold: Manifold,
                       x_star: np.ndarray, r: float, n_samples: int, seed: int,
                       sharpness_floor: float = DEFAULT_SHARPNESS_FLOOR
                       ) -> ConditionReport:
    """Minimum over sampled off-manifold points of the distance from the
    origin to the subdifferential.

    Half the points are snapped onto region boundaries before the
    off-manifold rejection, so kink strata are probed. The verdict fails
    either when the estimate is below the floor or when the minima shrink
    with the distance to the manifold (a gradient vanishing toward it),
    detected by comparing the closest-distance decile against the rest.
    """
    x_star = np.asarray(x_star, dtype=float)
    rng = np.random.default_rng(seed)
    dist_floor = r * 1e-3
    n_snap = n_samples // 2
    raw = _ball_points(rng, x_star, r, n_snap)
    snapped = _snap_to_boundaries(rng, raw, f)
    keep = _distances_to_manifold(manifold, snapped) >= dist_floor
    uniform = _ball_points_off_manifold(rng, x_star, r,
                                        n_samples - int(keep.sum()),
                                        manifold, dist_floor)
    xs = np.vstack([snapped[keep], uniform])
    norms = np.linalg.norm(f.min_norm_batch(xs), axis=1)
    idx = int(np.argmin(norms))
    estimate = float(norms[idx])

    dists = _distances_to_manifold(manifold, xs)
    order = np.argsort(dists)
    split = max(1, xs.shape[0] // 10)
    near_min = float(np.min(norms[order[:split]]))
    far_min = float(np.min(norms[order[split:]])) if split < xs.shape[0] else near_min
    vanishing = near_min < 0.5 * far_min
    return ConditionReport(
        kind="sharpness", estimate=estimate, n_samples=n_samples, radius=r,
        witness={"x": xs[idx], "value": estimate},
        verdict=HOLDS if (estimate > sharpness_floor and not vanishing) else FAILS,
        seed=seed, samples=xs, ratios=norms,
        meta={"floor": sharpness_floor, "near_min": near_min,
              "far_min": far_min, "distances": dists})


def _distances_to_manifold(manifold: Manifold, xs: np.ndarray) -> np.ndarray:
    if isinstance(manifold, AffineManifold):
        w = xs - manifold.base_point
        resid = w - (w @ manifold.basis) @ manifold.basis.T
        return np.linalg.norm(resid, axis=1)
    return np.array([np.linalg.norm(x - project(manifold, x)) for x in xs])


# -- angle condition -----------------------------------------------------------


def estimate_angle_beta(f: PiecewiseSmoothFunction, manifold: Manifold,
                        x_star: np.ndarray, r: float, n_samples: int,
                        seed: int) -> ConditionReport:
    """Smallest outward component <v, x - P(x)>/||x - P(x)|| over sampled
    points and all subdifferential generators (the form is linear, so
    minimizing over generators minimizes over the hull)."""
    x_star = np.asarray(x_star, dtype=float)
    rng = np.random.default_rng(seed)
    xs = _ball_points_off_manifold(rng, x_star, r, n_samples, manifold,
                                   r * 1e-9)
    proj = _project_batch(manifold, xs)
    w = xs - proj
    w_norms = np.linalg.norm(w, axis=1)
    ratios = f.min_generator_inner_batch(xs, w) / w_norms
    idx = int(np.argmin(ratios))
    estimate = float(ratios[idx])
    return ConditionReport(
        kind="angle", estimate=estimate, n_samples=n_samples, radius=r,
        witness={"x": xs[idx], "ratio": estimate},
        verdict=HOLDS if estimate > 0.0 else FAILS,
        seed=seed, samples=xs, ratios=ratios)


# -- tangential control (Verdier-type constant) ---------------------------------


def estimate_verdier_constant(f: PiecewiseSmoothFunction, manifold: Manifold,
                              x_star: np.ndarray, r: float, n_pairs: int,
                              seed: int, stabilization_factor: float = 1.05
                              ) -> ConditionReport:
    """Largest ratio ||P_T(v) - grad_M f(y)|| / ||x - y|| over sampled pairs
    (y on the manifold, x in the ball) and generators v at x.

    Verdict: the condition holds when the ratios at the smallest pair
    distances do not blow past the maximum seen at larger distances (a
    bounded constant), and fails when the smallest-distance decile exceeds
    it by more than `stabilization_factor` (a diverging ratio).
    """
    x_star = np.asarray(x_star, dtype=float)
    rng = np.random.default_rng(seed)
    if isinstance(manifold, AffineManifold):
        k = manifold.dim
        on_m = x_star + (_ball_points(rng, np.zeros(k), r, n_pairs)
                         @ manifold.basis.T)
    else:
        raw = _ball_points(rng, x_star, r, n_pairs)
        on_m = _project_batch(manifold, raw)
    xs = _ball_points(rng, x_star, r, n_pairs)
    # re-draw coincident pairs deterministically
    bad = np.linalg.norm(xs - on_m, axis=1) < 1e-12 * r
    while np.any(bad):
        xs[bad] = _ball_points(rng, x_star, r, int(bad.sum()))
        bad = np.linalg.norm(xs - on_m, axis=1) < 1e-12 * r

    affine = isinstance(manifold, AffineManifold)
    if affine:
        proj_matrix = manifold.basis @ manifold.basis.T
    ratios = np.empty(n_pairs)
    for i in range(n_pairs):
        y = on_m[i]
        p_t = proj_matrix if affine else tangent_projector(manifold, y).matrix
        grad_m = p_t @ np.asarray(_representative(f, y).gradient(y), dtype=float)
        gens = f.clarke_generators(xs[i]).generators
        devs = np.linalg.norm(gens @ p_t.T - grad_m, axis=1)
        ratios[i] = float(np.max(devs)) / float(np.linalg.norm(xs[i] - y))

    distances = np.linalg.norm(xs - on_m, axis=1)
    order = np.argsort(distances)[::-1]          # large distances first
    split = max(1, (9 * n_pairs) // 10)
    coarse_max = float(np.max(ratios[order[:split]]))
    fine_max = float(np.max(ratios[order[split:]])) if split < n_pairs else coarse_max
    estimate = max(coarse_max, fine_max)
    if n_pairs < 20:
        verdict = INCONCLUSIVE
    else:
        verdict = HOLDS if fine_max <= stabilization_factor * coarse_max else FAILS
    idx = int(np.argmax(ratios))
    return ConditionReport(
        kind="verdier", estimate=estimate, n_samples=n_pairs, radius=r,
        witness={"y": on_m[idx], "x": xs[idx], "ratio": float(ratios[idx])},
        verdict=verdict, seed=seed,
        samples=np.hstack([on_m, xs]), ratios=ratios,
        meta={"distances": distances, "coarse_max": coarse_max,
              "fine_max": fine_max})


# -- weak convexity --------------------------------------------------------------


def estimate_weak_convexity_rho(f: PiecewiseSmoothFunction, box_lo, box_hi,
                                rho_grid, n_segments: int, seed: int,
                                tol: float = 1e-12) -> ConditionReport:
    """Smallest grid rho for which f + rho*||.||^2 passes a sampled-segment
    convexity test inside the box."""
    box_lo = np.asarray(box_lo, dtype=float)
    box_hi = np.asarray(box_hi, dtype=float)
    rho_grid = np.sort(np.asarray(rho_grid, dtype=float))
    rng = np.random.default_rng(seed)
    d = box_lo.shape[0]
    x1 = box_lo + (box_hi - box_lo) * rng.random((n_segments, d))
    x2 = box_lo + (box_hi - box_lo) * rng.random((n_segments, d))
    t = rng.random(n_segments)
    mid = t[:, None] * x1 + (1.0 - t[:, None]) * x2

    f1, f2, fm = f.value_batch(x1), f.value_batch(x2), f.value_batch(mid)
    sq1 = np.einsum("ij,ij->i", x1, x1)
    sq2 = np.einsum("ij,ij->i", x2, x2)
    sqm = np.einsum("ij,ij->i", mid, mid)

    witness = None
    estimate = float("nan")
    verdict = FAILS
    last_violations = np.zeros(n_segments)
    for rho in rho_grid:
        lhs = fm + rho * sqm
        rhs = t * (f1 + rho * sq1) + (1.0 - t) * (f2 + rho * sq2)
        violations = lhs - rhs
        worst = int(np.argmax(violations))
        if violations[worst] <= tol:
            estimate = float(rho)
            verdict = HOLDS
            break
        witness = {"x1": x1[worst], "x2": x2[worst], "t": float(t[worst]),
                   "rho": float(rho), "violation": float(violations[worst])}
        last_violations = violations
    return ConditionReport(
        kind="weak_convexity", estimate=estimate, n_samples=n_segments,
        radius=float(np.max(box_hi - box_lo)) / 2.0,
        witness=witness or {}, verdict=verdict, seed=seed,
        samples=np.hstack([x1, x2, t[:, None]]), ratios=last_violations,
        meta={"rho_grid": rho_grid, "box_lo": box_lo, "box_hi": box_hi})


def reevaluate_witness(report: ConditionReport, f: PiecewiseSmoothFunction,
                       manifold: Manifold | None = None) -> float:
    """Recompute the extremal quantity at a report's witness point(s)."""
    w = report.witness
    if report.kind == "sharpness":
        return float(np.linalg.norm(f.min_norm_subgradient(w["x"])))
    if report.kind == "angle":
        x = w["x"]
        p = project(manifold, x)
        diff = x - p
        return f.min_generator_inner(x, diff) / float(np.linalg.norm(diff))
    if report.kind == "verdier":
        y, x = w["y"], w["x"]
        proj = tangent_projector(manifold, y)
        grad_m = proj(np.asarray(_representative(f, y).gradient(y), dtype=float))
        gens = f.clarke_generators(x).generators
        devs = np.linalg.norm(gens @ proj.matrix.T - grad_m, axis=1)
        return float(np.max(devs)) / float(np.linalg.norm(x - y))
    if report.kind == "weak_convexity":
        x1, x2, t, rho = w["x1"], w["x2"], w["t"], w["rho"]
        mid = t * x1 + (1.0 - t) * x2

        def g(x):
            return f.value(x) + rho * float(x @ x)

        return g(mid) - (t * g(x1) + (1.0 - t) * g(x2))
    raise ValueError(f"unknown report kind {report.kind!r}")


# -- the critical-point classifier ----------------------------------------------


def classify_critical_point(f: PiecewiseSmoothFunction, manifold: Manifold,
                            x_star: np.ndarray, r: float, tol: float = 1e-6,
                            seed: int = 0, n_samples: int = 2000) -> str:
    """Classify a critical point from sampled evidence.

    Order of the rules: a sharp point with a negative manifold-Hessian
    eigenvalue is an active strict saddle; a sharp local minimizer of the
    manifold restriction whose nearby subgradients have negative outward
    component (the angle estimate is negative) is sharply repulsive; a point
    that minimizes sampled ball values is a local-minimum candidate;
    anything else is 'other'.
    """
    x_star = np.asarray(x_star, dtype=float)
    mn = float(np.linalg.norm(f.min_norm_subgradient(x_star)))
    if mn > tol:
        raise NotCritical(f"min-norm subgradient has norm {mn:.3e} > {tol}")
    rng = np.random.default_rng(seed)
    k = manifold.dim

    sharp = estimate_sharpness(f, manifold, x_star, r, n_samples, seed)
    sharp_ok = sharp.verdict == HOLDS

    if sharp_ok and k >= 1:
        rep = _representative(f, x_star)
        grad_norm = float(np.linalg.norm(riem_gradient(rep, manifold, x_star)))
        eigs = np.linalg.eigvalsh(riem_hessian(rep, manifold, x_star))
        if grad_norm <= tol and eigs.size and float(eigs[0]) < -tol:
            return ACTIVE_STRICT_SADDLE

    if sharp_ok:
        if k >= 1:
            if isinstance(manifold, AffineManifold):
                on_m = x_star + (_ball_points(rng, np.zeros(k), r, n_samples)
                                 @ manifold.basis.T)
            else:
                on_m = _project_batch(
                    manifold, _ball_points(rng, x_star, r, n_samples))
            f_star = f.value(x_star)
            min_on_m = all(f.value(y) >= f_star - tol for y in on_m)
        else:
            min_on_m = True
        if min_on_m:
            angle = estimate_angle_beta(f, manifold, x_star, r, n_samples, seed)
            if angle.estimate < 0.0:
                return SHARPLY_REPULSIVE

    ball = _ball_points(rng, x_star, r, n_samples)
    f_star = f.value(x_star)
    if np.all(f.value_batch(ball) >= f_star - tol):
        return LOCAL_MIN_CANDIDATE
    return OTHER


# -- shadowing-gap demo -----------------------------------------------------------


def apt_gap(T: float, t: float, n_grid: int = 10001) -> float:
    """Worst shadowing gap over a window [0, T] for the curve z(s) = 1/(s+1)
    against the flow of the sign differential inclusion.

    From any positive start z(t) the unique inclusion solution is
    x(h) = z(t) + h, so the gap is sup_h |z(t+h) - z(t) - h|, evaluated on a
    fine grid; closed form T + 1/(t+1) - 1/(t+T+1).
    """
    if T < 0 or t < 0:
        raise ValueError("window length and start time must be nonnegative")
    if T == 0:
        return 0.0
    h = np.linspace(0.0, T, n_grid)
    z_t = 1.0 / (t + 1.0)
    gap = np.abs(1.0 / (t + h + 1.0) - (z_t + h))
    return float(np.max(gap))
