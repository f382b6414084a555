"""Minimum-norm point in the convex hull of a finite generator set."""

from __future__ import annotations

import numpy as np

_TOL = 1e-14


def min_norm_point(generators: np.ndarray) -> np.ndarray:
    """Euclidean projection of the origin onto conv(generators).

    generators is an (m, d) array of hull vertices. Cases m <= 3 are solved
    by exact face enumeration; larger sets use Wolfe's min-norm-point
    algorithm (an active-set method), polished so the final duality gap is
    at machine precision.
    """
    g = np.atleast_2d(np.asarray(generators, dtype=float))
    m = g.shape[0]
    if m == 1:
        return g[0].copy()
    if m == 2:
        return _segment(g[0], g[1])
    if m == 3:
        return _triangle(g)
    return _wolfe(g)


def duality_gap(generators: np.ndarray, p: np.ndarray) -> float:
    """Optimality gap <p, p> - min_v <p, v> of a candidate projection p."""
    g = np.atleast_2d(np.asarray(generators, dtype=float))
    return float(p @ p - np.min(g @ p))


def _segment(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    dd = d @ d
    if dd <= _TOL * max(1.0, a @ a):
        return a.copy()
    t = min(1.0, max(0.0, -(a @ d) / dd))
    if t == 0.0:
        return a.copy()
    if t == 1.0:
        return b.copy()
    return (1.0 - t) * a + t * b


def _triangle(g: np.ndarray) -> np.ndarray:
    best = None
    best_sq = np.inf
    # interior of the affine hull: solve the 2x2 normal equations
    u, v = g[1] - g[0], g[2] - g[0]
    gram = np.array([[u @ u, u @ v], [u @ v, v @ v]])
    rhs = -np.array([g[0] @ u, g[0] @ v])
    if abs(np.linalg.det(gram)) > _TOL * max(1.0, gram[0, 0] * gram[1, 1]):
        s, t = np.linalg.solve(gram, rhs)
        if s >= 0.0 and t >= 0.0 and s + t <= 1.0:
            cand = g[0] + s * u + t * v
            return cand
    for i in range(3):
        for j in range(i + 1, 3):
            cand = _segment(g[i], g[j])
            sq = cand @ cand
            if sq < best_sq:
                best, best_sq = cand, sq
    return best


def _affine_min_norm(active: np.ndarray):
    """Min-norm point of the affine hull of the active set, with weights.

    Solved in the translated parameterization p = a_0 + sum t_i (a_i - a_0),
    which keeps the normal equations at the generator scale regardless of
    how far the hull sits from the origin.
    """
    r = active.shape[0]
    if r == 1:
        return np.ones(1), active[0].copy()
    base = active[0]
    diffs = active[1:] - base
    t, *_ = np.linalg.lstsq(diffs @ diffs.T, -(diffs @ base), rcond=None)
    w = np.empty(r)
    w[1:] = t
    w[0] = 1.0 - t.sum()
    return w, w @ active


def _wolfe(g: np.ndarray, max_iter: int = 1000) -> np.ndarray:
    m = g.shape[0]
    scale = max(1.0, float(np.max(np.abs(g)))) ** 2
    start = int(np.argmin(np.einsum("ij,ij->i", g, g)))
    support = [start]
    weights = np.array([1.0])
    p = g[start].copy()
    for _ in range(max_iter):
        scores = g @ p
        j = int(np.argmin(scores))
        if scores[j] >= p @ p - _TOL * scale:
            break
        if j not in support:
            support.append(j)
            weights = np.append(weights, 0.0)
        # minor cycle: pull the affine minimizer back into the simplex
        for _ in range(m + 1):
            active = g[support]
            w_aff, y = _affine_min_norm(active)
            if np.all(w_aff >= -1e-12):
                weights, p = np.maximum(w_aff, 0.0), y
                weights = weights / weights.sum()
                break
            neg = w_aff < weights
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, weights / (weights - w_aff), np.inf)
            theta = min(1.0, float(np.min(ratios)))
            weights = (1.0 - theta) * weights + theta * w_aff
            keep = weights > 1e-14
            if not np.any(keep):
                keep[int(np.argmax(w_aff))] = True
            support = [s for s, k in zip(support, keep) if k]
            weights = weights[keep]
            weights = weights / weights.sum()
            p = weights @ g[support]
    return p
