"""Manifolds, projections, tangent spaces and Riemannian derivatives.

Two manifold representations are supported: affine subspaces given by a base
point and an orthonormal tangent basis, and implicit manifolds given by a
constraint map with a Jacobian oracle, valid near a reference point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateStep, NoConvergence, SingularConstraint

_ORTHO_TOL = 1e-12
_ON_MANIFOLD_TOL = 1e-8


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AffineManifold:
    """Affine subspace ``base_point + span(basis)``.

    ``basis`` is a d x k matrix with orthonormal columns; k = 0 encodes a
    single point.
    """

    base_point: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        base = _readonly(self.base_point)
        basis = np.array(self.basis, dtype=float)
        if basis.ndim != 2:
            basis = basis.reshape(base.shape[0], -1)
        if basis.shape[0] != base.shape[0]:
            raise ValueError("basis rows must match the ambient dimension")
        gram = basis.T @ basis
        if gram.size and np.max(np.abs(gram - np.eye(basis.shape[1]))) > _ORTHO_TOL:
            raise ValueError("tangent basis columns must be orthonormal to 1e-12")
        object.__setattr__(self, "base_point", base)
        object.__setattr__(self, "basis", _readonly(basis))

    @property
    def ambient_dim(self) -> int:
        return self.base_point.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class ImplicitManifold:
    """Zero set of ``constraint`` near ``reference_point``.

    ``constraint`` maps R^d -> R^(d-k) and ``jacobian`` returns its
    (d-k) x d Jacobian. Projection is only trusted within
    ``validity_radius`` of the reference point.
    """

    constraint: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    reference_point: np.ndarray
    dim: int
    validity_radius: float = 0.5

    def __post_init__(self):
        ref = _readonly(self.reference_point)
        object.__setattr__(self, "reference_point", ref)
        jac = np.atleast_2d(self.jacobian(ref))
        expected = ref.shape[0] - self.dim
        if jac.shape != (expected, ref.shape[0]):
            raise ValueError(f"jacobian at reference must be {expected}x{ref.shape[0]}")
        if np.linalg.matrix_rank(jac) < expected:
            raise SingularConstraint("constraint Jacobian rank deficient at reference point")

    @property
    def ambient_dim(self) -> int:
        return self.reference_point.shape[0]


Manifold = AffineManifold | ImplicitManifold


@dataclass(frozen=True)
class TangentProjector:
    """Orthogonal projector onto the tangent space at ``manifold_point``."""

    matrix: np.ndarray
    manifold_point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))
        object.__setattr__(self, "manifold_point", _readonly(self.manifold_point))

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


def unit_sphere(dim: int, radius: float = 1.0, reference_point=None,
                validity_radius: float | None = None) -> ImplicitManifold:
    """Sphere of the given radius, as an implicit manifold."""
    if reference_point is None:
        reference_point = np.zeros(dim)
        reference_point[0] = radius
    if validity_radius is None:
        validity_radius = 0.5 * radius

    def constraint(y):
        return np.array([y @ y - radius ** 2])

    def jacobian(y):
        return 2.0 * np.asarray(y, dtype=float)[None, :]

    return ImplicitManifold(constraint, jacobian, reference_point, dim - 1,
                            validity_radius)


def _correct_onto_constraint(m: ImplicitManifold, y: np.ndarray,
                             tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Gauss-Newton correction of y onto {constraint = 0}."""
    y = np.array(y, dtype=float)
    for _ in range(max_iter):
        g = np.atleast_1d(m.constraint(y))
        if np.max(np.abs(g)) <= tol:
            return y
        jac = np.atleast_2d(m.jacobian(y))
        gram = jac @ jac.T
        try:
            lam = np.linalg.solve(gram, g)
        except np.linalg.LinAlgError as exc:
            raise SingularConstraint("constraint Jacobian rank deficient") from exc
        y = y - jac.T @ lam
    g = np.atleast_1d(m.constraint(y))
    if np.max(np.abs(g)) <= tol:
        return y
    raise NoConvergence("constraint correction did not converge", last_iterate=y,
                        residual=float(np.max(np.abs(g))))


def project(m: Manifold, x: np.ndarray) -> np.ndarray:
    """Closest point to x on the manifold.

    Affine manifolds are projected in closed form. Implicit manifolds use a
    damped Gauss-Newton iteration on the stationarity system: alternately
    correct onto the constraint set and move along the tangent component of
    x - y, halving the step whenever the distance to x increases.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(m, AffineManifold):
        b = m.basis
        return m.base_point + b @ (b.T @ (x - m.base_point))

    if np.linalg.norm(x - m.reference_point) > m.validity_radius:
        raise ValueError("query point outside the projection validity radius")
    y = _correct_onto_constraint(m, x)
    best = float(np.linalg.norm(x - y))
    for _ in range(100):
        proj = tangent_projector(m, y)
        t = proj(x - y)
        t_norm = float(np.linalg.norm(t))
        if t_norm <= 1e-12:
            return y
        step = 1.0
        for _ in range(30):
            try:
                y_new = _correct_onto_constraint(m, y + step * t)
            except NoConvergence:
                step *= 0.5
                continue
            dist_new = float(np.linalg.norm(x - y_new))
            if dist_new <= best + 1e-15:
                y, best = y_new, dist_new
                break
            step *= 0.5
        else:
            raise NoConvergence("projection line search stalled", last_iterate=y,
                                residual=t_norm)
    raise NoConvergence("projection did not converge", last_iterate=y,
                        residual=t_norm)


def tangent_projector(m: Manifold, y: np.ndarray) -> TangentProjector:
    """Orthogonal projector onto T_y M for a point y on the manifold."""
    y = np.asarray(y, dtype=float)
    if isinstance(m, AffineManifold):
        resid = np.linalg.norm(y - m.base_point - m.basis @ (m.basis.T @ (y - m.base_point)))
        if resid > _ON_MANIFOLD_TOL:
            raise ValueError(f"point is off the manifold (residual {resid:.2e})")
        return TangentProjector(m.basis @ m.basis.T, y)

    g = np.atleast_1d(m.constraint(y))
    if np.max(np.abs(g)) > _ON_MANIFOLD_TOL:
        raise ValueError(f"point is off the manifold (residual {np.max(np.abs(g)):.2e})")
    jac = np.atleast_2d(m.jacobian(y))
    gram = jac @ jac.T
    if np.linalg.matrix_rank(jac) < jac.shape[0]:
        raise SingularConstraint("constraint Jacobian rank deficient")
    d = y.shape[0]
    return TangentProjector(np.eye(d) - jac.T @ np.linalg.solve(gram, jac), y)


def tangent_basis(m: Manifold, y: np.ndarray) -> np.ndarray:
    """Orthonormal basis of T_y M as a d x k matrix."""
    if isinstance(m, AffineManifold):
        return np.array(m.basis)
    jac = np.atleast_2d(m.jacobian(np.asarray(y, dtype=float)))
    _, s, vt = np.linalg.svd(jac)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1.0))) if s.size else 0
    return vt[rank:].T


def riem_gradient(representative, m: Manifold, y: np.ndarray) -> np.ndarray:
    """Riemannian gradient: tangent projection of the representative's gradient."""
    y = np.asarray(y, dtype=float)
    proj = tangent_projector(m, y)
    return proj(np.asarray(representative.gradient(y), dtype=float))


def riem_hessian(representative, m: Manifold, y: np.ndarray) -> np.ndarray:
    """Riemannian Hessian in tangent coordinates (k x k, symmetrized).

    Differentiates the tangent field G(x) = P_T grad F at the projection of x,
    by central differences along the tangent basis directions, and reads the
    result in tangent coordinates.
    """
    y = np.asarray(y, dtype=float)
    basis = tangent_basis(m, y)
    k = basis.shape[1]
    if k == 0:
        return np.zeros((0, 0))
    h = max(1e-5, 1e-5 * float(np.linalg.norm(y)))

    def tangent_field(x):
        p = project(m, x)
        proj = tangent_projector(m, p)
        return proj(np.asarray(representative.gradient(p), dtype=float))

    cols = np.empty((y.shape[0], k))
    for j in range(k):
        step = h * basis[:, j]
        if np.array_equal(y + step, y):
            raise DegenerateStep("finite-difference step underflowed")
        cols[:, j] = (tangent_field(y + step) - tangent_field(y - step)) / (2.0 * h)
    hess = basis.T @ cols
    return 0.5 * (hess + hess.T)


def subspace_aperture(e1: np.ndarray, e2: np.ndarray) -> float:
    """Largest distance from a unit vector of span(e1) to span(e2).

    Bases are orthonormalized internally; an empty e1 gives 0.
    """
    q1 = _orthonormalize(e1)
    if q1.shape[1] == 0:
        return 0.0
    q2 = _orthonormalize(e2)
    resid = q1 - q2 @ (q2.T @ q1)
    return float(np.linalg.norm(resid, ord=2))


def _orthonormalize(basis: np.ndarray) -> np.ndarray:
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    if basis.shape[1] == 0:
        return basis
    q, r = np.linalg.qr(basis)
    keep = np.abs(np.diag(r)) > 1e-12 * max(1.0, np.abs(r).max())
    return q[:, keep]


def manifold_distance(m: Manifold, x: np.ndarray) -> float:
    """Euclidean distance from x to the manifold."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - project(m, x)))
