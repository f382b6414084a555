"""Piecewise-smooth test functions with exact subdifferential oracles.

A function is a finite list of smooth pieces, each valid on a polyhedral
sign-pattern region, continuous across shared boundaries. For this class the
convex hull of the active piece gradients is exactly the Clarke
subdifferential, which is what makes the downstream certifiers crisp.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import minnorm
from .errors import MalformedFunction
from .geometry import AffineManifold, Manifold

DEFAULT_BOUNDARY_TOL = 1e-12

SELECTION_RULES = ("min_norm", "active_piece", "random_vertex")


@dataclass(frozen=True)
class SmoothPiece:
    """One smooth piece: closed-form value/gradient/Hessian oracles."""

    piece_id: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass(frozen=True)
class Region:
    """Polyhedral region given by sign constraints on linear functionals.

    Each constraint is a pair (normal, sign) with sign in {'+', '-', '0'},
    requiring <normal, x> to be nonnegative, nonpositive or zero. Membership
    is tested up to ``boundary_tolerance``.
    """

    constraints: tuple
    boundary_tolerance: float = DEFAULT_BOUNDARY_TOL

    def contains(self, x: np.ndarray) -> bool:
        tol = self.boundary_tolerance
        for normal, sign in self.constraints:
            s = float(normal @ x)
            if sign == "+" and s < -tol:
                return False
            if sign == "-" and s > tol:
                return False
            if sign == "0" and abs(s) > tol:
                return False
        return True

    def strictly_contains(self, x: np.ndarray) -> bool:
        tol = self.boundary_tolerance
        for normal, sign in self.constraints:
            s = float(normal @ x)
            if sign == "+" and s <= tol:
                return False
            if sign == "-" and s >= -tol:
                return False
            if sign == "0":
                return False
        return True


@dataclass(frozen=True)
class SubgradientSet:
    """Finite generator list whose convex hull is the subdifferential."""

    generators: np.ndarray
    point: np.ndarray

    def min_norm(self) -> np.ndarray:
        return minnorm.min_norm_point(self.generators)


@dataclass(frozen=True)
class Tilt:
    """Linear tilt u: replaces f by f - <u, .>."""

    u: np.ndarray


class PiecewiseSmoothFunction:
    """Finitely many smooth pieces on sign-pattern regions.

    Instances are immutable after construction and safe for concurrent use.
    Optional annotations carry the canonical active manifold, the critical
    point of interest and a smooth representative of f on the manifold.
    """

    def __init__(self, dim: int, pieces: Sequence[tuple[Region, SmoothPiece]],
                 name: str = "", manifold: Manifold | None = None,
                 critical_point: np.ndarray | None = None,
                 representative: SmoothPiece | None = None,
                 spec: dict | None = None,
                 locally_lipschitz: bool = True):
        self.dim = int(dim)
        self.pieces = tuple(sorted(pieces, key=lambda rp: rp[1].piece_id))
        self.name = name
        self.manifold = manifold
        self.critical_point = None if critical_point is None else np.asarray(
            critical_point, dtype=float)
        self.representative = representative
        self.spec = spec
        self.locally_lipschitz = locally_lipschitz

    # -- oracles ----------------------------------------------------------

    def covering_pieces(self, x: np.ndarray) -> list[tuple[Region, SmoothPiece]]:
        x = np.asarray(x, dtype=float)
        return [(r, p) for r, p in self.pieces if r.contains(x)]

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        for region, piece in self.pieces:
            if region.contains(x):
                return float(piece.value(x))
        raise MalformedFunction(f"no region covers point {x}")

    def clarke_generators(self, x: np.ndarray) -> SubgradientSet:
        x = np.asarray(x, dtype=float)
        covering = self.covering_pieces(x)
        if not covering:
            raise MalformedFunction(f"no region covers point {x}")
        gens, seen = [], set()
        for _, piece in covering:
            g = np.asarray(piece.gradient(x), dtype=float)
            key = g.tobytes()
            if key not in seen:
                seen.add(key)
                gens.append(g)
        return SubgradientSet(np.array(gens), x)

    def min_norm_subgradient(self, x: np.ndarray) -> np.ndarray:
        return self.clarke_generators(x).min_norm()

    def select_subgradient(self, x: np.ndarray, rule: str,
                           rng: np.random.Generator | None = None) -> np.ndarray:
        if rule == "min_norm":
            return self.min_norm_subgradient(x)
        if rule == "active_piece":
            x = np.asarray(x, dtype=float)
            for region, piece in self.pieces:
                if region.contains(x):
                    return np.asarray(piece.gradient(x), dtype=float)
            raise MalformedFunction(f"no region covers point {x}")
        if rule == "random_vertex":
            if rng is None:
                raise ValueError("random_vertex needs a caller-owned random stream")
            gens = self.clarke_generators(x).generators
            return gens[int(rng.integers(gens.shape[0]))]
        raise ValueError(f"unknown selection rule {rule!r}")

    def lipschitz_bound_on(self, center: np.ndarray, radius: float,
                           n_samples: int = 256, seed: int = 0) -> float:
        """Max generator norm over a sampled ball: a local Lipschitz bound."""
        center = np.asarray(center, dtype=float)
        rng = np.random.default_rng(seed)
        bound = float(np.linalg.norm(self.clarke_generators(center).generators,
                                     axis=1).max())
        for _ in range(n_samples):
            u = rng.standard_normal(self.dim)
            u /= np.linalg.norm(u)
            x = center + radius * rng.random() ** (1.0 / self.dim) * u
            norms = np.linalg.norm(self.clarke_generators(x).generators, axis=1)
            bound = max(bound, float(norms.max()))
        return bound

    # -- batch hooks (overridden with closed forms where available) --------

    def value_batch(self, xs: np.ndarray) -> np.ndarray:
        return np.array([self.value(x) for x in xs])

    def min_norm_batch(self, xs: np.ndarray) -> np.ndarray:
        return np.array([self.min_norm_subgradient(x) for x in xs])

    def min_generator_inner(self, x: np.ndarray, w: np.ndarray) -> float:
        """min over generators v of <v, w> (= min of the linear form on the hull)."""
        return float(np.min(self.clarke_generators(x).generators @ w))

    def min_generator_inner_batch(self, xs: np.ndarray, ws: np.ndarray) -> np.ndarray:
        return np.array([self.min_generator_inner(x, w) for x, w in zip(xs, ws)])


class QuadAbsFunction(PiecewiseSmoothFunction):
    """sum_i a_i x_i^2 over head coordinates plus sum_j c_j |x_j| over tail.

    The 2^m sign regions are materialized so all generic machinery applies,
    but the hot oracles (value, generators, selection) use closed forms that
    are exact for the product structure of the hull.
    """

    def __init__(self, head: Sequence[float], tail: Sequence[float],
                 boundary_tolerance: float = DEFAULT_BOUNDARY_TOL, **kwargs):
        head = np.asarray(head, dtype=float)
        tail = np.asarray(tail, dtype=float)
        if np.any(tail == 0.0):
            raise ValueError("tail coefficients must be nonzero")
        if tail.size > 12:
            raise ValueError("too many kink coordinates (region count is 2^m)")
        k, m = head.size, tail.size
        dim = k + m
        pieces = []
        for pid, signs in enumerate(itertools.product((1.0, -1.0), repeat=m)):
            s = np.array(signs)
            constraints = tuple(
                (_unit(dim, k + j), "+" if s[j] > 0 else "-") for j in range(m))
            region = Region(constraints, boundary_tolerance)
            pieces.append((region, _quad_abs_piece(pid, head, tail, s, k)))
        super().__init__(dim, pieces, **kwargs)
        self.head = head
        self.tail = tail
        self.head.setflags(write=False)
        self.tail.setflags(write=False)
        self.boundary_tolerance = boundary_tolerance

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        k = self.head.size
        return float(self.head @ (x[:k] * x[:k]) + self.tail @ np.abs(x[k:]))

    def value_batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        k = self.head.size
        return (xs[:, :k] ** 2) @ self.head + np.abs(xs[:, k:]) @ self.tail

    def clarke_generators(self, x: np.ndarray) -> SubgradientSet:
        x = np.asarray(x, dtype=float)
        k, m = self.head.size, self.tail.size
        tol = self.boundary_tolerance
        head_grad = 2.0 * self.head * x[:k]
        choices = []
        for j in range(m):
            xj = x[k + j]
            if xj > tol:
                choices.append((self.tail[j],))
            elif xj < -tol:
                choices.append((-self.tail[j],))
            else:
                choices.append((self.tail[j], -self.tail[j]))
        gens = np.empty((int(np.prod([len(c) for c in choices], initial=1)), k + m))
        for i, combo in enumerate(itertools.product(*choices)):
            gens[i, :k] = head_grad
            gens[i, k:] = combo
        return SubgradientSet(gens, x)

    def min_norm_subgradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = self.head.size
        tol = self.boundary_tolerance
        out = np.empty(self.dim)
        out[:k] = 2.0 * self.head * x[:k]
        xt = x[k:]
        out[k:] = np.where(np.abs(xt) > tol, self.tail * np.sign(xt), 0.0)
        return out

    def min_norm_batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        k = self.head.size
        tol = self.boundary_tolerance
        out = np.empty_like(xs)
        out[:, :k] = 2.0 * self.head * xs[:, :k]
        xt = xs[:, k:]
        out[:, k:] = np.where(np.abs(xt) > tol, self.tail * np.sign(xt), 0.0)
        return out

    def select_subgradient(self, x: np.ndarray, rule: str,
                           rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k, m = self.head.size, self.tail.size
        tol = self.boundary_tolerance
        if rule == "min_norm":
            return self.min_norm_subgradient(x)
        out = np.empty(self.dim)
        out[:k] = 2.0 * self.head * x[:k]
        if rule == "active_piece":
            # lowest-id covering piece has '+' on every within-tolerance coordinate
            for j in range(m):
                xj = x[k + j]
                out[k + j] = self.tail[j] if xj >= -tol else -self.tail[j]
            return out
        if rule == "random_vertex":
            if rng is None:
                raise ValueError("random_vertex needs a caller-owned random stream")
            signs = 2.0 * rng.integers(0, 2, size=m) - 1.0
            for j in range(m):
                xj = x[k + j]
                if xj > tol:
                    out[k + j] = self.tail[j]
                elif xj < -tol:
                    out[k + j] = -self.tail[j]
                else:
                    out[k + j] = self.tail[j] * signs[j]
            return out
        raise ValueError(f"unknown selection rule {rule!r}")

    def min_generator_inner(self, x: np.ndarray, w: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        k = self.head.size
        tol = self.boundary_tolerance
        total = float((2.0 * self.head * x[:k]) @ w[:k])
        xt, wt = x[k:], w[k:]
        fixed = np.abs(xt) > tol
        total += float(np.sum(np.where(fixed, self.tail * np.sign(xt) * wt,
                                       -np.abs(self.tail * wt))))
        return total

    def min_generator_inner_batch(self, xs: np.ndarray, ws: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        ws = np.asarray(ws, dtype=float)
        k = self.head.size
        tol = self.boundary_tolerance
        head_part = np.einsum("ij,ij->i", 2.0 * self.head * xs[:, :k], ws[:, :k])
        xt, wt = xs[:, k:], ws[:, k:]
        terms = np.where(np.abs(xt) > tol, self.tail * np.sign(xt) * wt,
                         -np.abs(self.tail * wt))
        return head_part + terms.sum(axis=1)


def _unit(dim: int, j: int) -> np.ndarray:
    e = np.zeros(dim)
    e[j] = 1.0
    e.setflags(write=False)
    return e


def _quad_abs_piece(pid: int, head: np.ndarray, tail: np.ndarray,
                    signs: np.ndarray, k: int) -> SmoothPiece:
    coeffs = tail * signs

    def value(x, head=head, coeffs=coeffs, k=k):
        return float(head @ (x[:k] * x[:k]) + coeffs @ x[k:])

    def gradient(x, head=head, coeffs=coeffs, k=k):
        g = np.empty(k + coeffs.size)
        g[:k] = 2.0 * head * x[:k]
        g[k:] = coeffs
        return g

    def hessian(x, head=head, k=k, m=coeffs.size):
        h = np.zeros((k + m, k + m))
        h[:k, :k] = np.diag(2.0 * head)
        return h

    return SmoothPiece(pid, value, gradient, hessian)


# -- tilts ------------------------------------------------------------------


def tilt(f: PiecewiseSmoothFunction, u) -> PiecewiseSmoothFunction:
    """The tilted function x -> f(x) - <u, x>, with the same regions."""
    u = np.asarray(u.u if isinstance(u, Tilt) else u, dtype=float)
    pieces = [(region, _tilt_piece(piece, u)) for region, piece in f.pieces]
    return PiecewiseSmoothFunction(
        f.dim, pieces, name=f"{f.name}_tilted" if f.name else "tilted",
        manifold=None, critical_point=None, representative=None,
        locally_lipschitz=f.locally_lipschitz)


def _tilt_piece(piece: SmoothPiece, u: np.ndarray) -> SmoothPiece:
    def value(x, piece=piece, u=u):
        return float(piece.value(x) - u @ x)

    def gradient(x, piece=piece, u=u):
        return np.asarray(piece.gradient(x), dtype=float) - u

    hessian = piece.hessian
    return SmoothPiece(piece.piece_id, value, gradient, hessian)


# -- custom polynomial pieces ------------------------------------------------


def polynomial_piece(pid: int, dim: int, terms: Sequence[tuple[float, Sequence[int]]]
                     ) -> SmoothPiece:
    """Smooth piece from a list of (coefficient, exponent-vector) terms."""
    coefs = np.array([float(c) for c, _ in terms])
    expo = np.array([[int(e) for e in es] for _, es in terms], dtype=float)
    if expo.size and expo.shape[1] != dim:
        raise ValueError("exponent vectors must have one entry per coordinate")

    def value(x, coefs=coefs, expo=expo):
        if coefs.size == 0:
            return 0.0
        return float(coefs @ np.prod(np.asarray(x, dtype=float) ** expo, axis=1))

    def gradient(x, coefs=coefs, expo=expo, dim=dim):
        x = np.asarray(x, dtype=float)
        g = np.zeros(dim)
        for c, es in zip(coefs, expo):
            for k in range(dim):
                if es[k] == 0:
                    continue
                es_k = es.copy()
                es_k[k] -= 1
                g[k] += c * es[k] * np.prod(x ** es_k)
        return g

    def hessian(x, coefs=coefs, expo=expo, dim=dim):
        x = np.asarray(x, dtype=float)
        h = np.zeros((dim, dim))
        for c, es in zip(coefs, expo):
            for k in range(dim):
                if es[k] == 0:
                    continue
                for l in range(dim):
                    es_kl = es.copy()
                    es_kl[k] -= 1
                    factor = c * es[k]
                    if es_kl[l] == 0:
                        continue
                    factor *= es_kl[l]
                    es_kl[l] -= 1
                    h[k, l] += factor * np.prod(x ** es_kl)
        return h

    return SmoothPiece(pid, value, gradient, hessian)


def from_piece_records(dim: int, records: Sequence[dict],
                       boundary_tolerance: float = DEFAULT_BOUNDARY_TOL,
                       name: str = "custom") -> PiecewiseSmoothFunction:
    """Build a function from (sign-pattern, polynomial-term) records.

    Each record has ``signs``: a list over coordinates from {'+', '-', '0',
    '*'} ('*' leaves the coordinate unconstrained), and ``terms``: a list of
    (coefficient, exponent-vector) pairs.
    """
    pieces = []
    for pid, rec in enumerate(records):
        signs = rec["signs"]
        if len(signs) != dim:
            raise ValueError("sign pattern length must equal the dimension")
        constraints = tuple((_unit(dim, j), s) for j, s in enumerate(signs)
                            if s != "*")
        region = Region(constraints, boundary_tolerance)
        pieces.append((region, polynomial_piece(pid, dim, rec["terms"])))
    spec = {"kind": "custom", "dim": dim,
            "records": [{"signs": list(r["signs"]),
                         "terms": [[float(c), [int(e) for e in es]]
                                   for c, es in r["terms"]]} for r in records]}
    return PiecewiseSmoothFunction(dim, pieces, name=name, spec=spec)


# -- catalog -----------------------------------------------------------------


def _line_manifold(dim: int = 2) -> AffineManifold:
    """The first coordinate axis: R x {0}^(dim-1)."""
    basis = np.zeros((dim, 1))
    basis[0, 0] = 1.0
    return AffineManifold(np.zeros(dim), basis)


def _head_manifold(k: int, m: int) -> AffineManifold:
    basis = np.zeros((k + m, k))
    for i in range(k):
        basis[i, i] = 1.0
    return AffineManifold(np.zeros(k + m), basis)


def _sqrt_kink_function() -> PiecewiseSmoothFunction:
    """|z| + y*sqrt(|z|): the tangential gradient term sqrt(|z|) is not
    Lipschitz in the distance to the kink line, so the tangential-control
    ratio diverges near it. Not locally Lipschitz around that line."""

    def val_pos(x):
        return float(x[1] + x[0] * np.sqrt(x[1])) if x[1] > 0 else float(x[1])

    def grad_pos(x):
        s = np.sqrt(x[1]) if x[1] > 0 else 0.0
        dz = 1.0 + (x[0] / (2.0 * s) if s > 0 else 0.0)
        return np.array([s, dz])

    def val_neg(x):
        return float(-x[1] + x[0] * np.sqrt(-x[1])) if x[1] < 0 else float(-x[1])

    def grad_neg(x):
        s = np.sqrt(-x[1]) if x[1] < 0 else 0.0
        dz = -1.0 - (x[0] / (2.0 * s) if s > 0 else 0.0)
        return np.array([s, dz])

    e2 = _unit(2, 1)
    pieces = [
        (Region(((e2, "+"),)), SmoothPiece(0, val_pos, grad_pos)),
        (Region(((e2, "-"),)), SmoothPiece(1, val_neg, grad_neg)),
    ]
    rep = SmoothPiece(0, lambda x: 0.0, lambda x: np.zeros(2),
                      lambda x: np.zeros((2, 2)))
    return PiecewiseSmoothFunction(
        2, pieces, name="sqrt_kink", manifold=_line_manifold(),
        critical_point=np.zeros(2), representative=rep,
        spec={"kind": "builtin", "name": "sqrt_kink", "params": {}},
        locally_lipschitz=False)


def builtin(name: str, **params) -> PiecewiseSmoothFunction:
    """Catalog of named test functions with canonical manifold annotations."""
    if name == "separable":
        a = np.atleast_1d(np.asarray(params["a"], dtype=float))
        b = np.atleast_1d(np.asarray(params["b"], dtype=float))
        if np.any(b <= 0):
            raise ValueError("separable requires strictly positive kink weights")
        f = QuadAbsFunction(a, b, name="separable",
                            manifold=_head_manifold(a.size, b.size),
                            critical_point=np.zeros(a.size + b.size),
                            spec={"kind": "builtin", "name": "separable",
                                  "params": {"a": a.tolist(), "b": b.tolist()}})
        f.representative = f.pieces[0][1]
        return f
    if name not in _CATALOG:
        raise KeyError(f"unknown catalog function {name!r}")
    if params:
        raise ValueError(f"catalog function {name!r} takes no parameters")
    return _CATALOG[name]()


def _quad_abs_entry(name, head, tail, manifold=None):
    def build():
        f = QuadAbsFunction(head, tail, name=name,
                            manifold=manifold if manifold is not None
                            else _head_manifold(len(head), len(tail)),
                            critical_point=np.zeros(len(head) + len(tail)),
                            spec={"kind": "builtin", "name": name, "params": {}})
        f.representative = f.pieces[0][1]
        return f
    return build


_CATALOG: dict[str, Callable[[], PiecewiseSmoothFunction]] = {
    # -y^2 + |z|: the archetypal sharp saddle along the first axis
    "saddle_abs": _quad_abs_entry("saddle_abs", [-1.0], [1.0]),
    # -y^2 - |z|: same saddle but subgradients point away from the axis
    "neg_abs": _quad_abs_entry("neg_abs", [-1.0], [-1.0]),
    # -|y| + |z|: critical at the origin, neither a minimum nor a saddle
    "double_abs": _quad_abs_entry("double_abs", [], [-1.0, 1.0],
                                  AffineManifold(np.zeros(2), np.zeros((2, 0)))),
    # |z| alone: convex, flat along the axis
    "abs_z": _quad_abs_entry("abs_z", [0.0], [1.0]),
    # y^2 + |z|: sharp local minimum
    "quad_min": _quad_abs_entry("quad_min", [1.0], [1.0]),
    # z^2: smooth, gradient vanishes approaching the axis (sharpness fails)
    "z_squared": _quad_abs_entry("z_squared", [0.0, 1.0], [], _line_manifold()),
    "sqrt_kink": _sqrt_kink_function,
}


def catalog_names() -> tuple[str, ...]:
    return tuple(_CATALOG) + ("separable",)


def from_spec(spec: dict) -> PiecewiseSmoothFunction:
    """Rebuild a function from its declarative payload."""
    if spec["kind"] == "builtin":
        return builtin(spec["name"], **spec.get("params", {}))
    if spec["kind"] == "custom":
        records = [{"signs": r["signs"], "terms": [(c, es) for c, es in r["terms"]]}
                   for r in spec["records"]]
        return from_piece_records(spec["dim"], records)
    raise ValueError(f"unknown function spec kind {spec['kind']!r}")
