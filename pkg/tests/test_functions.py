import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from saddlelab.errors import MalformedFunction
from saddlelab.functions import (QuadAbsFunction, Region, builtin,
                                 catalog_names, from_piece_records, from_spec,
                                 tilt)

CATALOG_LIPSCHITZ = ["saddle_abs", "neg_abs", "double_abs", "abs_z",
                     "quad_min", "z_squared"]


class TestEvaluate:
    def test_saddle_abs_values(self):
        f = builtin("saddle_abs")
        assert f.value(np.array([1.0, 1.0])) == 0.0          # -1 + 1
        assert f.value(np.array([0.0, -2.0])) == 2.0

    def test_double_abs_value(self):
        f = builtin("double_abs")
        assert f.value(np.array([3.0, 1.0])) == -2.0          # -3 + 1

    def test_generic_matches_closed_form(self):
        f = builtin("saddle_abs")
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.normal(size=2)
            generic = super(QuadAbsFunction, f).value(x)
            assert abs(generic - f.value(x)) <= 1e-12

    def test_no_cover_raises(self):
        region = Region(((np.array([1.0, 0.0]), "+"),))
        pieces = [(region, builtin("saddle_abs").pieces[0][1])]
        from saddlelab.functions import PiecewiseSmoothFunction
        partial = PiecewiseSmoothFunction(2, pieces)
        with pytest.raises(MalformedFunction):
            partial.value(np.array([-1.0, 0.0]))


class TestClarkeGenerators:
    def test_on_kink(self):
        f = builtin("saddle_abs")
        gens = f.clarke_generators(np.array([0.5, 0.0])).generators
        assert gens.tolist() == [[-1.0, 1.0], [-1.0, -1.0]]

    def test_off_kink_single(self):
        f = builtin("saddle_abs")
        gens = f.clarke_generators(np.array([0.5, 0.2])).generators
        assert gens.tolist() == [[-1.0, 1.0]]

    def test_double_abs_origin_four(self):
        f = builtin("double_abs")
        gens = f.clarke_generators(np.zeros(2)).generators
        assert gens.shape == (4, 2)
        assert {tuple(g) for g in gens.tolist()} == {
            (1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)}

    def test_generic_path_agrees(self):
        f = builtin("saddle_abs")
        for x in ([0.5, 0.0], [0.5, 0.2], [0.0, 0.0]):
            x = np.array(x)
            fast = f.clarke_generators(x).generators
            generic = super(QuadAbsFunction, f).clarke_generators(x).generators
            assert np.array_equal(np.sort(fast, axis=0), np.sort(generic, axis=0))

    def test_consistency_with_finite_differences(self):
        # off the kink set the unique generator is the gradient
        rng = np.random.default_rng(7)
        h = 1e-7
        for name in CATALOG_LIPSCHITZ:
            f = builtin(name)
            count = 0
            for _ in range(2500):
                x = rng.uniform(-1, 1, size=f.dim)
                if np.any(np.abs(x) < 1e-3):
                    continue
                gens = f.clarke_generators(x).generators
                assert gens.shape[0] == 1
                fd = np.array([
                    (f.value(x + h * e) - f.value(x - h * e)) / (2 * h)
                    for e in np.eye(f.dim)])
                assert np.max(np.abs(gens[0] - fd)) <= 1e-5
                count += 1
            assert count > 1000


class TestMinNormSubgradient:
    def test_saddle_origin(self):
        f = builtin("saddle_abs")
        assert np.linalg.norm(f.min_norm_subgradient(np.zeros(2))) == 0.0

    def test_saddle_on_kink(self):
        # projection of the origin onto the segment (-1,-1)..(-1,1)
        f = builtin("saddle_abs")
        assert np.allclose(f.min_norm_subgradient(np.array([0.5, 0.0])),
                           [-1.0, 0.0])

    def test_double_abs_origin(self):
        f = builtin("double_abs")
        assert np.linalg.norm(f.min_norm_subgradient(np.zeros(2))) == 0.0

    def test_matches_hull_solver(self):
        rng = np.random.default_rng(1)
        for name in CATALOG_LIPSCHITZ:
            f = builtin(name)
            for _ in range(50):
                x = rng.uniform(-1, 1, size=f.dim)
                x[rng.integers(f.dim)] = 0.0
                fast = f.min_norm_subgradient(x)
                hull = f.clarke_generators(x).min_norm()
                assert np.linalg.norm(fast - hull) <= 1e-12


class TestSelection:
    def test_active_piece_on_kink(self):
        f = builtin("saddle_abs")
        v = f.select_subgradient(np.array([0.5, 0.0]), "active_piece")
        assert v.tolist() == [-1.0, 1.0]

    def test_min_norm_on_kink(self):
        f = builtin("saddle_abs")
        v = f.select_subgradient(np.array([0.5, 0.0]), "min_norm")
        assert np.allclose(v, [-1.0, 0.0])

    def test_interior_all_rules_agree(self):
        f = builtin("saddle_abs")
        x = np.array([0.5, 0.2])
        rng = np.random.default_rng(0)
        vs = [f.select_subgradient(x, rule, rng)
              for rule in ("active_piece", "min_norm", "random_vertex")]
        for v in vs:
            assert np.array_equal(v, [-1.0, 1.0])

    def test_random_vertex_needs_rng(self):
        f = builtin("saddle_abs")
        with pytest.raises(ValueError):
            f.select_subgradient(np.zeros(2), "random_vertex")

    def test_random_vertex_is_a_generator(self):
        f = builtin("double_abs")
        rng = np.random.default_rng(5)
        gens = {tuple(g) for g in
                f.clarke_generators(np.zeros(2)).generators.tolist()}
        for _ in range(50):
            v = f.select_subgradient(np.zeros(2), "random_vertex", rng)
            assert tuple(v.tolist()) in gens


class TestTilt:
    def test_zero_tilt_identity(self):
        f = builtin("saddle_abs")
        g = tilt(f, np.zeros(2))
        x = np.array([0.5, 0.0])
        assert np.array_equal(g.clarke_generators(x).generators,
                              f.clarke_generators(x).generators)

    def test_generator_shift(self):
        f = builtin("saddle_abs")
        g = tilt(f, np.array([0.1, 0.0]))
        gens = g.clarke_generators(np.array([0.5, 0.2])).generators
        assert np.allclose(gens, [[-1.1, 1.0]])

    def test_small_tilt_keeps_double_abs_critical(self):
        # the hull at the origin is the unit box, so any ||u|| < 1 tilt
        # leaves the origin critical
        f = builtin("double_abs")
        for u in ([0.3, 0.2], [-0.7, 0.5], [0.0, -0.9]):
            g = tilt(f, np.array(u))
            assert np.linalg.norm(g.min_norm_subgradient(np.zeros(2))) <= 1e-12

    @given(st.floats(-2, 2), st.floats(-2, 2))
    @settings(max_examples=50, deadline=None)
    def test_critical_iff_tilt_in_hull(self, u1, u2):
        # keep tilts away from the hull boundary, where the membership
        # question is numerically ill-posed
        assume(abs(abs(u1) - 1.0) > 1e-6 and abs(abs(u2) - 1.0) > 1e-6)
        f = builtin("double_abs")
        u = np.array([u1, u2])
        tilted = tilt(f, u)
        mn = np.linalg.norm(tilted.min_norm_subgradient(np.zeros(2)))
        in_box = max(abs(u1), abs(u2)) <= 1.0
        assert (mn <= 1e-9) == in_box


class TestCatalog:
    def test_names(self):
        for name in CATALOG_LIPSCHITZ + ["sqrt_kink", "separable"]:
            assert name in catalog_names()

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            builtin("does_not_exist")

    def test_separable_equals_saddle_abs(self):
        f = builtin("saddle_abs")
        g = builtin("separable", a=[-1.0], b=[1.0])
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = rng.normal(size=2)
            assert f.value(x) == g.value(x)
        x = np.array([0.5, 0.0])
        assert np.array_equal(f.clarke_generators(x).generators,
                              g.clarke_generators(x).generators)

    def test_separable_dimensions_and_manifold(self):
        g = builtin("separable", a=[-1.0, 2.0], b=[0.5, 0.5])
        assert g.dim == 4
        assert g.manifold.dim == 2
        assert np.array_equal(g.manifold.basis[:, 0], [1.0, 0.0, 0.0, 0.0])

    def test_separable_requires_positive_b(self):
        with pytest.raises(ValueError):
            builtin("separable", a=[1.0], b=[0.0])

    def test_continuity_across_boundaries(self):
        rng = np.random.default_rng(11)
        for name in CATALOG_LIPSCHITZ:
            f = builtin(name)
            for _ in range(200):
                x = rng.uniform(-1, 1, size=f.dim)
                x[rng.integers(f.dim)] = 0.0
                covering = f.covering_pieces(x)
                values = [p.value(x) for _, p in covering]
                assert max(values) - min(values) <= 1e-10

    def test_regions_partition(self):
        rng = np.random.default_rng(13)
        for name in CATALOG_LIPSCHITZ:
            f = builtin(name)
            for _ in range(300):
                x = rng.uniform(-1, 1, size=f.dim)
                if np.any(np.abs(x) < 1e-6):
                    continue
                strict = sum(r.strictly_contains(x) for r, _ in f.pieces)
                assert strict == 1

    def test_piece_gradients_match_finite_differences(self):
        rng = np.random.default_rng(17)
        h = 1e-6
        for name in CATALOG_LIPSCHITZ + ["sqrt_kink"]:
            f = builtin(name)
            for region, piece in f.pieces:
                for _ in range(20):
                    x = _point_inside(region, rng, f.dim)
                    g = np.asarray(piece.gradient(x))
                    fd = np.array([
                        (piece.value(x + h * e) - piece.value(x - h * e)) / (2 * h)
                        for e in np.eye(f.dim)])
                    assert np.max(np.abs(g - fd)) <= 1e-5 * max(
                        1.0, np.max(np.abs(g)))

    def test_lipschitz_bound(self):
        rng = np.random.default_rng(19)
        for name in CATALOG_LIPSCHITZ:
            f = builtin(name)
            assert f.locally_lipschitz
            lip = f.lipschitz_bound_on(np.zeros(f.dim), 1.0)
            for _ in range(200):
                x = rng.uniform(-0.7, 0.7, size=f.dim)
                y = rng.uniform(-0.7, 0.7, size=f.dim)
                assert abs(f.value(x) - f.value(y)) <= lip * np.linalg.norm(
                    x - y) + 1e-12

    def test_sqrt_kink_flagged(self):
        assert not builtin("sqrt_kink").locally_lipschitz


def _point_inside(region, rng, dim):
    for _ in range(100):
        x = rng.uniform(-1.0, 1.0, size=dim)
        if region.strictly_contains(x) and np.all(np.abs(x) > 0.05):
            return x
    # fall back to the sign pattern the region prescribes
    x = rng.uniform(0.2, 1.0, size=dim)
    for normal, sign in region.constraints:
        j = int(np.argmax(np.abs(normal)))
        x[j] = abs(x[j]) if sign == "+" else -abs(x[j])
    return x


class TestCustomPieces:
    def test_polynomial_records(self):
        # two pieces of -x0^2 + |x1| written as sign-pattern records
        records = [
            {"signs": ["*", "+"], "terms": [(-1.0, [2, 0]), (1.0, [0, 1])]},
            {"signs": ["*", "-"], "terms": [(-1.0, [2, 0]), (-1.0, [0, 1])]},
        ]
        f = from_piece_records(2, records)
        ref = builtin("saddle_abs")
        rng = np.random.default_rng(23)
        for _ in range(100):
            x = rng.normal(size=2)
            assert abs(f.value(x) - ref.value(x)) <= 1e-12
        gens = f.clarke_generators(np.array([0.5, 0.0])).generators
        assert np.allclose(np.sort(gens, axis=0),
                           np.sort(ref.clarke_generators(
                               np.array([0.5, 0.0])).generators, axis=0))

    def test_spec_round_trip(self):
        f = builtin("separable", a=[-1.0, 2.0], b=[0.5, 0.5])
        g = from_spec(f.spec)
        x = np.array([0.1, -0.2, 0.3, 0.0])
        assert f.value(x) == g.value(x)
        assert np.array_equal(f.clarke_generators(x).generators,
                              g.clarke_generators(x).generators)
