from fractions import Fraction
from itertools import product as iproduct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowbench.torus import (
    NotHyperbolicError,
    ProductSystem,
    SuspensionFlow,
    ToralAutomorphism,
    TorusPoint,
    cat_map,
    compute_splitting,
    minimal_lift,
    system_from_config,
    system_to_config,
    torus_distance,
)


def brute_force_distance(p, q):
    """Oracle: minimize Euclidean distance over the translate lattice {-1,0,1}^d."""
    pa, qa = np.asarray(p, float), np.asarray(q, float)
    best = np.inf
    for shift in iproduct((-1.0, 0.0, 1.0), repeat=len(pa)):
        best = min(best, float(np.linalg.norm(pa - qa + np.array(shift))))
    return best


class TestTorusDistance:
    def test_identity(self):
        assert torus_distance(TorusPoint((0, 0)), TorusPoint((0, 0))) == 0.0

    def test_wraparound(self):
        d = torus_distance(TorusPoint((0.9, 0.0)), TorusPoint((0.1, 0.0)))
        assert d == pytest.approx(0.2, abs=1e-15)

    def test_against_brute_force_lattice(self):
        p, q = (0.25, 0.25), (0.75, 0.75)
        expected = brute_force_distance(p, q)
        assert expected == pytest.approx(np.sqrt(0.5), abs=1e-15)
        assert torus_distance(TorusPoint(p), TorusPoint(q)) == pytest.approx(expected, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            torus_distance(TorusPoint((0, 0)), TorusPoint((0, 0, 0)))

    def test_metric_axioms_random_triples(self, rng):
        for _ in range(1000):
            p, q, r = (TorusPoint(rng.random(2)) for _ in range(3))
            dpq, dqp = torus_distance(p, q), torus_distance(q, p)
            assert dpq == pytest.approx(dqp, abs=1e-12)
            assert torus_distance(p, r) <= dpq + torus_distance(q, r) + 1e-12
            assert torus_distance(p, p) == 0.0
            assert dpq <= np.sqrt(2) / 2 + 1e-12

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=4))
    def test_bounded_by_half_diagonal(self, coords):
        p = TorusPoint(coords)
        q = TorusPoint([0.0] * len(coords))
        assert torus_distance(p, q) <= np.sqrt(len(coords)) / 2 + 1e-12


class TestApply:
    def test_fixed_point(self, cat):
        assert cat.apply(TorusPoint((0, 0))) == TorusPoint((0, 0))

    def test_exact_rational_arithmetic(self, cat):
        # [[2,1],[1,1]] @ (1/2, 1/2) = (3/2, 1) = (1/2, 0) mod 1
        p = TorusPoint((Fraction(1, 2), Fraction(1, 2)))
        image = cat.apply(p)
        assert image.exact == (Fraction(1, 2), Fraction(0))

    def test_inverse_roundtrip_random(self, cat, rng):
        for _ in range(100):
            p = TorusPoint(rng.random(2))
            back = cat.apply_inverse(cat.apply(p))
            assert torus_distance(p, back) < 1e-12

    def test_apply_array_matches_pointwise(self, cat, rng):
        P = rng.random((50, 2))
        imgs = cat.apply_array(P)
        for row, img in zip(P, imgs):
            assert torus_distance(cat.apply(TorusPoint(row)), TorusPoint(img)) < 1e-12


class TestSplitting:
    def test_cat_eigenvalues_from_characteristic_polynomial(self, cat):
        # roots of t^2 - 3t + 1
        roots = np.roots([1.0, -3.0, 1.0])
        lam_u, lam_s = max(roots), min(roots)
        assert cat.splitting.lambda_u == pytest.approx(lam_u, abs=1e-12)
        assert cat.splitting.lambda_s == pytest.approx(lam_s, abs=1e-12)
        assert cat.splitting.lambda_s == pytest.approx(1 / cat.splitting.lambda_u, abs=1e-12)

    def test_golden_ratio(self, golden):
        roots = np.roots([1.0, -1.0, -1.0])
        assert golden.splitting.lambda_u == pytest.approx(max(roots), abs=1e-12)

    def test_shear_not_hyperbolic(self):
        with pytest.raises(NotHyperbolicError):
            compute_splitting([[1, 1], [0, 1]])

    def test_stable_contraction_in_adapted_norm(self, cat):
        s = cat.splitting
        for col in s.stable_basis.T:
            img = s.matrix.astype(float) @ col
            assert s.adapted_norm(img) <= s.lambda_s * s.adapted_norm(col) * (1 + 1e-9)

    def test_unstable_expansion_in_adapted_norm(self, cat):
        s = cat.splitting
        for col in s.unstable_basis.T:
            img = s.matrix.astype(float) @ col
            assert s.adapted_norm(img) >= s.lambda_u * s.adapted_norm(col) * (1 - 1e-9)

    def test_splitting_spans_space(self, cat):
        s = cat.splitting
        assert s.stable_basis.shape[1] + s.unstable_basis.shape[1] == 2
        assert abs(np.linalg.det(s.basis)) > 1e-9

    def test_cat_splitting_orthonormal(self, cat):
        assert cat.splitting.C == pytest.approx(1.0, abs=1e-12)

    def test_component_decomposition(self, cat, rng):
        s = cat.splitting
        v = rng.standard_normal(2)
        recon = s.stable_component(v) + s.unstable_component(v)
        assert np.allclose(recon, v, atol=1e-12)


class TestFixedPoints:
    def test_cat_has_single_fixed_point(self, cat):
        assert cat.fixed_points() == [TorusPoint((0, 0))]

    def test_cat_period_two_count(self, cat):
        # |det(A^2 - I)| = 5 solutions of A^2 x = x
        pts = cat.fixed_points(2)
        assert len(pts) == 5
        for p in pts:
            assert torus_distance(cat.iterate(p, 2), p) < 1e-12

    def test_two_fixed_point_matrix(self):
        auto = ToralAutomorphism([[3, 1], [2, 1]])
        pts = auto.fixed_points()
        assert TorusPoint((0, 0)) in pts
        assert TorusPoint((Fraction(1, 2), Fraction(0))) in pts
        assert len(pts) == 2


class TestProductSystem:
    def test_domination_holds_for_default(self, product):
        sa = product.factor_a.splitting
        sb = product.factor_b.splitting
        assert sa.lambda_u > sb.lambda_u
        assert sa.lambda_s < sb.lambda_s

    def test_domination_violation_rejected(self, golden):
        with pytest.raises(ValueError, match="domination"):
            ProductSystem(golden, cat_map())

    def test_block_action(self, product, rng):
        F = product.as_automorphism()
        x, y = rng.random(2), rng.random(2)
        img = F.apply(TorusPoint(np.concatenate([x, y])))
        ax = product.factor_a.apply(TorusPoint(x))
        by = product.factor_b.apply(TorusPoint(y))
        assert np.allclose(img.coords, np.concatenate([ax.coords, by.coords]), atol=1e-12)


class TestSuspensionFlow:
    def test_time_zero_identity(self, cat):
        flow = SuspensionFlow.over(cat)
        state = (TorusPoint((0.3, 0.7)), 0.25)
        point, s = flow.flow_at(state, 0.0)
        assert point == state[0] and s == 0.25

    def test_fixed_point_integer_times(self, cat):
        flow = SuspensionFlow.over(cat)
        point, s = flow.flow_at((TorusPoint((0, 0)), 0.0), 3.0)
        assert point == TorusPoint((0, 0)) and s == pytest.approx(0.0, abs=1e-12)

    def test_integer_time_is_base_map(self, cat, rng):
        flow = SuspensionFlow.over(cat)
        p = TorusPoint(rng.random(2))
        point, s = flow.flow_at((p, 0.0), 1.0)
        assert torus_distance(point, cat.apply(p)) < 1e-12
        assert s == pytest.approx(0.0, abs=1e-12)

    def test_group_law_random_times(self, cat, rng):
        flow = SuspensionFlow.over(cat)
        for _ in range(50):
            state = (TorusPoint(rng.random(2)), float(rng.random()))
            t1, t2 = rng.uniform(-5, 5, size=2)
            p1, s1 = flow.flow_at(flow.flow_at(state, t1), t2)
            p2, s2 = flow.flow_at(state, t1 + t2)
            assert torus_distance(p1, p2) < 1e-10
            assert min(abs(s1 - s2), 1 - abs(s1 - s2)) < 1e-10

    def test_suspension_distance_respects_gluing(self, cat):
        flow = SuspensionFlow.over(cat)
        p = TorusPoint((0.3, 0.7))
        near_roof = (p, 0.999)
        past_roof = (cat.apply(p), 0.001)
        assert flow.distance(near_roof, past_roof) == pytest.approx(0.002, abs=1e-12)


class TestConfig:
    def test_single_matrix_roundtrip(self, cat):
        cfg = system_to_config(cat)
        rebuilt = system_from_config(cfg)
        assert np.array_equal(rebuilt.matrix, cat.matrix)

    def test_product_roundtrip(self, crovisier):
        cfg = system_to_config(crovisier)
        rebuilt = system_from_config(cfg)
        assert np.array_equal(rebuilt.factor_a.matrix, crovisier.factor_a.matrix)
        assert np.array_equal(rebuilt.factor_b.matrix, crovisier.factor_b.matrix)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            system_from_config({"nonsense": 1})


def test_minimal_lift_halfopen():
    v = minimal_lift(np.array([0.5, -0.5, 0.75, 0.25]))
    assert np.allclose(v, [0.5, 0.5, -0.25, 0.25])
