import numpy as np
import pytest

from shadowbench.closure import SetApprox
from shadowbench.maximality import (
    BracketError,
    GridSet,
    NonPremaxWitness,
    b_direction_heteroclinic_family,
    bracket,
    bracket_delta_for,
    constant_family,
    crovisier_set,
    local_product_check,
    maximal_invariant_set,
    unstable_segment_family,
    verify_nonpremax_witness,
)
from shadowbench.torus import (
    ToralAutomorphism,
    TorusPoint,
    minimal_lift,
    torus_distance,
    wrap,
)


class TestBracket:
    def test_bracket_of_point_with_itself(self, cat):
        x = TorusPoint((0.3, 0.7))
        b = bracket(cat, x, x, eps=0.1)
        assert b.point == x and b.s_distance == 0.0 and b.u_distance == 0.0

    def test_against_two_by_two_line_solve(self, cat, rng):
        # oracle: solve x + alpha v_u = y + beta v_s directly
        s = cat.splitting
        vu, vs = s.unstable_basis[:, 0], s.stable_basis[:, 0]
        for _ in range(50):
            x = TorusPoint(rng.random(2))
            w = rng.uniform(-0.05, 0.05, 2)
            y = TorusPoint(wrap(x.coords + w))
            lift = minimal_lift(y.coords - x.coords)
            alpha, _ = np.linalg.solve(np.column_stack([vu, -vs]), lift)
            expected = wrap(x.coords + alpha * vu)
            b = bracket(cat, x, y, eps=0.2)
            assert torus_distance(b.point, TorusPoint(expected)) < 1e-12

    def test_forward_backward_convergence_rates(self, cat, rng):
        # d(f^n(b), f^n(y)) <= C lambda_s^n eps, and the backward analog to x.
        # The matrix is integer, so f^n(b) - f^n(y) = A^n (b - y) mod 1
        # exactly; iterating the difference keeps relative precision where
        # subtracting two separately wrapped orbits floors out at
        # lambda_u^n * machine-eps.
        # doubles resolve the decay down to lambda_u^n * eps_mach; past
        # n ~ 14 the full-window check needs extended precision and lives in
        # the acceptance suite
        s = cat.splitting
        eps = 0.1
        for _ in range(20):
            x = TorusPoint(rng.random(2))
            y = TorusPoint(wrap(x.coords + rng.uniform(-0.03, 0.03, 2)))
            b = bracket(cat, x, y, eps=eps).point
            fb, fy = b, y
            bb, bx = b, x
            for n in range(15):
                assert torus_distance(fb, fy) <= s.C * s.lambda_s ** n * eps + 1e-12
                assert torus_distance(bb, bx) <= s.C * s.lambda_s ** n * eps + 1e-12
                fb, fy = cat.apply(fb), cat.apply(fy)
                bb, bx = cat.apply_inverse(bb), cat.apply_inverse(bx)

    def test_too_far_apart(self, cat):
        with pytest.raises(BracketError, match="no local bracket"):
            bracket(cat, TorusPoint((0, 0)), TorusPoint((0.4, 0.4)), eps=0.1)

    def test_eps_lift_gate(self, cat):
        with pytest.raises(BracketError, match="unique lift"):
            bracket(cat, TorusPoint((0, 0)), TorusPoint((0.01, 0)), eps=0.3)

    def test_wrap_invariance(self, cat):
        x = TorusPoint((0.99, 0.01))
        y = TorusPoint((0.01, 0.99))
        b1 = bracket(cat, x, y, eps=0.2)
        assert b1.s_distance <= 0.2 and b1.u_distance <= 0.2
        # consistency: bracket lies on W^u(x) and W^s(y)
        s = cat.splitting
        wu = minimal_lift(b1.point.coords - x.coords)
        assert np.linalg.norm(s.stable_component(wu)) < 1e-12
        ws = minimal_lift(b1.point.coords - y.coords)
        assert np.linalg.norm(s.unstable_component(ws)) < 1e-12


class TestLocalProductCheck:
    def test_singleton_passes_vacuously(self, cat):
        sa = SetApprox(np.array([[0.0, 0.0]]), 0.01)
        report = local_product_check(cat, sa, eps=0.1, delta=0.05, membership_tol=0.02)
        assert report.passed and report.pairs_tested == 0

    def test_full_torus_net_passes(self, cat):
        # the Anosov case: everything is in the set, brackets land in T^2
        n = 32
        grid = np.stack(np.meshgrid(*(np.arange(n) / n,) * 2), -1).reshape(-1, 2)
        sa = SetApprox(grid, resolution=1 / n, _validate=False)
        delta = bracket_delta_for(cat.splitting, 0.1)
        report = local_product_check(cat, sa, eps=0.1, delta=min(delta, 0.06),
                                     membership_tol=1 / n)
        assert report.pairs_tested > 0
        assert report.passed

    def test_two_periodic_points_fail_without_closure(self, cat):
        # nearest pair of period-4 points: their bracket is off the pair set
        pts = np.array([p.coords for p in cat.fixed_points(4)])
        best = (np.inf, None)
        for i in range(len(pts)):
            for j in range(len(pts)):
                if i < j:
                    d = torus_distance(TorusPoint(pts[i]), TorusPoint(pts[j]))
                    if 1e-9 < d < best[0]:
                        best = (d, (i, j))
        d, (i, j) = best
        assert d < 0.25
        sa = SetApprox(pts[[i, j]], 0.001)
        report = local_product_check(cat, sa, eps=0.24, delta=d * 1.05,
                                     membership_tol=0.002)
        assert report.pairs_tested == 2
        assert not report.passed and len(report.failures) == 2
        for f in report.failures:
            assert f.distance_to_set > 0.002

    def test_report_serialization(self, cat):
        sa = SetApprox(np.array([[0.0, 0.0]]), 0.01)
        d = local_product_check(cat, sa, 0.1, 0.05, 0.02).to_json_dict()
        assert d["passed"] is True and d["failures"] == []


class TestGridSet:
    def test_full_count(self):
        g = GridSet.full(2, 3)
        assert g.count == 64 and g.width == 0.125

    def test_minus_ball_and_contains(self):
        g = GridSet.full(2, 4).minus_ball(np.array([0.5, 0.5]), 0.1)
        assert g.count < 256
        assert not g.contains(TorusPoint((0.5, 0.5)))
        assert g.contains(TorusPoint((0.0, 0.0)))

    def test_rle_roundtrip(self, rng):
        mask = rng.random((16, 16)) < 0.4
        if not mask.any():
            mask[0, 0] = True
        g = GridSet(2, 4, mask)
        back = GridSet.from_rle(g.to_rle())
        assert np.array_equal(back.mask, g.mask)

    def test_coarsen(self):
        g = GridSet.full(2, 4).minus_ball(np.array([0.25, 0.25]), 0.2)
        coarse = g.coarsen()
        assert coarse.depth == 3
        # occupied children imply occupied parent
        for cell in g.cells():
            assert coarse.mask[tuple(cell // 2)]


class TestMaximalInvariantSet:
    def test_full_torus_invariant(self, cat):
        U = GridSet.full(2, 4)
        out = maximal_invariant_set(cat, U, n_iter=10)
        assert out.count == U.count  # Anosov: I_f(T^2) = T^2

    def test_block_without_invariant_points_empties(self, cat):
        U = GridSet.full(2, 5)
        mask = np.zeros_like(U.mask)
        mask[10:12, 3:5] = True  # block around (0.33, 0.11), no low-period points
        U = GridSet(2, 5, mask)
        centers = U.centers()
        # oracle: every cell center escapes the block quickly
        block_lo, block_hi = 3 / 32, 12 / 32
        for c in centers:
            x = TorusPoint(c)
            escaped = False
            for _ in range(8):
                x = cat.apply(x)
                if not (10 / 32 <= x.coords[0] < 12 / 32 and 3 / 32 <= x.coords[1] < 5 / 32):
                    escaped = True
                    break
            assert escaped
        out = maximal_invariant_set(cat, U, n_iter=20)
        assert out.count == 0

    def test_punctured_torus_keeps_origin(self, cat):
        U = GridSet.full(2, 4).minus_ball(np.array([0.3, 0.7]), 0.08)
        out = maximal_invariant_set(cat, U, n_iter=10)
        assert out.count > 0
        assert out.contains(TorusPoint((0.0, 0.0)))

    def test_idempotence(self, cat):
        U = GridSet.full(2, 4).minus_ball(np.array([0.3, 0.7]), 0.1)
        once = maximal_invariant_set(cat, U, n_iter=30)
        twice = maximal_invariant_set(cat, once, n_iter=5)
        assert np.array_equal(once.mask, twice.mask)

    def test_outer_approximation_contains_periodic_orbits(self, cat):
        # true invariant content of U is a subset of the grid answer
        U = GridSet.full(2, 5).minus_ball(np.array([0.55, 0.85]), 0.05)
        out = maximal_invariant_set(cat, U, n_iter=15)
        for p in cat.fixed_points(2):
            orbit_inside = all(
                U.contains(cat.iterate(p, k)) for k in range(2)
            )
            if orbit_inside:
                assert out.contains(p)

    def test_monotone_under_subdivision(self, cat):
        U4 = GridSet.full(2, 4).minus_ball(np.array([0.3, 0.7]), 0.1)
        # refine the same region so both computations start from one U
        refined = np.repeat(np.repeat(U4.mask, 2, axis=0), 2, axis=1)
        U5 = GridSet(2, 5, refined)
        out4 = maximal_invariant_set(cat, U4, n_iter=8)
        out5 = maximal_invariant_set(cat, U5, n_iter=8)
        # deeper subdivision never adds cells at the coarser projection
        assert not np.any(out5.coarsen().mask & ~out4.mask)


class TestCrovisierSet:
    def test_zero_radius_full_grid(self, crovisier):
        q = TorusPoint((0.5, 0.0))
        r = TorusPoint((0.0, 0.0))
        out = crovisier_set(crovisier, q, r, v_radius=0.0, depth=3, n_iter=3)
        assert out.count == 8 ** 4

    def test_excludes_puncture_keeps_far_fixed_point(self, crovisier):
        q = TorusPoint((0.5, 0.0))
        r = TorusPoint((0.0, 0.0))
        out = crovisier_set(crovisier, q, r, v_radius=2 / 16, depth=4, n_iter=4)
        assert not out.contains(TorusPoint((0.5, 0.0, 0.0, 0.0)))
        assert out.contains(TorusPoint((0.0, 0.0, 0.0, 0.0)))  # (p, r) stays
        assert 0 < out.count < 16 ** 4

    def test_q_must_be_fixed(self, crovisier):
        with pytest.raises(ValueError, match="not fixed"):
            crovisier_set(crovisier, TorusPoint((0.3, 0.3)), TorusPoint((0.0, 0.0)),
                          v_radius=0.1, depth=3, n_iter=2)

    def test_v_swallowing_grid_rejected(self, crovisier):
        with pytest.raises(ValueError, match="swallows"):
            crovisier_set(crovisier, TorusPoint((0.5, 0.0)), TorusPoint((0.0, 0.0)),
                          v_radius=1.1, depth=3, n_iter=2)

    def test_cat_map_variant_with_period_two_q(self, product):
        # the spec's default pairing: cat-map A has no second fixed point, so
        # q is realized as a period-2 point
        q = TorusPoint((0.8, 0.6))
        r = TorusPoint((0.0, 0.0))
        out = crovisier_set(product, q, r, v_radius=0.1, depth=3, n_iter=3,
                            q_period=2)
        assert 0 < out.count <= 8 ** 4


class TestWitness:
    def test_constant_family_inside_set(self, cat):
        lam = SetApprox(np.array([[0.0, 0.0]]), 0.01)
        fam = constant_family(cat, TorusPoint((0.0, 0.0)), n_window=20,
                              n_params=9, a=0.2)
        report = verify_nonpremax_witness(cat, lam, fam, tol=1e-6)
        assert report.conditions() == (True, True, True, False)

    def test_unstable_segments_do_not_return(self, cat):
        lam = SetApprox(np.array([[0.0, 0.0]]), 0.01)
        fam = unstable_segment_family(cat, TorusPoint((0.0, 0.0)), a=0.2,
                                      n_window=20, n_params=17)
        report = verify_nonpremax_witness(cat, lam, fam, tol=0.01)
        assert report.exact_orbit and report.base_in_set and report.leaves_set
        assert not report.uniform_approach

    def test_product_heteroclinic_family_all_four_pass(self, crovisier):
        # Lambda: net of the two invariant pieces {q} x T^2 and T^2 x {r}
        q = TorusPoint((0.5, 0.0))
        r = TorusPoint((0.0, 0.0))
        n = 16
        grid = np.stack(np.meshgrid(*(np.arange(n) / n,) * 2), -1).reshape(-1, 2)
        fiber_q = np.hstack([np.tile(q.coords, (len(grid), 1)), grid])
        slab_r = np.hstack([grid, np.tile(r.coords, (len(grid), 1))])
        lam = SetApprox.build(np.vstack([fiber_q, slab_r]), resolution=1 / n,
                              label="fiber-union")
        fam = b_direction_heteroclinic_family(
            crovisier, q, r, s_offset=0.25, a=0.2, n_window=30, n_params=21
        )
        report = verify_nonpremax_witness(crovisier.as_automorphism(), lam, fam,
                                          tol=1 / n)
        assert report.conditions() == (True, True, True, True), report.details

    def test_witness_window_must_contain_zero(self):
        with pytest.raises(ValueError, match="contain n = 0"):
            NonPremaxWitness(np.zeros((3, 2, 2)), n_start=1, a=0.1)
