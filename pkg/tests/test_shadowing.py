import numpy as np
import pytest

from shadowbench.shadowing import (
    FlowPseudoTrajectory,
    PseudoOrbit,
    Reparameterization,
    ShadowingRefusal,
    exact_shadow_linear,
    expansivity_test,
    flow_defect,
    flow_shadow,
    newton_shadow,
    pseudo_orbit_defect,
    pseudo_orbit_points_from_csv,
    pseudo_orbit_to_csv,
    shadow_operator,
    shift_pseudo,
    suspend_pseudo_orbit,
)
from shadowbench.torus import (
    SuspensionFlow,
    TorusPoint,
    minimal_lift,
    torus_distance,
    torus_distance_array,
    wrap,
)


def noisy_orbit(map, rng, length, eps, start=None):
    """Pseudo-orbit with each step perturbed by a vector of norm < eps."""
    x = rng.random(2) if start is None else np.asarray(start, float)
    pts = [x]
    for _ in range(length - 1):
        direction = rng.standard_normal(2)
        direction *= rng.uniform(0, eps) / np.linalg.norm(direction)
        x = wrap(map.matrix.astype(float) @ x + direction)
        pts.append(x)
    return np.array(pts)


class TestDefect:
    def test_true_orbit_zero_defect(self, cat):
        pts = cat.orbit_segment(TorusPoint((0.1, 0.2)), 0, 30)
        assert pseudo_orbit_defect(cat, pts) < 1e-12

    def test_single_step_definition(self, cat):
        pts = np.array([[0.0, 0.0], [0.01, 0.0]])
        assert pseudo_orbit_defect(cat, pts) == pytest.approx(0.01, abs=1e-15)

    def test_noise_bound(self, cat, rng):
        # perturbing orbit points by vectors of norm <= amp gives defect
        # d(A(x+n_j), x_{j+1}+n_{j+1}) <= (||A||_2 + 1) * amp
        amp = 1e-3
        exact = cat.orbit_segment(TorusPoint(rng.random(2)), 0, 50)
        noise = rng.standard_normal(exact.shape)
        noise *= (amp * rng.random((len(exact), 1))) / np.linalg.norm(noise, axis=1, keepdims=True)
        defect = pseudo_orbit_defect(cat, wrap(exact + noise))
        bound = (np.linalg.norm(cat.matrix.astype(float), 2) + 1.0) * amp
        assert 0 < defect <= bound

    def test_needs_two_points(self, cat):
        with pytest.raises(ValueError):
            pseudo_orbit_defect(cat, np.zeros((0, 2)))


class TestExactShadow:
    def test_true_orbit_shadows_itself(self, cat):
        pts = cat.orbit_segment(TorusPoint((0.3, 0.55)), -10, 10)
        po = PseudoOrbit.from_map(cat, pts, start_index=-10)
        res = exact_shadow_linear(cat, po)
        assert res.sup_distance < 1e-12
        assert torus_distance(res.point, TorusPoint((0.3, 0.55))) < 1e-12

    def test_single_error_k_bound_and_newton_cross_check(self, cat, rng):
        # length 41 centered at index 0, one injected error of 1e-4 at index 0
        eps = 1e-4
        pts = cat.orbit_segment(TorusPoint(rng.random(2)), -20, 0)
        x = pts[-1]
        direction = rng.standard_normal(2)
        x = wrap(cat.matrix.astype(float) @ x + eps * direction / np.linalg.norm(direction) * 0.999)
        tail = [x]
        for _ in range(19):
            x = wrap(cat.matrix.astype(float) @ x)
            tail.append(x)
        po = PseudoOrbit.from_map(cat, np.vstack([pts, tail]), start_index=-20)
        assert 0 < po.defect <= eps
        res = exact_shadow_linear(cat, po)
        K = cat.splitting.shadow_bound(adapted=False)
        assert K == pytest.approx(2.2360679, abs=1e-6)
        assert res.sup_distance <= K * eps
        newton = newton_shadow(cat, po)
        assert torus_distance(res.point, newton.point) < 1e-10

    def test_periodic_two_cycle_against_affine_fixed_point_solve(self, cat):
        # brute-force oracle: periodic corrections solve (I - A^2) u0 = -(A e0 + e1)
        cycle = np.array([[0.80, 0.60], [0.21, 0.40]])  # near the genuine 2-cycle
        po = PseudoOrbit.from_map(cat, cycle, periodic=True)
        A = cat.matrix.astype(float)
        e0 = minimal_lift(cycle[1] - A @ cycle[0])
        e1 = minimal_lift(cycle[0] - A @ cycle[1])
        u0 = np.linalg.solve(np.eye(2) - A @ A, -(A @ e0 + e1))
        expected = wrap(cycle[0] + u0)
        res = exact_shadow_linear(cat, po)
        assert torus_distance(res.point, TorusPoint(expected)) < 1e-12
        # the shadow is a genuine periodic orbit
        p2 = cat.iterate(res.point, 2)
        assert torus_distance(p2, res.point) < 1e-10

    def test_refusal_above_gate(self, cat):
        pts = np.array([[0.0, 0.0], [0.4, 0.0], [0.0, 0.4]])
        po = PseudoOrbit.from_map(cat, pts)
        assert po.defect > cat.splitting.max_shadow_defect
        with pytest.raises(ShadowingRefusal):
            exact_shadow_linear(cat, po)

    def test_gate_override(self, cat):
        pts = np.array([[0.0, 0.0], [0.4, 0.0], [0.0, 0.4]])
        po = PseudoOrbit.from_map(cat, pts)
        res = exact_shadow_linear(cat, po, max_defect=np.inf)
        assert res.residual < 1e-10  # still an exact orbit, just a loose shadow

    def test_shadow_bound_across_defect_scales(self, cat, rng):
        K = cat.splitting.shadow_bound(adapted=False)
        for eps in (1e-2, 1e-3, 1e-4):
            for _ in range(20):
                po = PseudoOrbit.from_map(cat, noisy_orbit(cat, rng, 120, eps))
                res = exact_shadow_linear(cat, po)
                assert res.sup_distance <= K * max(po.defect, 1e-300)

    def test_periodic_long_cycle_numerically_stable(self, cat, rng):
        po = PseudoOrbit.from_map(cat, noisy_orbit(cat, rng, 400, 1e-3), periodic=False)
        pts = po.points
        # close it up into a periodic pseudo-orbit by jumping back to the start
        gap = torus_distance_array(cat.apply_array(pts[-1:]), pts[:1])[0]
        if gap < cat.splitting.max_shadow_defect:
            per = PseudoOrbit.from_map(cat, pts, periodic=True)
            res = exact_shadow_linear(cat, per)
            assert res.residual < 1e-9


class TestNewtonShadow:
    def test_true_orbit_converges_immediately(self, cat):
        pts = cat.orbit_segment(TorusPoint((0.12, 0.34)), 0, 40)
        po = PseudoOrbit.from_map(cat, pts)
        res = newton_shadow(cat, po)
        assert res.converged and res.iterations <= 1
        assert torus_distance(res.point, TorusPoint((0.12, 0.34))) < 1e-12

    def test_matches_exact_linear_formula(self, cat, rng):
        for _ in range(30):
            po = PseudoOrbit.from_map(cat, noisy_orbit(cat, rng, 100, 1e-3))
            exact = exact_shadow_linear(cat, po)
            newton = newton_shadow(cat, po, tol=1e-12)
            assert newton.converged
            assert torus_distance(exact.point, newton.point) < 1e-10
            assert newton.residual < 1e-10

    def test_matches_exact_on_periodic(self, cat, rng):
        cycle = wrap(np.array([[0.8, 0.6], [0.2, 0.4]]) + rng.uniform(-1e-3, 1e-3, (2, 2)))
        po = PseudoOrbit.from_map(cat, cycle, periodic=True)
        exact = exact_shadow_linear(cat, po)
        newton = newton_shadow(cat, po)
        assert torus_distance(exact.point, newton.point) < 1e-10

    def test_refusal_above_gate(self, cat):
        pts = np.array([[0.0, 0.0], [0.4, 0.0], [0.0, 0.4]])
        po = PseudoOrbit.from_map(cat, pts)
        assert po.defect >= 0.4 - 1e-12
        with pytest.raises(ShadowingRefusal):
            newton_shadow(cat, po)

    def test_product_system_four_dimensional(self, product, rng):
        F = product.as_automorphism()
        x = rng.random(4)
        pts = [x]
        for _ in range(60):
            x = wrap(F.matrix.astype(float) @ x + rng.uniform(-5e-4, 5e-4, 4))
            pts.append(x)
        po = PseudoOrbit.from_map(F, np.array(pts))
        exact = exact_shadow_linear(F, po)
        newton = newton_shadow(F, po)
        assert newton.converged
        assert torus_distance(exact.point, newton.point) < 1e-10


class TestShiftEquivariance:
    def test_zero_shift_is_identity(self, cat, rng):
        po = PseudoOrbit.from_map(cat, noisy_orbit(cat, rng, 50, 1e-3), start_index=-25)
        assert np.array_equal(shift_pseudo(po, 0).points, po.points)
        assert shift_pseudo(po, 0).start_index == po.start_index

    @pytest.mark.parametrize("n", [1, -1, 3])
    def test_operator_equivariance(self, cat, rng, n):
        # T(sigma^n po) and f^n(T(po)) computed independently by the series
        po = PseudoOrbit.from_map(cat, noisy_orbit(cat, rng, 200, 1e-3), start_index=-100)
        lhs = shadow_operator(cat, shift_pseudo(po, n)).point
        rhs = cat.iterate(shadow_operator(cat, po).point, n)
        assert torus_distance(lhs, rhs) < 1e-9

    def test_equivariance_on_periodic(self, cat):
        po = PseudoOrbit.from_map(cat, np.array([[0.8, 0.6], [0.2, 0.4]]), periodic=True)
        lhs = shadow_operator(cat, shift_pseudo(po, 1)).point
        rhs = cat.apply(shadow_operator(cat, po).point)
        assert torus_distance(lhs, rhs) < 1e-9


class TestExpansivity:
    def test_identical_points(self, cat):
        p = TorusPoint((0.3, 0.4))
        assert expansivity_test(cat, p, p, a=0.1, N=50)

    def test_unstable_pair_separates_quickly(self, cat):
        v = cat.splitting.unstable_basis[:, 0]
        p = TorusPoint((0.3, 0.4))
        q = TorusPoint(wrap(p.coords + 1e-3 * v))
        assert not expansivity_test(cat, p, q, a=0.1, N=50)
        # separation step oracle: 1e-3 * lambda_u^n > 0.1 first at n = 5
        lam = cat.splitting.lambda_u
        predicted = int(np.ceil(np.log(100) / np.log(lam)))
        assert predicted == 5
        d = 0.0
        fp, fq = p, q
        for n in range(1, 13):
            fp, fq = cat.apply(fp), cat.apply(fq)
            d = torus_distance(fp, fq)
            if d >= 0.1:
                break
        assert 4 <= n <= 6

    def test_generic_pair_fails(self, cat, rng):
        for _ in range(20):
            p = TorusPoint(rng.random(2))
            direction = rng.standard_normal(2)
            q = TorusPoint(wrap(p.coords + 1e-3 * direction / np.linalg.norm(direction)))
            assert not expansivity_test(cat, p, q, a=0.1, N=50)

    def test_uniqueness_of_shadowing_via_expansivity(self, cat, rng):
        # two shadow candidates for one pseudo-orbit must coincide
        po = PseudoOrbit.from_map(cat, noisy_orbit(cat, rng, 150, 1e-3), start_index=-75)
        a = cat.splitting.expansivity_estimate
        r1 = exact_shadow_linear(cat, po)
        r2 = newton_shadow(cat, po)
        assert r1.sup_distance < a / 2 and r2.sup_distance < a / 2
        assert torus_distance(r1.point, r2.point) < 1e-9


class TestFlowShadowing:
    def test_exact_trajectory_identity_reparameterization(self, cat):
        flow = SuspensionFlow.over(cat)
        orbit = cat.orbit_segment(TorusPoint((0.3, 0.55)), 0, 10)
        po = PseudoOrbit.from_map(cat, orbit)
        traj = suspend_pseudo_orbit(flow, po, h=0.25)
        assert traj.defect < 1e-12
        res = flow_shadow(flow, traj, delta=1e-6)
        assert res.sup_distance < 1e-10
        assert res.reparameterization.max_slope_deviation() == 0.0

    def test_noisy_base_orbit_shadowed(self, cat, rng):
        flow = SuspensionFlow.over(cat)
        po = PseudoOrbit.from_map(cat, noisy_orbit(cat, rng, 30, 1e-3))
        traj = suspend_pseudo_orbit(flow, po, h=0.5)
        K = cat.splitting.shadow_bound(adapted=False)
        res = flow_shadow(flow, traj, delta=2 * K * 1e-3)
        assert res.sup_distance <= K * po.defect + 1e-9
        assert res.reparameterization.distortion <= res.sup_distance + 1e-12

    def test_insufficient_samples(self, cat):
        flow = SuspensionFlow.over(cat)
        traj = FlowPseudoTrajectory(np.array([[0.1, 0.2]]), np.array([0.0]), h=1.0)
        with pytest.raises(ValueError, match="insufficient samples"):
            flow_shadow(flow, traj, delta=0.1)

    def test_flow_defect_matches_base_defect_scale(self, cat, rng):
        flow = SuspensionFlow.over(cat)
        po = PseudoOrbit.from_map(cat, noisy_orbit(cat, rng, 12, 1e-3))
        traj = suspend_pseudo_orbit(flow, po, h=0.5)
        assert po.defect <= flow_defect(flow, traj) <= 3 * po.defect + 1e-12


class TestReparameterization:
    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError, match="increasing"):
            Reparameterization(((0.0, 0.0), (1.0, -0.5)), 0.1)

    def test_slope_deviation_and_inverse(self):
        rep = Reparameterization(((0.0, 0.0), (1.0, 1.05), (2.0, 2.0)), 0.06)
        assert rep.max_slope_deviation() == pytest.approx(0.05, abs=1e-12)
        inv = rep.inverse()
        assert inv(rep(0.7)) == pytest.approx(0.7, abs=1e-12)


class TestSerialization:
    def test_csv_roundtrip(self, cat, rng, tmp_path):
        po = PseudoOrbit.from_map(cat, noisy_orbit(cat, rng, 20, 1e-3), start_index=-5)
        path = tmp_path / "po.csv"
        pseudo_orbit_to_csv(po, path)
        pts, start = pseudo_orbit_points_from_csv(path)
        assert start == -5
        assert np.allclose(pts, po.points, atol=1e-15)

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("index,x0,x1\n0,0.1,0.2\n1,nope,0.3\n")
        with pytest.raises(ValueError, match="line 3"):
            pseudo_orbit_points_from_csv(path)
