import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vegpulse.gspt import (
    LayerParams,
    ShootingError,
    eig_p2,
    eig_p3,
    layer_jacobian,
    layer_rhs,
    pi_heteroclinic,
    shoot_theta0,
    skeleton_distance,
    slow_flow,
    w3_star,
    w_of_s,
    write_skeleton_csv,
)
from vegpulse.io import read_csv
from vegpulse.model import FIG4_PARAMS as P
from vegpulse.travelling import FastPoint, ScalingMap

LP = LayerParams(w_level=1.2, c=1.0224, D=4.5, H=1.0)
RNG = np.random.default_rng(7)


def complex_step_jacobian(p, lp):
    """Jacobian of layer_rhs in (v, q, s) by complex-step differentiation (exact to roundoff)."""
    J = np.zeros((3, 3))
    h = 1e-30
    for j in range(3):
        z = np.array(p, dtype=complex)
        z[j + 1] += 1j * h
        J[:, j] = layer_rhs(z, lp)[1:].imag / h
    return J


class TestLayerFlow:
    def test_equilibria(self):
        w = LP.w_level
        for pt in ((w, 0, 0, 0), (w, w, 0, 0), (w, 0, 0, 0.37)):
            assert np.all(layer_rhs(pt, LP) == 0)

    def test_jacobian_matches_complex_step(self):
        for pt in RNG.uniform([0.5, 0, -1, 0], [2, 2, 1, 1], (50, 4)):
            np.testing.assert_allclose(layer_jacobian(pt, LP), complex_step_jacobian(pt, LP),
                                       rtol=1e-13, atol=1e-13)

    def test_w_conserved_and_s_zero_invariant(self):
        y0 = np.array([1.2, 0.8, -0.1, 0.0])
        sol = solve_ivp(lambda t, y: layer_rhs(y, LP), (0, 10), y0, rtol=1e-10, atol=1e-10)
        assert np.max(np.abs(sol.y[0] - 1.2)) < 1e-12
        assert np.max(np.abs(sol.y[3])) < 1e-14

    def test_pi_invariant(self):
        a, D = LP.w_level, LP.D
        v, q = 0.3, 0.05
        y0 = np.array([a, v, q, (a - v - q) / D])
        sol = solve_ivp(lambda t, y: layer_rhs(y, LP), (0, 10), y0, rtol=1e-12, atol=1e-12)
        w, v, q, s = sol.y
        assert np.max(np.abs(a - v - q - D * s)) < 1e-8


class TestEigenstructure:
    def test_p2_hand_values(self):
        eq = eig_p2(LP)
        assert sorted(eq.eigenvalues) == pytest.approx(sorted([-1.06872, -0.26667, 1.44]), abs=1e-5)
        assert eq.hyperbolic

    def test_p2_eigenpairs(self):
        for _ in range(50):
            lp = LayerParams(*RNG.uniform([0.2, 0.2, 0.5, 0.1], [4, 3, 10, 3]))
            eq = eig_p2(lp)
            J = complex_step_jacobian(eq.point, lp)
            for lam, eta in zip(eq.eigenvalues, eq.eigenvectors.T):
                assert np.max(np.abs(J @ eta - lam * eta)) < 1e-10 * max(1.0, np.max(np.abs(J)) * np.max(np.abs(eta)))
            np.testing.assert_allclose(np.sort(np.linalg.eigvals(J).real), np.sort(eq.eigenvalues),
                                       atol=1e-10 * max(1, lp.w_level**2, lp.c3))

    def test_p2_stable_vectors(self):
        eq = eig_p2(LP)
        c3, a, D, H = LP.c3, LP.w_level, LP.D, LP.H
        np.testing.assert_allclose(eq.eigenvectors[:, 1], [-1, 1, 0])
        np.testing.assert_allclose(eq.eigenvectors[:, 2], [-c3 * D * D, a * D * H, c3 * D - a * H])

    def test_p2_h_zero_not_hyperbolic(self):
        eq = eig_p2(LayerParams(1.2, 1.0224, 4.5, 0.0))
        assert not eq.hyperbolic
        assert 0.0 in list(eq.eigenvalues)

    def test_p3_degenerates_at_zero(self):
        eq = eig_p3(LP, 0.0)
        assert sorted(eq.eigenvalues) == pytest.approx(sorted([0.0, 0.0, -LP.c3]), abs=1e-14)
        assert not eq.hyperbolic

    def test_p3_saddle_pair(self):
        eq = eig_p3(LayerParams(1.0, 1.0, 4.5, 1.0), 1.0)
        lam = np.sort(eq.eigenvalues)
        assert lam == pytest.approx([-1.61803399, 0.0, 0.61803399], abs=1e-8)

    def test_p3_vieta(self):
        for _ in range(100):
            c, H, sb = RNG.uniform([0.2, 0.1, 0.01], [3, 3, 3])
            eq = eig_p3(LayerParams(1.0, c, 4.5, H), sb)
            lam = np.sort(eq.eigenvalues)
            nonzero = lam[np.abs(lam) > 1e-12]
            assert len(nonzero) == 2
            assert np.prod(nonzero) == pytest.approx(-(c**3) * H * sb, rel=1e-10)

    def test_p3_closed_form_sign_flag(self):
        eq = eig_p3(LayerParams(1.0, 1.0, 4.5, 1.0), 1.0)
        # the closed form solves l^2 - c^3 l - c^3 H s: its roots are the negatives
        num = np.sort(eq.eigenvalues[np.abs(eq.eigenvalues) > 1e-12])
        np.testing.assert_allclose(np.sort(-eq.formula_eigenvalues), num, atol=1e-12)


@pytest.fixture(scope="module")
def unit():
    return shoot_theta0(1.0)


class TestShooting:
    def test_theta0(self, unit):
        assert unit.theta0 == pytest.approx(0.8615, abs=1e-3)

    def test_c_star_at_a(self, unit):
        assert (1.2 * unit.theta0) ** (2 / 3) == pytest.approx(1.0224, abs=1e-4)

    def test_launch_independence(self, unit):
        for h in (1e-5, 1e-7):
            assert shoot_theta0(1.0, h=h).theta0 == pytest.approx(unit.theta0, abs=1e-6)

    def test_scan_orientation(self, unit):
        outcomes = [o for _, o in unit.scan[:9]]
        assert outcomes[0] == -1 and outcomes[-1] == 1

    def test_bad_bracket_reports_scan(self):
        with pytest.raises(ShootingError) as err:
            shoot_theta0(1.0, c_bracket=(0.95, 1.2))
        assert len(err.value.scan) == 9

    def test_orbit_connects(self, unit):
        v, q = unit.orbit.T
        assert v[0] == pytest.approx(1.0, abs=1e-5)
        assert np.hypot(v[-1], q[-1]) < 1e-2


class TestPiHeteroclinic:
    def test_endpoints_and_plane(self):
        tau, pts = pi_heteroclinic(LP)
        a, D = LP.w_level, LP.D
        w, v, q, s = pts.T
        assert np.all(w == a)
        assert np.hypot(v[-1] - a, q[-1]) < 1e-8
        assert (v[0], q[0], s[0]) == (0.0, 0.0, a / D)
        assert np.max(np.abs(a - v - q - D * s)) < 1e-8

    def test_sink_eigenvalues(self):
        a, c3, k = LP.w_level, LP.c3, LP.H / LP.D
        J = np.array([[0.0, c3], [-k * a, -k * a - c3]])
        lam = np.sort(np.linalg.eigvals(J).real)
        stable = np.sort(eig_p2(LP).eigenvalues[1:])
        np.testing.assert_allclose(lam, stable, atol=1e-12)

    def test_refuses_h_zero(self):
        with pytest.raises(ValueError):
            pi_heteroclinic(LayerParams(1.2, 1.0, 4.5, 0.0))


class TestSlowFlow:
    m = ScalingMap.from_speed(0.03 / 0.005, 0.005, 1.2)  # delta = 0.03

    def test_closed_form_matches_ode(self):
        sig = np.linspace(-20, 0, 41)
        ic = (0.9, 0.2)
        cf = slow_flow(sig, ic, P, self.m, closed_form=True)
        ode = slow_flow(sig, ic, P, self.m, closed_form=False)
        np.testing.assert_allclose(cf.w, ode.w, atol=1e-8)
        np.testing.assert_allclose(cf.s, ode.s, atol=1e-8)

    def test_superslow_reduction(self):
        sig = np.linspace(-5, 5, 11)
        d, a = self.m.delta, self.m.a
        tr = slow_flow(sig, (a + 0.3, 0.0), P, self.m)
        assert np.all(tr.s == 0)
        np.testing.assert_allclose(tr.w, a + 0.3 * np.exp(d * sig / (1 + d)), rtol=1e-14)
        # w_zeta = (w - a)/(1 + delta) with zeta = delta sigma
        dwdz = np.gradient(tr.w, d * sig)
        np.testing.assert_allclose(dwdz[1:-1], ((tr.w - a) / (1 + d))[1:-1], rtol=1e-3)

    def test_graph_form(self):
        d, a, D = self.m.delta, self.m.a, P.D
        tr = slow_flow(np.linspace(-10, 1, 30), (0.9, 0.2), P, self.m)
        gamma = d * D / (1 + d)
        c1, c2 = 0.2, 0.9 - a
        k1 = (c2 - c1 * D) / (c1 * (1 + d)) ** gamma
        np.testing.assert_allclose(w_of_s(tr.s, k1, a, D, d), tr.w, rtol=1e-12)

    def test_delta_zero_line(self):
        s = np.linspace(0.01, 1, 20)
        np.testing.assert_allclose(w_of_s(s, -1.2, 1.2, 4.5, 0.0), 4.5 * s, atol=1e-15)

    def test_w3_star_in_family(self):
        d, a, D = self.m.delta, self.m.a, P.D
        s_star = a / D * 0.97
        assert w3_star(s_star, s_star, a, D, d) == pytest.approx(a)
        gamma = d * D / (1 + d)
        k1 = -D * s_star ** (1 - gamma) / (1 + d) ** gamma
        s = np.linspace(0.05, 0.5, 10)
        np.testing.assert_allclose(w3_star(s, s_star, a, D, d), w_of_s(s, k1, a, D, d), rtol=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            w_of_s(0.0, 1.0, 1.2, 4.5, 0.03)


class TestSkeleton:
    def test_structure(self, fig4_skeleton):
        sk = fig4_skeleton
        assert max(sk.junction_gaps()) < 1e-8
        assert [s.tag for s in sk.segments] == ["superslow", "slow", "fast1", "fast2"]
        ss = sk.segment("superslow").points
        assert np.all(ss[:, 1:] == 0)
        sl = sk.segment("slow").points
        assert np.all(sl[:, 1:3] == 0)
        np.testing.assert_allclose(sl[:, 0], P.D * sl[:, 3], rtol=1e-15)
        for tag in ("fast1", "fast2"):
            assert np.max(np.abs(sk.segment(tag).points[:, 0] - sk.a)) < 1e-8
        assert sk.s_star == pytest.approx(sk.a / P.D)
        assert sk.c_star == pytest.approx((sk.a * sk.theta0) ** (2 / 3), rel=1e-6)

    def test_s_star_limit(self):
        from vegpulse.gspt import assemble_skeleton

        sk = assemble_skeleton(P, ScalingMap(1.0, 1e-12, 1.2))
        assert sk.s_star == pytest.approx(0.26667, abs=1e-5)

    def test_self_distance_zero(self, fig4_skeleton):
        assert skeleton_distance(fig4_skeleton.points, fig4_skeleton) == 0.0

    def test_distance_detects_shift(self, fig4_skeleton):
        pts = fig4_skeleton.points.copy()
        pts[:, 1] += 0.1 * np.ptp(pts[:, 1])
        assert skeleton_distance(pts, fig4_skeleton) == pytest.approx(0.1, rel=1e-6)

    def test_csv_export(self, fig4_skeleton, tmp_path):
        path = write_skeleton_csv(fig4_skeleton, tmp_path / "sk.csv")
        data = read_csv(path)
        assert list(data) == ["tag", "tau", "w", "v", "q", "s"]
        assert len(data["w"]) == len(fig4_skeleton.points)
        np.testing.assert_array_equal(data["v"], fig4_skeleton.points[:, 1])
