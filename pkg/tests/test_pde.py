import json
import warnings

import numpy as np
import pytest

from vegpulse.model import FIG4_PARAMS as P
from vegpulse.pde import (
    FieldState,
    GaussianPulse,
    Grid1D,
    InitialCondition,
    PulseExtinctError,
    SimConfig,
    SimulationError,
    estimate_wave_speed,
    fig4_setup,
    simulate,
    step,
    track_peak,
    write_trajectory,
)

SCHEMES = ("characteristic", "mol-upwind")


def small_run(scheme="characteristic", n=512, t_end=2.0, **over):
    params = P.replace(**over) if over else P
    grid = Grid1D.from_length(100.0, n)
    ic = InitialCondition(0.5, 0.0, GaussianPulse(30.0, 0.8, 5.0))
    return simulate(ic, params, grid, SimConfig(t_end=t_end, output_every=0.5, scheme=scheme))


def numpy_klausmeier(u, v, n_steps, dt, dx, eps, A, B):
    """Two-component reference: upwind U_x, central V_xx, SSP-RK3."""

    def rhs(u, v):
        v2u = v * v * u
        du = A - u - v2u + (np.roll(u, -1) - u) / (eps * dx)
        dv = v2u - B * v + (np.roll(v, -1) - 2 * v + np.roll(v, 1)) / dx**2
        return du, dv

    for _ in range(n_steps):
        du, dv = rhs(u, v)
        u1, v1 = u + dt * du, v + dt * dv
        du, dv = rhs(u1, v1)
        u1, v1 = 0.75 * u + 0.25 * (u1 + dt * du), 0.75 * v + 0.25 * (v1 + dt * dv)
        du, dv = rhs(u1, v1)
        u, v = u / 3 + 2 / 3 * (u1 + dt * du), v / 3 + 2 / 3 * (v1 + dt * dv)
    return u, v


class TestConfig:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            Grid1D(8, 1.0)
        assert Grid1D.from_length(1000.0, 4096).dx == pytest.approx(1000 / 4096)

    def test_dt_bound(self):
        g = Grid1D.from_length(1000.0, 4096)
        cfg = SimConfig(t_end=1, output_every=0.1, cfl_safety=0.9)
        assert cfg.resolve_dt(P, g) == pytest.approx(0.9 * 0.005 * g.dx)

    def test_cfl_violation_refused(self):
        g = Grid1D.from_length(100.0, 256)
        cfg = SimConfig(t_end=1, output_every=0.1, dt=0.01)
        state = InitialCondition(P.A, 0.0, 0.0).build(g)
        with pytest.raises(SimulationError, match="CFL"):
            step(state, P, g, cfg)

    def test_bad_scheme(self):
        with pytest.raises(ValueError):
            SimConfig(t_end=1, output_every=0.1, scheme="spectral")


@pytest.mark.parametrize("scheme", SCHEMES)
class TestStep:
    def test_desert_fixed_point(self, scheme):
        g = Grid1D.from_length(1000.0, 4096)
        state = InitialCondition(P.A, 0.0, 0.0).build(g)
        new = step(state, P, g, SimConfig(t_end=1, output_every=1, scheme=scheme))
        assert np.max(np.abs(new.u - P.A)) < 1e-14
        assert np.max(np.abs(new.v)) < 1e-14
        assert np.max(np.abs(new.s)) < 1e-14

    def test_exact_water_ode(self, scheme):
        g = Grid1D.from_length(100.0, 64)
        cfg = SimConfig(t_end=1.0, output_every=1.0, dt=1e-4, scheme=scheme)
        traj = simulate(InitialCondition(0.5, 0.0, 0.0), P, g, cfg)
        exact = P.A + (0.5 - P.A) * np.exp(-1.0)
        assert traj.final.t == pytest.approx(1.0)
        assert np.max(np.abs(traj.final.u - exact)) < 1e-6

    def test_shift_equivariance(self, scheme):
        g = Grid1D.from_length(100.0, 512)
        base = InitialCondition(0.5, 0.1, GaussianPulse(30.0, 0.8, 5.0)).build(g)
        cfg = SimConfig(t_end=1.0, output_every=1.0, scheme=scheme)
        for k in (1, 37, 300):
            shifted = FieldState(0.0, np.roll(base.u, k), np.roll(base.v, k), np.roll(base.s, k))
            a = simulate(base, P, g, cfg).final
            b = simulate(shifted, P, g, cfg).final
            for fa, fb in ((a.u, b.u), (a.v, b.v), (a.s, b.s)):
                assert np.max(np.abs(np.roll(fa, k) - fb)) <= 1e-13

    def test_negative_data_rejected(self, scheme):
        g = Grid1D.from_length(100.0, 64)
        state = InitialCondition(-0.5, 0.0, 0.0).build(g)
        with pytest.raises(SimulationError, match="negative"):
            step(state, P, g, SimConfig(t_end=1, output_every=1, scheme=scheme))

    def test_nan_rejected(self, scheme):
        g = Grid1D.from_length(100.0, 64)
        state = InitialCondition(P.A, 0.0, 0.0).build(g)
        state.v[3] = np.nan
        cfg = SimConfig(t_end=1, output_every=1, scheme=scheme, check_nonnegative=False)
        with pytest.raises(SimulationError, match="non-finite"):
            step(state, P, g, cfg)


class TestSimulate:
    def test_zero_amplitude_goes_to_desert(self):
        g = Grid1D.from_length(100.0, 128)
        ic = InitialCondition(0.5, 0.3, GaussianPulse(30.0, 0.8, 0.0))
        traj = simulate(ic, P, g, SimConfig(t_end=60.0, output_every=10.0))
        f = traj.final
        assert np.all(f.v == 0)
        assert np.max(np.abs(f.u - P.A)) < 1e-12
        assert np.max(np.abs(f.s - 0.3 * np.exp(-60.0 / P.D))) < 1e-12

    def test_h_zero_matches_two_component_reference(self):
        P0 = P.replace(H=0.0)
        g = Grid1D.from_length(100.0, 256)
        cfg = SimConfig(t_end=1.0, output_every=1.0, scheme="mol-upwind")
        ic = InitialCondition(0.5, 0.2, GaussianPulse(30.0, 0.8, 5.0))
        traj = simulate(ic, P0, g, cfg)
        u0 = ic.build(g)
        u, v = numpy_klausmeier(u0.u, u0.v, traj.metadata["steps"], traj.dt, g.dx, P0.eps, P0.A, P0.B)
        assert np.max(np.abs(traj.final.u - u)) < 1e-10
        assert np.max(np.abs(traj.final.v - v)) < 1e-10 * max(1.0, np.abs(v).max())

    def test_metadata_and_cadence(self):
        traj = small_run()
        assert traj.times == pytest.approx(np.arange(0, 2.01, 0.5), abs=traj.dt)
        assert traj.metadata["steps"] > 0 and traj.metadata["wall_time_s"] >= 0

    def test_nonnegative_pulse(self):
        for scheme in SCHEMES:
            f = small_run(scheme).final
            assert min(f.u.min(), f.v.min(), f.s.min()) >= 0

    def test_deterministic(self):
        a, b = small_run().final, small_run().final
        assert np.array_equal(a.v, b.v) and np.array_equal(a.u, b.u)

    def test_thread_count_does_not_matter(self):
        import numba

        before = numba.get_num_threads()
        try:
            numba.set_num_threads(1)
            a = small_run().final
            numba.set_num_threads(min(2, numba.config.NUMBA_NUM_THREADS))
            b = small_run().final
        finally:
            numba.set_num_threads(before)
        assert np.max(np.abs(a.v - b.v)) <= 1e-13

    def test_write_trajectory(self, tmp_path):
        traj = small_run(t_end=1.0)
        paths = write_trajectory(traj, tmp_path, "x")
        assert (tmp_path / "run-x-t0.5000.csv") in paths
        meta = json.loads((tmp_path / "run-x.json").read_text())
        assert meta["grid"]["n_cells"] == 512
        assert meta["params"]["A"] == P.A
        header = (tmp_path / "run-x-t1.0000.csv").read_text().splitlines()[0]
        assert header == "x,u,v,s"


class TestSpeed:
    def frozen(self, v, n=20):
        return [FieldState(0.1 * k, np.ones_like(v), v, np.zeros_like(v)) for k in range(n)]

    def test_peak_subcell(self):
        dx = 0.1
        x = (np.arange(200) + 0.5) * dx
        v = np.exp(-((x - 7.3217) ** 2))
        assert track_peak(v, dx) == pytest.approx(7.3217, abs=1e-12)

    def test_frozen_field(self):
        v = np.exp(-((np.arange(100) - 40.3) ** 2) / 10)
        est = estimate_wave_speed(self.frozen(v), dx=0.5)
        assert abs(est.speed) < 1e-10
        assert est.r2 == 1.0

    def test_translating_gaussian_with_wrap(self):
        dx, n = 0.25, 400
        x = (np.arange(n) + 0.5) * dx
        snaps = []
        for k in range(40):
            c = (90.0 + 3.0 * 0.5 * k) % (n * dx)
            d = (x - c + 50) % 100 - 50
            snaps.append(FieldState(0.5 * k, np.ones(n), np.exp(-(d**2)), np.zeros(n)))
        est = estimate_wave_speed(snaps, dx=dx)
        assert est.speed == pytest.approx(3.0, abs=1e-9)
        assert est.window[0] == pytest.approx(4.0)

    def test_extinct(self):
        with pytest.raises(PulseExtinctError):
            estimate_wave_speed(self.frozen(np.full(50, 1e-8)), dx=1.0)

    def test_too_few_points(self):
        v = np.exp(-((np.arange(100) - 40.0) ** 2))
        with pytest.raises(ValueError):
            estimate_wave_speed(self.frozen(v, 8), dx=1.0)

    def test_erratic_motion_warns(self):
        rng = np.random.default_rng(3)
        n = 400
        snaps = []
        for k in range(30):
            c = 100 + rng.uniform(-40, 40)
            snaps.append(FieldState(k, np.ones(n), np.exp(-((np.arange(n) - c) ** 2)), np.zeros(n)))
        with pytest.warns(RuntimeWarning, match="r2"):
            estimate_wave_speed(snaps, dx=1.0)

    def test_explicit_window(self):
        v = np.exp(-((np.arange(100) - 40.0) ** 2))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            est = estimate_wave_speed(self.frozen(v, 30), window=(1.0, 2.5), dx=1.0)
        assert est.n_points == 16


def test_fig4_setup_defaults():
    params, grid, ic, cfg = fig4_setup()
    assert (params.A, params.B, params.D, params.H, params.eps) == (1.2, 0.45, 4.5, 1.0, 0.005)
    assert grid.length == 1000.0 and grid.n_cells == 16384
    assert ic.v0 == GaussianPulse(300.0, 0.4, 10.0)
    assert (ic.u0, ic.s0) == (0.5, 0.0)


@pytest.mark.slow
def test_grid_convergence(fig4_pulse):
    """Halving dx changes the measured speed by under 1%."""
    speeds = []
    for n in (16384, 32768):
        g = Grid1D.from_length(1000.0, n)
        traj = simulate(fig4_pulse.field_state(g), P, g, SimConfig(t_end=10.0, output_every=0.25))
        speeds.append(estimate_wave_speed(traj).speed)
    assert abs(speeds[1] - speeds[0]) / speeds[1] < 0.01, speeds
