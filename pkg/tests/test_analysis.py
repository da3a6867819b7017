import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import gaussian_hat, radial_l2
from paraxial_verify.analysis import (
    EnergyTrace,
    check_inequalities,
    energy,
    fd_derivative,
    fit_slope,
    gronwall_check,
    run_comparison,
    sweep,
    tail_norm,
    z_samples,
)
from paraxial_verify.approximation import (
    InitialData,
    ansatz_spectrum,
    ansatz_z_derivative,
    initial_spectrum,
)
from paraxial_verify.errors import SweepAborted, TraceError
from paraxial_verify.propagators import HelmholtzState, rk4_oracle_evolve, schrodinger_evolve
from paraxial_verify.spectral import (
    SLOW,
    GridPolicy,
    KGrid,
    Params,
    SpectralField,
    l2s_norm,
    make_grid,
    mode_data,
    project_hyp,
)

GAUSS = InitialData.gaussian(1.0)


def delta_envelope(p):
    """Single unit node at K = 0: no transverse structure at all."""
    g = KGrid(4.0, 8, offset=False)
    v = np.zeros(g.shape, complex)
    v[g.index_of(0, 0)] = 1.0
    return SpectralField(g, v, SLOW)


@pytest.fixture(scope="module")
def run_02():
    p = Params(epsilon=0.2)
    return p, *run_comparison(p, GAUSS, z_sample_count=32)


class TestZSamples:
    def test_layout(self):
        p = Params(epsilon=0.1)
        z = z_samples(p, 64)
        assert z[0] == 0 and z[-1] == pytest.approx(p.z_max)
        assert len(z) == 64
        assert np.all(np.diff(z) > 0)
        # densified near zero
        assert np.sum(z < z[-1] / 63) > 5

    def test_minimum(self):
        with pytest.raises(ValueError):
            z_samples(Params(), 3)


class TestRunComparison:
    def test_initial_sample(self, run_02):
        p, report, trace = run_02
        prof = report.profile
        assert prof.z[0] == 0
        assert prof.hyp_error_hs[0] == 0 and prof.r_l2[0] == 0
        assert trace.E[0] == 0
        assert prof.error_hs[0] == pytest.approx(prof.tail[0], rel=1e-12)

    def test_exact_for_structureless_envelope(self):
        p = Params(epsilon=0.1)
        report, trace = run_comparison(p, GAUSS, 16, w_hat0=delta_envelope(p))
        assert report.sup_error_hs <= 1e-13 * report.profile.ansatz_l2
        assert report.sup_error_inf <= 1e-13
        assert np.max(trace.E) <= 1e-26 * report.profile.ansatz_l2**2

    def test_regression_anchor_eps_01(self):
        # frozen after the first verified run; cross-checked against RK4 below
        p = Params(epsilon=0.1)
        report, _ = run_comparison(p, GAUSS, 64)
        assert report.sup_error_hs == pytest.approx(0.017710607367298865, rel=1e-9)
        assert report.z_at_sup == pytest.approx(p.z_max)
        assert report.sup_error_hs / p.epsilon < 1.0

    def test_one_sample_against_rk4_path(self, run_02):
        p, report, _ = run_02
        grid = make_grid(p)
        modes = mode_data(grid, p)
        w0 = initial_spectrum(GAUSS, grid.scaled(1 / p.epsilon))
        state0 = HelmholtzState(
            project_hyp(ansatz_spectrum(w0, p, 0.0, grid), modes),
            project_hyp(ansatz_z_derivative(w0, p, 0.0, grid), modes),
        )
        i = 12
        z = float(report.profile.z[i])
        v = rk4_oracle_evolve(state0, modes, z, steps=int(z / 0.01) + 1).v_hat
        psi = ansatz_spectrum(schrodinger_evolve(w0, p, p.epsilon**2 * z), p, z, grid)
        err = l2s_norm(v.with_values(v.values - psi.values), p.s, modes)
        assert err == pytest.approx(report.profile.error_hs[i], rel=1e-6)

    def test_inequalities(self, run_02):
        p, report, _ = run_02
        iv = check_inequalities(report, p)
        assert iv.c3_holds and iv.gain_holds and iv.triangle_holds

    def test_inequalities_s1(self):
        p = Params(epsilon=0.2, s=1)
        report, _ = run_comparison(p, GAUSS, 16)
        iv = check_inequalities(report, p)
        assert iv.c3_holds and iv.gain_holds and iv.triangle_holds
        assert 0 < iv.gain_worst <= 1.0 + 1e-12

    def test_algebraic_regularity_enforced(self):
        with pytest.raises(ValueError, match="sA\\+1"):
            run_comparison(Params(epsilon=0.2), InitialData.algebraic(4.5), 16)


class TestEnergy:
    def test_single_node(self):
        g = KGrid(0.5, 1)  # one node at k = 0, dk^2 = 1
        m = mode_data(g, 1.0)
        R = SpectralField(g, np.array([[1.0 + 0j]]))
        dR = SpectralField(g, np.array([[0j]]))
        assert energy(R, dR, m) == 1.0

    def test_zero(self, small_grid):
        m = mode_data(small_grid, 1.0)
        z = SpectralField.zeros(small_grid)
        assert energy(z, z, m) == 0

    def test_c3_bound(self, small_grid, rng):
        omega = 1.3
        m = mode_data(small_grid, omega)
        R = project_hyp(SpectralField(small_grid, rng.normal(size=small_grid.shape) + 0j), m)
        dR = project_hyp(SpectralField(small_grid, rng.normal(size=small_grid.shape) + 0j), m)
        assert l2s_norm(R, 0) <= math.sqrt(2) / omega * math.sqrt(energy(R, dR, m)) * (1 + 1e-12)


def _trace(z, E, eps=0.1, C=1.0):
    return EnergyTrace(eps, z, E, fd_derivative(z, E), eps**2 * E + eps**4 * C, C)


class TestGronwall:
    def test_zero_forcing(self):
        z = np.linspace(0, 100, 20)
        E = np.zeros_like(z)
        p = Params(epsilon=0.1)
        v = gronwall_check(_trace(z, E, C=0.0), p)
        assert v.holds

    def test_real_run_holds(self, run_02):
        p, _, trace = run_02
        v = gronwall_check(trace, p)
        assert v.holds and v.pointwise_holds and v.integrated_holds
        assert v.max_excess < 0

    def test_growth_beyond_forcing_fails(self):
        # dE/dz = 2z exceeds eps^2 z^2 + eps^4 C for moderate z
        z = np.linspace(0, 10, 20)
        v = gronwall_check(_trace(z, z**2, C=1e-3), Params(epsilon=0.1))
        assert not v.pointwise_holds and not v.holds
        assert v.max_excess > 0

    def test_nonzero_start_fails(self):
        z = np.linspace(0, 100, 20)
        E = np.full_like(z, 1e-6)
        assert not gronwall_check(_trace(z, E), Params(epsilon=0.1)).holds

    def test_too_short(self):
        z = np.array([0.0, 1.0, 2.0])
        with pytest.raises(TraceError):
            gronwall_check(_trace(z, np.zeros(3)), Params())

    def test_fd_is_exact_on_quadratics(self):
        z = np.sort(np.random.default_rng(1).uniform(0, 5, 12))
        f = 3 * z**2 - z + 2
        d = fd_derivative(z, f)
        np.testing.assert_allclose(d[1:-1], 6 * z[1:-1] - 1, rtol=1e-10)
        assert np.isnan(d[0]) and np.isnan(d[-1])


class TestTailNorm:
    def test_gaussian_eps_01(self):
        p = Params(epsilon=0.1)
        w0 = initial_spectrum(GAUSS, make_grid(p).scaled(10.0))
        t = tail_norm(w0, p)
        oracle = radial_l2(gaussian_hat, 1 / (math.sqrt(2) * 0.1)) / 0.1
        assert oracle == pytest.approx(3.9177e-11, rel=1e-4)
        assert t == pytest.approx(oracle, rel=0.25)
        assert t**2 <= 1e-20

    def test_z_independent(self):
        p = Params(epsilon=0.2)
        w0 = initial_spectrum(GAUSS, make_grid(p).scaled(5.0))
        assert tail_norm(w0, p, 0.0) == pytest.approx(tail_norm(w0, p, p.z_max), rel=1e-12)

    def test_algebraic_exponent(self):
        # radial-integral oracle: local slope of the exact tail between neighbours
        pk = 5.5
        data = InitialData.algebraic(pk)
        eps = np.array([0.2, 0.1, 0.05])

        def exact(e):
            R = 1 / (math.sqrt(2) * e)
            v, _ = quad(lambda K: (1 + K * K) ** (-pk) * 2 * math.pi * K, R, np.inf, epsrel=1e-13)
            return math.sqrt(v) / e

        oracle = [exact(e) for e in eps]
        num = []
        for e in eps:
            p = Params(epsilon=e, sA=4)
            w0 = initial_spectrum(data, make_grid(p).scaled(1 / e))
            num.append(tail_norm(w0, p))
        np.testing.assert_allclose(num, oracle, rtol=0.02)
        oracle_slope = fit_slope(eps, oracle).slope
        assert fit_slope(eps, num).slope == pytest.approx(oracle_slope, abs=0.02)
        assert abs(oracle_slope - (pk - 2)) < 0.3

    def test_outer_grid_when_primary_too_small(self):
        p = Params(epsilon=0.1)
        data = InitialData.algebraic(5.5)
        small = KGrid(5.0, 100)  # physical extent 0.5 < cutoff 0.707
        w0 = initial_spectrum(data, small)
        with pytest.raises(ValueError, match="closed-form"):
            tail_norm(w0, p)
        t = tail_norm(w0, p, data=data)
        R = 1 / (math.sqrt(2) * 0.1)
        # the outer grid reaches 2 omega, so compare against the annulus R < |K| < 20 (square)
        inner, _ = quad(lambda K: (1 + K * K) ** (-5.5) * 2 * math.pi * K, R, 20.0, epsrel=1e-12)
        assert t == pytest.approx(math.sqrt(inner) / 0.1, rel=0.05)

    def test_outer_grid_extends_primary(self):
        p = Params(epsilon=0.1)
        data = InitialData.algebraic(5.5)
        w0 = initial_spectrum(data, make_grid(p).scaled(10.0))
        base = tail_norm(w0, p, data=data)
        extended = tail_norm(w0, p, data=data, outer_k_max=8.0, outer_spacing=0.02)
        assert extended > base
        R = 1 / (math.sqrt(2) * 0.1)
        full, _ = quad(lambda K: (1 + K * K) ** (-5.5) * 2 * math.pi * K, R, np.inf, epsrel=1e-12)
        assert extended == pytest.approx(math.sqrt(full) / 0.1, rel=0.01)

    def test_everything_inside_cutoff(self):
        p = Params(omega=100.0, epsilon=0.1)
        g = KGrid(10.0, 200)
        w0 = initial_spectrum(GAUSS, g)
        assert tail_norm(w0, p, data=GAUSS, outer_spacing=0.5) == 0.0


class TestFitSlope:
    def test_exact_power(self):
        x = np.array([0.2, 0.1, 0.05, 0.025])
        f = fit_slope(x, 3 * x**1.5)
        assert f.slope == pytest.approx(1.5) and f.intercept == pytest.approx(math.log(3))
        assert f.max_residual < 1e-12

    def test_degenerate(self):
        assert fit_slope([1, 2, 3], [0.0, 1.0, 2.0]).degenerate
        assert fit_slope([1, 2, 3], [1e-20, 1e-20, 1e-20], floor=1e-15).degenerate

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            fit_slope([1, 2], [1, 2])


class TestSweep:
    def test_structureless_envelope_is_degenerate(self):
        res = sweep(Params(), GAUSS, [0.4, 0.2, 0.1], 16, w_hat0_factory=delta_envelope)
        assert res.error_fit.degenerate
        assert all(r.sup_error_hs <= 1e-13 * r.profile.ansatz_l2 for r in res.reports)

    def test_small_sweep_rates(self):
        res = sweep(Params(), GAUSS, [0.4, 0.2, 0.1], 16, threads=2)
        assert res.error_fit.slope >= 0.9
        assert res.inf_fit.slope >= 0.9
        assert all(g.holds for g in res.gronwall)
        assert [r.epsilon for r in res.reports] == [0.4, 0.2, 0.1]

    def test_threads_do_not_change_results(self):
        a = sweep(Params(), GAUSS, [0.4, 0.2, 0.1], 16, threads=1)
        b = sweep(Params(), GAUSS, [0.4, 0.2, 0.1], 16, threads=3)
        assert [r.as_row() for r in a.reports] == [r.as_row() for r in b.reports]

    def test_not_geometric(self):
        with pytest.raises(ValueError, match="geometric"):
            sweep(Params(), GAUSS, [0.4, 0.2, 0.15], 16)

    def test_too_few(self):
        with pytest.raises(ValueError):
            sweep(Params(), GAUSS, [0.4, 0.2], 16)

    def test_abort_keeps_partial_results(self):
        policy = GridPolicy(max_nodes=250_000)  # eps = 0.05 needs 800^2
        with pytest.raises(SweepAborted) as info:
            sweep(Params(), GAUSS, [0.2, 0.1, 0.05], 16, policy)
        assert info.value.epsilon == 0.05
        assert [r.epsilon for r in info.value.partial_reports] == [0.2, 0.1]
