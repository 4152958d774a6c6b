import math
import warnings

import numpy as np
import pytest
from scipy import integrate

import oracles
from cvpostselect.coherent_info import ChannelParams
from cvpostselect.postselect import (
    GridSpec,
    boundary_x,
    density_mass,
    golden_section_max,
    info_map,
    is_selected,
    joint_density,
    key_rate,
    key_rate_by_boundary,
    normalization_grid,
    optimize_d,
    selected_error,
    simpson_weights,
    small_amplitude_threshold,
)

COARSE = GridSpec(n_e=201, n_x=401)
JOINT_D2_ORIGIN = 0.90031631615710607  # 2*sqrt(1/pi)*sqrt(2/pi)
XSTAR_HALF_ONE = 0.58599864201974429  # mpmath root of the oracle delta_info


def test_frozen_boundary_matches_oracle():
    from mpmath import findroot

    root = findroot(lambda x: oracles.delta_info(0.5, 1, x), 0.55)
    assert float(root) == pytest.approx(XSTAR_HALF_ONE, abs=1e-15)


class TestSimpson:
    @pytest.mark.parametrize("n", [2, 3, 4, 9, 10, 101])
    def test_integrates_polynomials(self, n):
        x = np.linspace(0, 2, n)
        w = simpson_weights(n, x[1] - x[0])
        assert w.sum() == pytest.approx(2.0)
        if n % 2 == 1:
            assert w @ x**3 == pytest.approx(4.0)

    def test_rejects_single_node(self):
        with pytest.raises(ValueError):
            simpson_weights(1, 0.1)


class TestGrid:
    def test_defaults(self):
        g = GridSpec()
        assert (g.e_max, g.x_max, g.n_e, g.n_x) == (4.0, 4.0, 801, 1601)

    def test_refined_nests(self):
        g = GridSpec(n_e=5, n_x=9)
        r = g.refined()
        assert np.array_equal(r.e_axis()[::2], g.e_axis())

    def test_x_axis_symmetric(self):
        x = GridSpec(n_x=1601).x_axis()
        assert np.array_equal(x, -x[::-1])

    @pytest.mark.parametrize("kw", [{"e_max": 0}, {"x_max": -1}, {"n_e": 1}, {"n_x": 1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            GridSpec(**kw)


class TestJointDensity:
    def test_origin_value(self):
        for eta in (0.1, 0.5, 1.0):
            assert joint_density(ChannelParams(eta, 2.0), 0.0, 0.0) == pytest.approx(JOINT_D2_ORIGIN, abs=1e-15)

    def test_normalized_by_adaptive_quadrature(self):
        p = ChannelParams(0.5, 2.1)
        val, _ = integrate.dblquad(
            lambda x, e: joint_density(p, e, x), 0, np.inf, -np.inf, np.inf, epsabs=1e-10
        )
        assert val == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("E", [0.0, 0.7, 2.5])
    def test_x_marginal_is_folded_gaussian(self, E):
        p = ChannelParams(0.3, 1.5)
        val, _ = integrate.quad(lambda x: joint_density(p, E, x), -np.inf, np.inf)
        expected = 2 * math.sqrt(2 / (p.d * math.pi)) * math.exp(-2 * E * E / p.d)
        assert val == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("d", [0.5, 2.1, 8.0])
    def test_grid_mass(self, d):
        p = ChannelParams(0.5, d)
        assert density_mass(p, normalization_grid(p)) == pytest.approx(1.0, abs=1e-6)


class TestSelection:
    def test_examples(self):
        assert not is_selected(0.5, 1.0, 0.5)
        assert is_selected(0.5, 1.0, 0.6)
        assert not is_selected(0.3, 0.0, 2.0)

    def test_boundary(self):
        assert boundary_x(0.5, 1.0) == pytest.approx(XSTAR_HALF_ONE, abs=1e-9)
        assert boundary_x(1.0, 1.0) == 0.0
        assert boundary_x(0.5, 0.0) is None
        with pytest.raises(ValueError):
            boundary_x(0.5, -1.0)

    @pytest.mark.parametrize("eta", [0.25, 0.5, 0.9, 1.0])
    def test_small_amplitude_limit(self, eta):
        assert boundary_x(eta, 1e-4) == pytest.approx(small_amplitude_threshold(eta), abs=1e-7)

    @pytest.mark.parametrize("eta", [0.25, 0.5, 0.9])
    def test_boundary_separates_region(self, eta):
        for E in np.linspace(0.1, 4, 25):
            xs = boundary_x(eta, float(E))
            if xs is None:
                continue
            for x in (xs - 1e-6, -(xs - 1e-6)):
                if abs(x) < xs - 1e-7:
                    assert not is_selected(eta, E, x)
            assert is_selected(eta, E, xs + 1e-6)
            assert is_selected(eta, E, -(xs + 1e-6))


class TestKeyRate:
    def test_result_invariants(self):
        r = key_rate(ChannelParams(0.5, 2.1), COARSE)
        assert 0 <= r.rate <= r.selected_mass <= 1
        assert r.d_used == 2.1 and r.eta_used == 0.5 and r.grid == COARSE
        assert r.converged is True

    def test_skip_convergence(self):
        r = key_rate(ChannelParams(0.5, 2.1), COARSE, check_convergence=False)
        assert r.converged is None and r.relative_change is None

    def test_deterministic_and_thread_independent(self):
        p = ChannelParams(0.5, 2.1)
        a = key_rate(p, COARSE, threads=1)
        b = key_rate(p, COARSE, threads=3)
        assert a == b

    def test_lossless_dominates(self):
        r1 = key_rate(ChannelParams(1.0, 2.1), COARSE).rate
        r5 = key_rate(ChannelParams(0.5, 2.1), COARSE).rate
        assert r1 > r5 > 0

    def test_monotone_in_eta(self):
        rates = [key_rate(ChannelParams(eta, 2.1), COARSE, check_convergence=False).rate
                 for eta in (0.1, 0.25, 0.5, 0.75, 1.0)]
        assert all(b >= a for a, b in zip(rates, rates[1:]))

    def test_clipped_integrand_equals_region_integral(self):
        p = ChannelParams(0.5, 2.1)
        grid = GridSpec(n_e=161, n_x=1601)
        clipped = key_rate(p, grid, check_convergence=False).rate
        region = key_rate_by_boundary(p, grid)
        assert clipped == pytest.approx(region, rel=1e-4)

    def test_non_convergence_flag(self):
        r = key_rate(ChannelParams(0.5, 2.1), GridSpec(n_e=3, n_x=5))
        assert r.converged is False

    def test_tiny_modulation_has_no_key(self):
        r = key_rate(ChannelParams(0.5, 1e-4), COARSE, check_convergence=False)
        assert r.rate < 1e-6

    def test_selected_error(self):
        e5 = selected_error(ChannelParams(0.5, 2.1), COARSE)
        e1 = selected_error(ChannelParams(1.0, 2.1), COARSE)
        assert 0 < e5 < 0.5
        # lossless: every x != 0 is kept, so the selected error is Bob's plain error
        plain, _ = integrate.dblquad(
            lambda x, e: 2 * joint_density(ChannelParams(1.0, 2.1), e, x) / (1 + np.exp(8 * e * x)),
            0, 4, 0, 4, epsabs=1e-11,
        )
        assert e1 == pytest.approx(plain / float(density_mass(ChannelParams(1.0, 2.1), COARSE)), rel=1e-6)


class TestInfoMap:
    def test_shape_and_symmetry(self):
        m = info_map(0.5, GridSpec(e_max=3, x_max=3, n_e=31, n_x=61))
        assert m.values.shape == (31, 61)
        assert np.all(m.values[0] == 0)
        assert np.array_equal(m.values, m.values[:, ::-1])
        assert np.isnan(m.boundary[0])
        assert len(list(m.rows())) == 31 * 61

    def test_positive_region_near_e1(self):
        m = info_map(0.5, GridSpec(e_max=2, x_max=2, n_e=21, n_x=201))
        i = int(np.argmin(abs(m.E - 1.0)))
        j = int(np.argmin(abs(m.x - 0.6)))
        assert m.values[i, j] > 0
        assert m.boundary[i] == pytest.approx(XSTAR_HALF_ONE, abs=1e-9)


class TestOptimizer:
    def test_golden_section(self):
        x, fx = golden_section_max(lambda t: -(t - 1.234) ** 2, 0, 5, tol=1e-6)
        assert x == pytest.approx(1.234, abs=1e-6)
        assert fx == pytest.approx(0.0, abs=1e-11)

    def test_lossless_optimum_beats_reference(self):
        # without Eve a wider modulation always helps, so the optimum hits the interval edge
        with pytest.warns(RuntimeWarning, match="boundary"):
            d, res = optimize_d(1.0, COARSE)
        assert res.rate >= key_rate(ChannelParams(1.0, 2.1), COARSE).rate

    def test_boundary_warning(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            optimize_d(0.5, COARSE, interval=(0.1, 0.5), n_scan=5)
        assert any("boundary" in str(w.message) for w in caught)

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            optimize_d(0.5, COARSE, interval=(2.0, 1.0))
