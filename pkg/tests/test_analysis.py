import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisodnl.analysis import (
    G_delta,
    H_delta,
    b_quantity,
    b_sandwich_constant,
    degiorgi_constants,
    fast_geometric_iterate,
    level_sequence,
    measure_levels,
    power_inequality_constant,
    select_q_vector,
    trapezoid_cutoff,
)
from anisodnl.discretization import Grid, ScalarField, TimeSeries
from anisodnl.model import CoefficientSpec, Exponents, ProblemSpec

# Frozen by the pre-build sweep (b_sandwich_constant / power_inequality_constant
# with pad=0, n=400); see also the CLI calibrate verb.
SANDWICH_FIXTURES = {1.0: 2.0, 1.5: 2.5, 2.0: 3.0, 3.0: 4.0}
POWER_FIXTURES = {1.5: 1.4142135623730956, 2.0: 2.0, 3.0: 4.0}


def const_spec(p, m, sigma=3.0, f_val=0.0, data=0.5, T=1.0):
    n = len(p)

    def a(x, t, u):
        return np.full(np.shape(u), 1.0)

    return ProblemSpec(
        box=tuple([1.0] * n), T=T,
        exponents=Exponents(p, m),
        coeffs=CoefficientSpec(tuple([a] * n), 1.0, 0.0),
        f=lambda x, t: np.full(np.shape(x[0]), f_val),
        g=lambda x, t: np.full(np.shape(x[0]), data),
        u0=lambda x: np.full(np.shape(x[0]), data),
        sigma=sigma, eps0=data)


class TestBQuantity:
    def test_diagonal(self):
        u = np.linspace(0, 5, 11)
        for m in (1.0, 1.7, 3.0):
            assert np.allclose(b_quantity(u, u, m), 0.0)

    def test_m1_closed_form(self):
        assert b_quantity(2.0, 1.0, 1.0) == pytest.approx(0.5)
        u = np.linspace(0, 4, 17)
        v = np.linspace(4, 0, 17)
        assert np.allclose(b_quantity(u, v, 1.0), 0.5 * (u - v) ** 2)

    def test_m2_plug_in(self):
        # (27 - 1)/3 - 1*(3 - 1) = 26/3 - 2 = 20/3
        assert b_quantity(3.0, 1.0, 2.0) == pytest.approx(20.0 / 3.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            b_quantity(-1.0, 1.0, 2.0)

    @given(st.floats(0, 20), st.floats(0, 20), st.floats(1, 4))
    @settings(max_examples=200, deadline=None)
    def test_nonnegative(self, u, v, m):
        assert b_quantity(u, v, m) >= -1e-12 * max(u, v, 1.0) ** (m + 1)


class TestSandwich:
    @pytest.mark.parametrize("m", sorted(SANDWICH_FIXTURES))
    def test_frozen_constant(self, m):
        assert b_sandwich_constant(m, pad=0.0) \
            == pytest.approx(SANDWICH_FIXTURES[m], rel=1e-9)

    def test_m1_exact(self):
        assert b_sandwich_constant(1.0, pad=0.0) == 2.0

    @pytest.mark.parametrize("m", [1.0, 1.5, 2.0, 3.0])
    def test_holds_on_fresh_samples(self, m):
        c = b_sandwich_constant(m)
        rng = np.random.default_rng(11)
        u = rng.uniform(0, 10, 20000)
        v = rng.uniform(0, 10, 20000)
        gap = b_quantity(u, v, m)
        ref = (v ** ((m + 1) / 2) - u ** ((m + 1) / 2)) ** 2
        assert np.all(gap <= c * ref + 1e-12)
        assert np.all(ref <= c * gap + 1e-12)


class TestPowerInequality:
    @pytest.mark.parametrize("g", sorted(POWER_FIXTURES))
    def test_frozen_constant(self, g):
        assert power_inequality_constant(g, pad=0.0) \
            == pytest.approx(POWER_FIXTURES[g], rel=1e-9)

    def test_b_zero_slice(self):
        # |a|^g equals ||a|^{g-1} a| exactly, so c = 1 suffices there
        a = np.linspace(-5, 5, 41)
        g = 2.5
        assert np.allclose(np.abs(a) ** g,
                           np.abs(np.abs(a) ** (g - 1) * a))

    @pytest.mark.parametrize("g", [1.5, 2.0, 3.0])
    def test_holds_on_fresh_samples(self, g):
        c = power_inequality_constant(g)
        rng = np.random.default_rng(13)
        a = rng.uniform(-10, 10, 20000)
        b = rng.uniform(-10, 10, 20000)
        lhs = np.abs(a - b) ** g
        rhs = np.abs(np.abs(a) ** (g - 1) * a - np.abs(b) ** (g - 1) * b)
        assert np.all(lhs <= c * rhs + 1e-12)


class TestCutoffs:
    def test_H_branches(self):
        assert H_delta(1.0, 0.5) == 0.5
        assert H_delta(1.0, 2.0) == 1.0
        assert H_delta(1.0, -1.0) == 0.0

    def test_G_branches(self):
        assert G_delta(1.0, 2.0) == pytest.approx(1.5)
        assert G_delta(1.0, 0.5) == pytest.approx(0.125)
        assert G_delta(1.0, -3.0) == 0.0

    def test_G_prime_is_H(self):
        # away from the kinks at 0 and delta
        eps = 1e-7
        for s in (-1.0, 0.3, 0.7, 2.0, 5.0):
            d = (G_delta(1.0, s + eps) - G_delta(1.0, s - eps)) / (2 * eps)
            assert d == pytest.approx(float(H_delta(1.0, s)), abs=1e-6)

    def test_trapezoid_endpoints(self):
        assert trapezoid_cutoff(1.0, 3.0, 0.5, 1.5) == 1.0
        assert trapezoid_cutoff(1.0, 3.0, 0.5, 3.0) == 0.0
        assert trapezoid_cutoff(1.0, 3.0, 0.5, 0.0) == 0.0
        assert trapezoid_cutoff(1.0, 3.0, 0.5, 2.0) == 1.0

    def test_trapezoid_rejects_wide_ramp(self):
        with pytest.raises(ValueError):
            trapezoid_cutoff(0.0, 1.0, 0.6, 0.5)


class TestFastGeometric:
    def test_below_threshold_converges(self):
        ys, conv, thr = fast_geometric_iterate(1.0, 2.0, 1.0, 0.25, 60)
        assert thr == pytest.approx(0.5)
        assert ys[1] == pytest.approx(0.0625)
        assert conv

    def test_at_threshold(self):
        ys, conv, thr = fast_geometric_iterate(1.0, 2.0, 1.0, 0.5, 200)
        # equality recursion from the threshold: Y_j = 2^-(j+1)
        assert np.allclose(ys[:8], 0.5 ** np.arange(1, 9) * 2 ** 0)
        assert conv

    def test_zero_start(self):
        ys, conv, _ = fast_geometric_iterate(3.0, 2.0, 0.5, 0.0, 10)
        assert np.all(ys == 0.0) and conv

    def test_above_threshold_diverges(self):
        ys, conv, thr = fast_geometric_iterate(1.0, 2.0, 1.0, 0.9, 40)
        assert not conv and ys[-1] > 1.0


class TestQVector:
    def test_keeps_p_when_pbar_below_dim(self):
        assert select_q_vector((2.0, 2.0), 2) == (2.0, 2.0)

    def test_keeps_p_at_equality(self):
        # p_bar == N keeps q = p, needed for the plug-in delta value
        assert select_q_vector((2.0, 2.0), 2) == (2.0, 2.0)

    def test_lowers_q1_when_pbar_large(self):
        q = select_q_vector((3.0, 2.0), 2)
        assert q[1] == 2.0
        assert 1.0 < q[0] < 3.0
        q_bar = 2.0 / (1.0 / q[0] + 1.0 / q[1])
        assert q_bar < 2.0


class TestDeGiorgiConstants:
    def test_hand_checked_delta(self):
        spec = const_spec((2.0, 2.0), (1.0, 1.0), sigma=3.0)
        g = Grid((1.0, 1.0), (9, 9))
        rep = degiorgi_constants(spec, g)
        assert rep.dg_delta == pytest.approx(1.0 / 6.0)
        assert rep.q_bar == pytest.approx(2.0)

    def test_zero_source(self):
        spec = const_spec((2.0, 2.0), (1.0, 1.0))
        g = Grid((1.0, 1.0), (9, 9))
        rep = degiorgi_constants(spec, g)
        assert rep.K == 0.0
        assert rep.M == rep.M_star == 1.5
        assert rep.L == pytest.approx(2.0 * 1.5)

    def test_L_envelope_exponent(self):
        spec = const_spec((2.0,), (2.0,), sigma=4.0)
        g = Grid((1.0,), (9,))
        rep = degiorgi_constants(spec, g)
        assert rep.L == pytest.approx(2.0 ** (2.0 / 3.0) * rep.M)

    def test_delta_positive_sweep(self):
        rng = np.random.default_rng(17)
        count = 0
        while count < 100:
            n = int(rng.integers(1, 4))
            p = tuple(rng.uniform(1.5, 3.5, n))
            m = tuple(rng.uniform(1.0, 2.0, n))
            p_bar = 1.0 / (sum(1.0 / v for v in p) / n)
            sigma = (1.0 + n / p_bar) * rng.uniform(1.05, 3.0)
            spec = const_spec(p, m, sigma=sigma)
            g = Grid(tuple([1.0] * n), tuple([5] * n))
            rep = degiorgi_constants(spec, g)
            assert rep.dg_delta > 0.0
            count += 1

    def test_delta_decreases_toward_bound(self):
        deltas = []
        for sigma in (4.0, 3.0, 2.5, 2.2, 2.05, 2.01):
            spec = const_spec((2.0, 2.0), (1.0, 1.0), sigma=sigma)
            g = Grid((1.0, 1.0), (5, 5))
            deltas.append(degiorgi_constants(spec, g).dg_delta)
        assert all(b < a for a, b in zip(deltas, deltas[1:]))
        assert deltas[-1] < 0.01

    def test_rejects_sigma_at_bound(self):
        spec = const_spec((2.0, 2.0), (1.0, 1.0), sigma=2.0)
        g = Grid((1.0, 1.0), (5, 5))
        with pytest.raises(ValueError):
            degiorgi_constants(spec, g)


class TestMeasureLevels:
    def _series(self, value, T=1.0, n=9):
        g = Grid((1.0,), (n,))
        times = np.linspace(0.0, T, 5)
        return TimeSeries([ScalarField(g, np.full(n, value), float(t))
                           for t in times])

    def test_bounded_series_empty_levels(self):
        s = self._series(2.0)
        Y, E = measure_levels(s, 3.0, 1.0, 2.0, 5)
        assert all(y == 0.0 for y in Y)
        assert all(e == 0.0 for e in E)

    def test_constant_series_closed_form(self):
        M, m, q_bar = 1.5, 1.0, 2.0
        val = 2.0 * M
        s = self._series(val)
        Y, E = measure_levels(s, M, m, q_bar, 3)
        levels = level_sequence(M, m, 3)
        # |Omega_T| = 1 and (m+1)/2 = 1 at m = 1, so
        # Y_j = ((2M)^1 - M_j^1)_+ ^ (2 m q/(m+1)) = (2M - M_j)^2
        for y, Mj in zip(Y, levels):
            expect = max(val - Mj, 0.0) ** (2 * m * q_bar / (m + 1))
            assert y == pytest.approx(expect)

    def test_levels_increase_to_limit(self):
        m = 1.5
        levels = level_sequence(2.0, m, 12)
        assert np.all(np.diff(levels) > 0)
        assert levels[-1] == pytest.approx(2.0 ** (2.0 / (m + 1.0)) * 2.0,
                                           rel=1e-3)

    def test_Y_decreasing(self):
        g = Grid((1.0,), (17,))
        rng = np.random.default_rng(19)
        times = np.linspace(0, 1, 6)
        s = TimeSeries([ScalarField(g, rng.uniform(0, 5, 17), float(t))
                        for t in times])
        Y, E = measure_levels(s, 1.0, 1.3, 1.8, 6)
        assert all(b <= a + 1e-15 for a, b in zip(Y, Y[1:]))
        assert all(b <= a + 1e-15 for a, b in zip(E, E[1:]))

    def test_E_recursion_consistency(self):
        # |E_{j+1}| <= M^{-m q} 2^{(j+1) 2 m q/(m+1)} Y_j by construction
        g = Grid((1.0,), (33,))
        rng = np.random.default_rng(23)
        times = np.linspace(0, 1, 9)
        s = TimeSeries([ScalarField(g, rng.uniform(0, 6, 33), float(t))
                        for t in times])
        M, m, q_bar = 1.2, 1.4, 1.9
        Y, E = measure_levels(s, M, m, q_bar, 6)
        for j in range(len(Y) - 1):
            bound = (M ** (-m * q_bar)
                     * 2.0 ** ((j + 1) * 2 * m * q_bar / (m + 1)) * Y[j])
            assert E[j + 1] <= bound + 1e-12
