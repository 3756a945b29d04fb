import math

import numpy as np
import pytest

from borelbouss.asymptotics import (
    amplitude_sweep,
    borel_coefficient_check,
    gevrey_fit,
    qn_poly,
    time_taylor,
)
from borelbouss.borel_series import p_series
from borelbouss.spectral_field import Lattice, NormParams, PhysicalParams, SpectralState, norm
from conftest import heat_case, linear_case, nonlinear_case


class TestTimeTaylor:
    def test_entry_zero_is_initial(self):
        initial, f, pp = nonlinear_case()
        tt = time_taylor(initial, f, pp, 4)
        np.testing.assert_array_equal(tt.coeffs[0].pair, initial.embed(tt.lattice).pair)

    def test_heat_closed_form(self):
        initial, f, pp = heat_case(mu=0.6)
        tt = time_taylor(initial, f, pp, 12)
        idx = tt.lattice.index((1, 0))
        for m, c in enumerate(tt.coeffs):
            assert c.theta_hat[idx] == pytest.approx(0.5 * (-0.6) ** m / math.factorial(m), rel=1e-14)
            assert not np.any(c.u_hat)

    def test_forced_mode(self):
        # u = 0.5 (1 - e^{-t}) has coefficients -0.5 (-1)^m / m! for m >= 1
        initial, f, pp = linear_case()
        tt = time_taylor(initial, f, pp, 10)
        idx = (1,) + tt.lattice.index((1, 0))
        for m in range(1, 11):
            assert tt.coeffs[m].pair[idx] == pytest.approx(-0.5 * (-1) ** m / math.factorial(m), rel=1e-14)

    def test_zero_data(self):
        lat = Lattice(2, 2)
        tt = time_taylor(SpectralState.zeros(lat), np.zeros((2,) + lat.shape), PhysicalParams(1, 1, 0.5, 2), 6)
        assert all(c.is_zero() for c in tt.coeffs)

    def test_support(self):
        initial, f, pp = nonlinear_case(A=0.3, K=2)
        tt = time_taylor(initial, f, pp, 6, ceiling=16)
        assert not tt.truncated and tt.k1 == 1.0
        for m, c in enumerate(tt.coeffs):
            assert c.support_radius() <= (m + 1) * tt.k1
        assert tt.coeffs[1].support_radius() > tt.k1

    def test_structure(self):
        initial, f, pp = nonlinear_case(A=0.3)
        for c in time_taylor(initial, f, pp, 10, ceiling=16).coeffs:
            assert c.max_divergence() <= 1e-12 * max(1.0, c.max_abs())
            assert c.is_conjugate_symmetric(1e-12)

    def test_rejects_bad_order(self):
        initial, f, pp = linear_case()
        with pytest.raises(ValueError):
            time_taylor(initial, f, pp, 0)


class TestCrossRecursion:
    def test_linear(self):
        initial, f, pp = linear_case()
        assert borel_coefficient_check(time_taylor(initial, f, pp, 12), p_series(initial, f, pp, 10), 8) <= 1e-10

    @pytest.mark.parametrize("a", [0.0, 0.5])
    def test_nonlinear(self, a):
        initial, f, pp = nonlinear_case(a=a)
        assert borel_coefficient_check(time_taylor(initial, f, pp, 10), p_series(initial, f, pp, 8), 6) <= 1e-9

    def test_detects_mismatch(self):
        initial, f, pp = nonlinear_case()
        other = PhysicalParams(pp.nu * 1.01, pp.mu, pp.a, pp.d)
        assert borel_coefficient_check(time_taylor(initial, f, pp, 8), p_series(initial, f, other, 6)) > 1e-4


class TestGevrey:
    def test_zero_data(self):
        lat = Lattice(2, 2)
        tt = time_taylor(SpectralState.zeros(lat), np.zeros((2,) + lat.shape), PhysicalParams(1, 1, 0, 2), 10)
        with pytest.raises(ValueError):
            gevrey_fit(tt)

    def test_geometric_fit_exact(self):
        # coefficients c_m = m! q^m fit to d0_hat = q exactly
        from borelbouss.asymptotics import TimeTaylor

        lat = Lattice(2, 1)
        base = SpectralState.from_modes(lat, [((1, 0), (0, 1), 0.25)])
        q = 0.7
        tt = TimeTaylor([base * (math.factorial(m) * q**m) for m in range(16)], PhysicalParams(), k1=1.0)
        rep = gevrey_fit(tt)
        assert rep.d0_hat == pytest.approx(q, rel=1e-10)
        assert rep.a0_hat == pytest.approx(norm(base, NormParams()), rel=1e-10)
        assert all(r == pytest.approx(q, rel=1e-12) for r in rep.ratios)
        assert rep.window == (8, 15)

    def test_ratios_bounded(self):
        initial, f, pp = nonlinear_case()
        rep = gevrey_fit(time_taylor(initial, f, pp, 24, ceiling=16))
        q = rep.ratios[-(len(rep.ratios) // 4):]
        assert max(q) <= 1.5 * float(np.median(q))
        assert all(np.isfinite(rep.ratios))

    def test_amplitude_floor(self):
        initial, f, pp = nonlinear_case()
        reps = amplitude_sweep(initial, f, pp, 24, ceiling=16)
        assert set(reps) == {1.0, 10.0, 100.0}
        for rep in reps.values():
            assert rep.radius >= 0.5 * rep.radius_floor
            assert set(rep.to_dict()["radius_estimates"]) == {"1.0", "10.0", "100.0"}
        assert reps[100.0].radius < reps[1.0].radius


class TestQn:
    def test_q2(self):
        for y in (0.0, 0.3, 2.0, 11.0):
            assert qn_poly(2, y) == pytest.approx(4 + 2 * y + y * y / 2, rel=1e-15)

    def test_q0(self):
        assert qn_poly(0, 5.0) == 1.0

    def test_bound(self):
        for l in range(8):
            for y in np.linspace(0, 40, 81):
                assert qn_poly(2 * l, y) <= 4**l * math.exp(y / 2) * (1 + 1e-14)

    def test_negative(self):
        with pytest.raises(ValueError):
            qn_poly(-1, 1.0)
