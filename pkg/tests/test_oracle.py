import math

import numpy as np
import pytest

from borel_ref import forced_mode
from borelbouss.oracle import OracleConfig, Scheme, _advance, compare, integrate, integrate_times
from borelbouss.spectral_field import (
    Lattice,
    LatticeMismatchError,
    PhysicalParams,
    SpectralState,
)
from conftest import heat_case, linear_case, nonlinear_case


class TestConfig:
    def test_defaults(self):
        cfg = OracleConfig(0.1, 1.0)
        assert cfg.scheme is Scheme.INTEGRATING_FACTOR_RK4
        assert OracleConfig(0.1, 1.0, "IntegratingFactorRK4").scheme is Scheme.INTEGRATING_FACTOR_RK4

    @pytest.mark.parametrize("dt,t_end", [(0.0, 1.0), (-1.0, 1.0), (0.5, 0.1)])
    def test_invalid(self, dt, t_end):
        with pytest.raises(ValueError):
            OracleConfig(dt, t_end)


class TestIntegrate:
    def test_zero(self):
        lat = Lattice(2, 2)
        s = integrate(SpectralState.zeros(lat), np.zeros((2,) + lat.shape), PhysicalParams(1, 1, 0.5, 2),
                      OracleConfig(0.01, 0.5))
        assert s.is_zero()

    def test_heat_decay(self):
        initial, f, pp = heat_case(mu=0.7)
        s = integrate(initial, f, pp, OracleConfig(0.05, 1.0))
        np.testing.assert_allclose(s.theta_hat, np.exp(-0.7 * initial.lattice.k2) * initial.theta_hat, atol=1e-15)
        assert not np.any(s.u_hat)

    def test_forced_mode(self):
        initial, f, pp = linear_case()
        idx = (1,) + initial.lattice.index((1, 0))
        for t in (0.1, 0.5):
            s = integrate(initial, f, pp, OracleConfig(1e-4, t))
            assert abs(s.pair[idx] - forced_mode(t, 0.5, 1.0)) <= 1e-10

    def test_fourth_order_closed_form(self):
        initial, f, pp = linear_case()
        idx = (1,) + initial.lattice.index((1, 0))
        exact = forced_mode(1.6, 0.5, 1.0)
        errs = [abs(integrate(initial, f, pp, OracleConfig(dt, 1.6)).pair[idx] - exact) for dt in (0.2, 0.1)]
        assert errs[0] / errs[1] == pytest.approx(16, rel=0.15)

    def test_fourth_order_nonlinear(self):
        initial, f, pp = nonlinear_case(A=0.5)
        ref = integrate(initial, f, pp, OracleConfig(0.1 / 8, 1.0)).pair
        errs = [np.abs(integrate(initial, f, pp, OracleConfig(dt, 1.0)).pair - ref).max() for dt in (0.1, 0.05)]
        assert errs[0] / errs[1] == pytest.approx(16, rel=0.25)

    def test_energy_decreases(self):
        initial, f, pp = nonlinear_case(A=0.8, a=0.0)
        lat = initial.lattice
        pair = initial.pair
        energies = [np.sum(np.abs(pair[:2]) ** 2)]
        for _ in range(40):
            pair = _advance(pair, np.zeros_like(f), pp, lat, 0.05, 0.05)
            energies.append(np.sum(np.abs(pair[:2]) ** 2))
        assert all(b <= a for a, b in zip(energies, energies[1:]))

    def test_divergence_free_each_step(self):
        initial, f, pp = nonlinear_case(A=0.5)
        lat = initial.lattice
        pair = initial.pair
        for _ in range(20):
            pair = _advance(pair, f, pp, lat, 0.02, 0.02)
            assert np.abs(np.sum(lat.k * pair[:2], axis=0)).max() <= 1e-12

    def test_times_match_single_runs(self):
        initial, f, pp = nonlinear_case()
        many = integrate_times(initial, f, pp, 0.01, [0.05, 0.1])
        one = integrate(initial, f, pp, OracleConfig(0.01, 0.1))
        np.testing.assert_allclose(many[1].pair, one.pair, atol=1e-15)

    def test_rejects_divergent(self):
        initial, f, pp = nonlinear_case()
        bad = SpectralState.from_modes(initial.lattice, [((1, 0), (1, 0), 0)])
        with pytest.raises(ValueError):
            integrate(bad, f, pp, OracleConfig(0.01, 0.1))


class TestCompare:
    def test_identical(self):
        initial, _, _ = nonlinear_case()
        rep = compare(initial, initial)
        assert rep.sup_err == rep.l2_err == rep.rel_l2 == rep.norm_err == rep.gamma_beta_err == 0.0

    def test_single_mode_perturbation(self):
        initial, _, _ = nonlinear_case()
        eps = 1e-3
        pair = initial.pair.copy()
        pair[(2,) + initial.lattice.index((2, 1))] += eps
        rep = compare(SpectralState.from_pair(initial.lattice, pair), initial)
        assert rep.l2_err == pytest.approx(eps, rel=1e-12)
        assert rep.sup_err == pytest.approx(eps, rel=1e-12)
        assert rep.gamma_beta_err == pytest.approx(eps * (1 + math.sqrt(5)) ** 3, rel=1e-12)

    def test_mismatch(self):
        with pytest.raises(LatticeMismatchError):
            compare(SpectralState.zeros(Lattice(2, 1)), SpectralState.zeros(Lattice(2, 2)))
