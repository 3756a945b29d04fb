import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from borelbouss.spectral_field import (
    DivergenceError,
    Lattice,
    LatticeMismatchError,
    NormKind,
    NormParams,
    PhysicalParams,
    ProductGrid,
    SpectralState,
    _resize,
    convolve,
    dilate,
    divergence,
    hodge_project,
    norm,
    pair_norm,
    project,
    u1_theta1,
)


def brute_convolve(f, g, lat):
    """Double loop over all lattice pairs."""
    out = np.zeros(lat.shape, dtype=complex)
    K = lat.K
    pts = list(itertools.product(range(-K, K + 1), repeat=lat.d))
    for kp in pts:
        fv = f[tuple(c + K for c in kp)]
        if fv == 0:
            continue
        for k in pts:
            q = tuple(a - b for a, b in zip(k, kp))
            if max(abs(c) for c in q) <= K:
                out[tuple(c + K for c in k)] += fv * g[tuple(c + K for c in q)]
    return out


def random_field(rng, lat, *lead):
    return rng.normal(size=lead + lat.shape) + 1j * rng.normal(size=lead + lat.shape)


def symmetric_field(rng, lat, *lead):
    a = random_field(rng, lat, *lead)
    flip = a[(Ellipsis,) + (slice(None, None, -1),) * lat.d]
    return 0.5 * (a + flip.conj())


class TestParams:
    def test_physical_rejects_bad_values(self):
        with pytest.raises(ValueError):
            PhysicalParams(0.0, 1.0, 0.0, 2)
        with pytest.raises(ValueError):
            PhysicalParams(1.0, 1.0, -1.0, 2)
        with pytest.raises(ValueError):
            PhysicalParams(1.0, 1.0, 0.0, 4)

    def test_m1(self):
        assert PhysicalParams(0.3, 2.0, 0.0, 2).m1 == 2.0

    def test_norm_gamma_must_exceed_d(self):
        with pytest.raises(ValueError):
            NormParams(2.0, 0.0, NormKind.GAMMA_BETA).check_dimension(2)
        NormParams(2.0, 0.0, NormKind.L1_LINF).check_dimension(2)

    def test_lattice_symmetric(self):
        lat = Lattice(3, 2)
        kv = {tuple(k) for k in lat.wavevectors()}
        assert all(tuple(-c for c in k) in kv for k in kv)
        assert lat.size == 125


class TestHodge:
    def test_examples(self):
        np.testing.assert_allclose(hodge_project([0, 3], [1, 0]), [0, 3])
        np.testing.assert_allclose(hodge_project([1, 1], [1, 1]), [0, 0], atol=1e-15)
        np.testing.assert_allclose(hodge_project([1, 0, 0], [1, 2, 2]), [8 / 9, -2 / 9, -2 / 9], atol=1e-15)

    def test_origin_identity(self):
        np.testing.assert_array_equal(hodge_project([1, 2], [0, 0]), [1, 2])

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.integers(-5, 5), min_size=3, max_size=3).filter(any),
        st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    )
    def test_orthogonal_and_idempotent(self, k, v):
        w = hodge_project(v, k)
        assert abs(np.dot(k, w)) <= 1e-12 * (1 + np.abs(v).max()) * 5
        np.testing.assert_allclose(hodge_project(w, k), w, atol=1e-12)

    def test_project_field(self, rng):
        lat = Lattice(2, 3)
        u = project(random_field(rng, lat, 2), lat)
        assert np.max(np.abs(divergence(SpectralState(lat, u, np.zeros(lat.shape))))) < 1e-12
        np.testing.assert_allclose(project(u, lat), u, atol=1e-14)

    def test_preserves_symmetry(self, rng):
        lat = Lattice(2, 3)
        s = SpectralState(lat, symmetric_field(rng, lat, 2), np.zeros(lat.shape))
        assert SpectralState(lat, project(s.u_hat, lat), s.theta_hat).is_conjugate_symmetric()


class TestDivergence:
    def test_gradient_field(self):
        lat = Lattice(2, 2)
        s = SpectralState(lat, lat.k.astype(complex), np.zeros(lat.shape))
        np.testing.assert_allclose(divergence(s), lat.k2)

    def test_random_matches_dot(self, rng):
        lat = Lattice(3, 1)
        u = random_field(rng, lat, 3)
        s = SpectralState(lat, u, np.zeros(lat.shape))
        ref = sum(lat.k[i] * u[i] for i in range(3))
        np.testing.assert_allclose(divergence(s), ref)


class TestConvolve:
    def test_single_modes(self):
        lat = Lattice(2, 3)
        f = np.zeros(lat.shape, complex)
        g = np.zeros(lat.shape, complex)
        f[lat.index((1, -1))] = 1
        g[lat.index((1, 2))] = 1
        h = convolve(f, g, lat)
        assert h[lat.index((2, 1))] == 1
        assert np.count_nonzero(h) == 1

    def test_zero(self, rng):
        lat = Lattice(2, 2)
        assert not np.any(convolve(np.zeros(lat.shape), random_field(rng, lat), lat))

    @pytest.mark.parametrize("d,K", [(2, 4), (2, 3), (3, 2)])
    def test_brute_force(self, rng, d, K):
        lat = Lattice(d, K)
        f, g = random_field(rng, lat), random_field(rng, lat)
        ref = brute_convolve(f, g, lat)
        np.testing.assert_allclose(convolve(f, g, lat), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())

    def test_two_mode_self(self):
        lat = Lattice(2, 4)
        f = SpectralState.from_modes(lat, [((1, 0), (0, 1), 0), ((0, 1), (1, 0), 0)]).u_hat[0]
        np.testing.assert_allclose(convolve(f, f, lat), brute_convolve(f, f, lat), atol=1e-14)

    def test_commutative_bilinear(self, rng):
        lat = Lattice(2, 3)
        f, g, h = (random_field(rng, lat) for _ in range(3))
        np.testing.assert_allclose(convolve(f, g, lat), convolve(g, f, lat), atol=1e-12)
        np.testing.assert_allclose(
            convolve(2 * f + h, g, lat), 2 * convolve(f, g, lat) + convolve(h, g, lat), atol=1e-11
        )

    def test_symmetry(self, rng):
        lat = Lattice(2, 3)
        f, g = symmetric_field(rng, lat), symmetric_field(rng, lat)
        h = convolve(f, g, lat)
        np.testing.assert_allclose(h[::-1, ::-1].conj(), h, atol=1e-12)

    def test_mismatch(self):
        with pytest.raises(LatticeMismatchError):
            convolve(np.zeros((5, 5)), np.zeros((7, 7)), Lattice(2, 2))

    def test_product_grid_matches_direct(self, rng):
        lat = Lattice(2, 3)
        grid = ProductGrid(lat, real=False)
        f, g = random_field(rng, lat), random_field(rng, lat)
        prod = grid.to_spectral(grid.to_physical(f) * grid.to_physical(g))
        np.testing.assert_allclose(prod, convolve(f, g, lat), atol=1e-11)

    def test_dilate(self):
        lat = Lattice(2, 3)
        a = np.zeros(lat.shape, bool)
        a[lat.index((1, 0))] = a[lat.index((-1, 0))] = True
        m = dilate(a, a)
        assert {tuple(k) for k in lat.wavevectors()[m.ravel()]} == {(2, 0), (0, 0), (-2, 0)}


class TestNorm:
    def test_zero(self):
        assert norm(SpectralState.zeros(Lattice(2, 2)), NormParams()) == 0

    def test_gamma_beta_single_mode(self):
        lat = Lattice(2, 2)
        s = SpectralState.from_modes(lat, [((1, 0), (0, 2), 0)], symmetrize=False)
        val = norm(s, NormParams(3.0, 0.5, NormKind.GAMMA_BETA))
        assert val == pytest.approx(2 * 8 * math.exp(0.5), rel=1e-14)
        assert val == pytest.approx(26.3795, abs=1e-4)

    def test_l1linf_origin(self):
        lat = Lattice(2, 2)
        th = np.zeros(lat.shape, complex)
        th[lat.origin] = 1
        assert norm(SpectralState(lat, np.zeros((2,) + lat.shape), th), NormParams()) == 1

    def test_pair_magnitude(self):
        lat = Lattice(2, 1)
        s = SpectralState.from_modes(lat, [((1, 0), (0, 3), 4)], symmetrize=False)
        assert norm(s, NormParams()) == pytest.approx(5.0)

    @settings(max_examples=30, deadline=None)
    @given(st.one_of(st.just(0.0), st.floats(1e-100, 1e3)))
    def test_homogeneous(self, c):
        rng = np.random.default_rng(1)
        lat = Lattice(2, 2)
        s = SpectralState(lat, random_field(rng, lat, 2), random_field(rng, lat))
        for npar in (NormParams(), NormParams(3.0, 0.2, NormKind.GAMMA_BETA)):
            assert norm(s * c, npar) == pytest.approx(c * norm(s, npar), rel=1e-12, abs=1e-300)

    def test_leading_axes(self, rng):
        lat = Lattice(2, 2)
        arr = random_field(rng, lat, 4, 3)
        vals = pair_norm(arr, lat, NormParams())
        assert vals.shape == (4,)
        assert vals[2] == pytest.approx(pair_norm(arr[2], lat, NormParams()))


class TestU1Theta1:
    def test_zero_data_returns_forcing(self):
        lat = Lattice(2, 2)
        f = SpectralState.from_modes(lat, [((1, 0), (0, 0.5), 0)]).u_hat
        out = u1_theta1(SpectralState.zeros(lat), f, PhysicalParams(1, 1, 0.3, 2))
        np.testing.assert_array_equal(out.u_hat, f)
        assert not np.any(out.theta_hat)

    def test_single_mode_velocity(self):
        lat = Lattice(2, 3)
        s = SpectralState.from_modes(lat, [((1, 0), (0, 1), 0)], symmetrize=False)
        out = u1_theta1(s, np.zeros_like(s.u_hat), PhysicalParams(1, 1, 0, 2))
        expect = np.zeros_like(s.u_hat)
        expect[(1,) + lat.index((1, 0))] = -1
        np.testing.assert_allclose(out.u_hat, expect, atol=1e-15)

    def test_heat_only(self):
        lat = Lattice(2, 2)
        s = SpectralState.from_modes(lat, [((1, 1), (0, 0), 0.7)])
        out = u1_theta1(s, np.zeros_like(s.u_hat), PhysicalParams(1, 0.3, 0, 2))
        assert not np.any(out.u_hat)
        np.testing.assert_allclose(out.theta_hat, -0.3 * lat.k2 * s.theta_hat)

    def test_divergence_free_and_symmetric(self, rng):
        lat = Lattice(2, 3)
        u = project(symmetric_field(rng, lat, 2), lat)
        u[(slice(None),) + lat.origin] = 0
        th = symmetric_field(rng, lat)
        th[lat.origin] = 0
        f = project(symmetric_field(rng, lat, 2), lat)
        f[(slice(None),) + lat.origin] = 0
        out = u1_theta1(SpectralState(lat, u, th), f, PhysicalParams(0.7, 1.3, 0.4, 2))
        assert out.max_divergence() <= 1e-12 * max(1, out.max_abs())
        assert out.is_conjugate_symmetric(1e-12)

    def test_rejects_divergent(self):
        lat = Lattice(2, 2)
        s = SpectralState.from_modes(lat, [((1, 0), (1, 0), 0)])
        with pytest.raises(DivergenceError):
            u1_theta1(s, np.zeros_like(s.u_hat), PhysicalParams(1, 1, 0, 2))


class TestResize:
    def test_roundtrip(self, rng):
        lat = Lattice(2, 2)
        a = random_field(rng, lat)
        np.testing.assert_array_equal(_resize(_resize(a, 2, 4, 2), 4, 2, 2), a)
