"""Power series of the Borel-plane solution about p = 0.

Writing (H, S)(k, p) = sum_l X^[l](k) p^l with X^[0] = (u1, theta1), matching
powers of p in the integral equation turns it into the explicit recursion

    (l+1)(l+2) X^[l+1] = -diag(nu|k|^2, mu|k|^2) X^[l] + R^[l],

    R^[l] = B(u0, X^[l]) + B(H^[l], X0)
            + sum_{a+b=l-1} a! b!/l! B(H^[a], X^[b]) + (a P[e2 S^[l]], 0),

where B(v, (w, s)) = (-i k_j P[v_j * w], -i k_j (v_j * s)) and X0 = (u0, theta0).
The factorial weights come from the Laplace convolution
p^a ** p^b = a! b!/(a+b+1)! p^(a+b+1).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import lgamma

import numpy as np

from .spectral_field import (
    Lattice,
    NormParams,
    PhysicalParams,
    ProductGrid,
    SpectralState,
    _require_divergence_free,
    _require_mean_zero,
    _resize,
    buoyancy,
    dilate,
    flux_divergence,
    pair_norm,
    support_mask,
    u1_theta1,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_COEFF = 1e250


class SeriesOverflowError(ArithmeticError):
    """A recursion coefficient exceeded the configured magnitude."""


@dataclass
class PTaylor:
    """Coefficients X^[l] = (H^[l], S^[l]) of the p-series, l = 0..L_max."""

    coeffs: list
    params: PhysicalParams
    truncated: bool = False
    k1: float = 0.0

    @property
    def lattice(self) -> Lattice:
        return self.coeffs[0].lattice

    @property
    def L_max(self) -> int:
        return len(self.coeffs) - 1

    def array(self) -> np.ndarray:
        """(L_max+1, d+1, *shape) stacked coefficients."""
        return np.stack([c.pair for c in self.coeffs])


def _data_lattice_radius(pairs, lattice: Lattice) -> int:
    """Largest sup-norm |k|_inf carrying a nonzero coefficient among ``pairs``."""
    mask = np.zeros(lattice.shape, dtype=bool)
    for p in pairs:
        mask |= support_mask(p, lattice.d)
    if not mask.any():
        return 0
    return int(np.abs(lattice.k[:, mask]).max())


def _working_lattice(initial: SpectralState, f_hat, L_max, ceiling):
    lat = initial.lattice
    kinf = _data_lattice_radius([initial.pair, f_hat], lat)
    if ceiling is None or ceiling <= lat.K:
        return lat, (L_max + 2) * kinf > lat.K
    need = max(lat.K, (L_max + 2) * kinf)
    K = min(int(ceiling), need)
    return Lattice(lat.d, K), need > K


class _Products:
    """Physical-space cache of coefficient states for fast flux products."""

    def __init__(self, lattice: Lattice, real: bool):
        self.lattice = lattice
        self.grid = ProductGrid(lattice, real=real)
        self.phys = []
        self.masks = []

    def push(self, pair: np.ndarray):
        self.phys.append(self.grid.to_physical(pair))
        self.masks.append(support_mask(pair, self.lattice.d))

    def flux(self, terms):
        """Sum of weighted flux products; ``terms`` holds (weight, v_phys, mask_v, w_phys, mask_w)."""
        d = self.lattice.d
        acc = None
        mask = np.zeros(self.lattice.shape, dtype=bool)
        for wgt, v, mv, w, mw in terms:
            if not mv.any() or not mw.any():
                continue
            prod = self.grid.products(v[:d], w)
            acc = wgt * prod if acc is None else acc + wgt * prod
            mask |= dilate(mv, mw)
        if acc is None:
            return np.zeros((d + 1,) + self.lattice.shape, complex), mask
        out = flux_divergence(self.grid.to_spectral(acc), self.lattice)
        out[:, ~mask] = 0.0
        return out, mask


def _prepare(initial: SpectralState, f_hat, pp: PhysicalParams):
    lat = initial.lattice
    if pp.d != lat.d:
        raise ValueError(f"physical d={pp.d} does not match lattice d={lat.d}")
    f_hat = np.asarray(f_hat, dtype=complex)
    _require_mean_zero(initial.pair, lat, "initial data")
    _require_mean_zero(f_hat, lat, "forcing")
    _require_divergence_free(initial.u_hat, lat, "initial velocity")
    _require_divergence_free(f_hat, lat, "forcing")
    return f_hat


def p_series(
    initial: SpectralState,
    f_hat,
    pp: PhysicalParams,
    L_max: int,
    ceiling: int | None = None,
    max_coeff: float = DEFAULT_MAX_COEFF,
) -> PTaylor:
    """Run the p-recursion up to order ``L_max``.

    With ``ceiling`` above the data lattice K the computation moves to a
    lattice of radius min(ceiling, (L_max+2) K1) so the coefficients are
    the untruncated ones; otherwise it stays on the data lattice (the
    Galerkin system that the march solves).  ``truncated`` records whether
    the support bound exceeded the lattice used.
    """
    if L_max < 1:
        raise ValueError(f"L_max must be >= 1, got {L_max}")
    f_hat = _prepare(initial, f_hat, pp)
    lat, truncated = _working_lattice(initial, f_hat, L_max, ceiling)
    if lat != initial.lattice:
        f_hat = _resize(f_hat, initial.lattice.K, lat.K, lat.d)
        initial = initial.embed(lat)
    d = lat.d
    x0 = initial.pair
    real = initial.is_conjugate_symmetric() and _is_sym(f_hat, d)
    first = u1_theta1(initial, f_hat, pp).pair
    diff = pp.diffusivities()[(slice(None),) + (None,) * d] * lat.k2

    prod = _Products(lat, real)
    prod.push(x0)
    base_phys, base_mask = prod.phys.pop(), prod.masks.pop()

    coeffs = [first]
    prod.push(first)
    for l in range(L_max):
        xl = coeffs[l]
        terms = [
            (1.0, base_phys, base_mask, prod.phys[l], prod.masks[l]),
            (1.0, prod.phys[l], prod.masks[l], base_phys, base_mask),
        ]
        for a in range(l):
            b = l - 1 - a
            w = np.exp(lgamma(a + 1) + lgamma(b + 1) - lgamma(l + 1))
            terms.append((w, prod.phys[a], prod.masks[a], prod.phys[b], prod.masks[b]))
        rhs, _ = prod.flux(terms)
        rhs[:d] += buoyancy(xl[d], lat, pp.a)
        nxt = (rhs - diff * xl) / ((l + 1) * (l + 2))
        peak = float(np.max(np.abs(nxt))) if nxt.size else 0.0
        if not np.isfinite(peak) or peak > max_coeff:
            raise SeriesOverflowError(
                f"p-series coefficient {l + 1} reached magnitude {peak:.3e} (limit {max_coeff:.1e})"
            )
        coeffs.append(nxt)
        prod.push(nxt)

    states = [SpectralState.from_pair(lat, c) for c in coeffs]
    k1 = max(initial.support_radius(), _support_radius_vec(f_hat, lat))
    return PTaylor(states, pp, truncated=truncated, k1=k1)


def _is_sym(arr, d):
    flipped = arr[(Ellipsis,) + (slice(None, None, -1),) * d]
    return np.max(np.abs(flipped - np.conj(arr)), initial=0.0) <= 1e-12 * max(
        1.0, float(np.max(np.abs(arr), initial=0.0))
    )


def _support_radius_vec(arr, lat):
    mask = support_mask(arr, lat.d)
    return float(lat.kabs[mask].max()) if mask.any() else 0.0


@dataclass
class SeriesValue:
    """Series evaluated at one p, with a tail estimate and a radius flag."""

    p: float
    state: SpectralState
    tail: float
    beyond_radius: bool = False
    radius: float | None = field(default=None, repr=False)


def eval_ptaylor(
    series: PTaylor, p: float, radius: float | None = None, norm_params: NormParams = NormParams()
) -> SeriesValue:
    """Horner evaluation at ``p`` >= 0.

    ``tail`` is the normed gap between the partial sums through L_max and
    through L_max - 2.  If ``radius`` is given and p exceeds it the result
    is flagged (and a warning logged) rather than refused.
    """
    if p < 0:
        raise ValueError(f"p must be >= 0, got {p}")
    arr = series.array()
    acc = np.zeros_like(arr[0])
    for c in arr[::-1]:
        acc = acc * p + c
    L = series.L_max
    tail_terms = arr[max(L - 1, 1):] * (p ** np.arange(max(L - 1, 1), L + 1))[
        (slice(None),) + (None,) * (arr.ndim - 1)
    ]
    tail = float(pair_norm(tail_terms.sum(axis=0), series.lattice, norm_params)) if L >= 2 else np.inf
    beyond = radius is not None and p > radius
    if beyond:
        log.warning("p-series evaluated at p=%g beyond estimated radius %g", p, radius)
    return SeriesValue(p, SpectralState.from_pair(series.lattice, acc), tail, beyond, radius)


def coefficient_norms(series: PTaylor, norm_params: NormParams = NormParams()) -> np.ndarray:
    return np.asarray(pair_norm(series.array(), series.lattice, norm_params), dtype=float)


def radius_estimate(series: PTaylor, norm_params: NormParams = NormParams()) -> float:
    """Ratio-test radius 1 / max(n_{l+1}/n_l) over the last third of the coefficients.

    Zero coefficients are skipped (consecutive nonzero ones are compared).
    """
    norms = coefficient_norms(series, norm_params)
    idx = np.flatnonzero(norms > 0)
    if len(idx) < 6:
        raise ValueError(f"radius_estimate needs >= 6 nonzero coefficients, got {len(idx)}")
    tail = idx[len(idx) - max(2, len(idx) // 3) - 1:]
    ratios = [
        (norms[j] / norms[i]) ** (1.0 / (j - i)) for i, j in zip(tail[:-1], tail[1:])
    ]
    return float(1.0 / max(ratios))
