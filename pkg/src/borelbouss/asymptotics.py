"""Small-time Taylor coefficients and their Gevrey-1 growth.

The expansion (u, theta)(t) = sum_m X^[m] t^m of the truncated system obeys

    (m+1) X^[m+1] = F^[m] - diag(nu|k|^2, mu|k|^2) X^[m]
                    + sum_{l=0}^m B(u^[l], X^[m-l]) + (a P[e2 theta^[m]], 0),

with X^[0] = (u0, theta0), F^[0] = f and F^[m] = 0 afterwards.  Its
coefficients relate to the p-series by H^[l] = u^[l+1] / l!, which
gives an independent check of both recursions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .borel_series import PTaylor, _Products, _is_sym, _prepare, _resize, _working_lattice
from .spectral_field import (
    NormParams,
    PhysicalParams,
    SpectralState,
    buoyancy,
    pair_norm,
)

log = logging.getLogger(__name__)


@dataclass
class TimeTaylor:
    """Entry m holds (u^[m], theta^[m]); entry 0 is the initial data."""

    coeffs: list
    params: PhysicalParams
    truncated: bool = False
    k1: float = 0.0

    @property
    def lattice(self):
        return self.coeffs[0].lattice

    @property
    def M_max(self) -> int:
        return len(self.coeffs) - 1

    def array(self) -> np.ndarray:
        return np.stack([c.pair for c in self.coeffs])


def time_taylor(
    initial: SpectralState,
    f_hat,
    pp: PhysicalParams,
    M_max: int,
    ceiling: int | None = None,
) -> TimeTaylor:
    """Taylor coefficients in t through order ``M_max``.

    The lattice grows to min(ceiling, (M_max+1) K1) in sup norm so that no
    coefficient is cut off below the ceiling; ``truncated`` records when
    the ceiling was binding.  Products are formed on an alias-free grid and
    masked to the exact convolution support.
    """
    if M_max < 1:
        raise ValueError(f"M_max must be >= 1, got {M_max}")
    f_hat = _prepare(initial, f_hat, pp)
    lat, truncated = _working_lattice(initial, f_hat, M_max - 1, ceiling)
    if lat != initial.lattice:
        f_hat = _resize(f_hat, initial.lattice.K, lat.K, lat.d)
        initial = initial.embed(lat)
    d = lat.d
    diff = pp.diffusivities()[(slice(None),) + (None,) * d] * lat.k2
    prod = _Products(lat, initial.is_conjugate_symmetric() and _is_sym(f_hat, d))

    coeffs = [initial.pair]
    prod.push(initial.pair)
    for m in range(M_max):
        xm = coeffs[m]
        terms = [(1.0, prod.phys[l], prod.masks[l], prod.phys[m - l], prod.masks[m - l])
                 for l in range(m + 1)]
        rhs, _ = prod.flux(terms)
        rhs -= diff * xm
        rhs[:d] += buoyancy(xm[d], lat, pp.a)
        if m == 0:
            rhs[:d] += f_hat
        nxt = rhs / (m + 1)
        coeffs.append(nxt)
        prod.push(nxt)
    states = [SpectralState.from_pair(lat, c) for c in coeffs]
    mask = np.any(initial.pair != 0, axis=0) | np.any(f_hat != 0, axis=0)
    k1 = float(lat.kabs[mask].max()) if mask.any() else 0.0
    return TimeTaylor(states, pp, truncated=truncated, k1=k1)


def borel_coefficient_check(tt: TimeTaylor, ps: PTaylor, l_max: int | None = None) -> float:
    """max over shared l of max_k |H^[l] - u^[l+1]/l!| / max_k |H^[l]|.

    The two expansions may live on different lattices; both are compared
    on the smaller one.
    """
    L = min(ps.L_max, tt.M_max - 1)
    if l_max is not None:
        L = min(L, l_max)
    K = min(tt.lattice.K, ps.lattice.K)
    d = tt.lattice.d
    worst = 0.0
    for l in range(L + 1):
        a = _resize(ps.coeffs[l].pair, ps.lattice.K, K, d)
        b = _resize(tt.coeffs[l + 1].pair, tt.lattice.K, K, d) / math.factorial(l)
        scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
        if scale == 0:
            continue
        worst = max(worst, float(np.max(np.abs(a - b)) / scale))
    return worst


@dataclass
class GevreyReport:
    """Fit of ||X^[m]|| / m! ~ a0_hat d0_hat^m over the last half of the coefficients."""

    a0_hat: float
    d0_hat: float
    ratios: list
    k1: float
    m1: float
    radius_estimates: dict = field(default_factory=dict)
    window: tuple = (0, 0)

    @property
    def radius(self) -> float:
        return 1.0 / self.d0_hat

    @property
    def radius_floor(self) -> float:
        """K1^-2 M1^-1."""
        return 1.0 / (self.k1**2 * self.m1)

    def to_dict(self) -> dict:
        return {
            "a0_hat": self.a0_hat,
            "d0_hat": self.d0_hat,
            "radius": self.radius,
            "radius_floor": self.radius_floor,
            "k1": self.k1,
            "m1": self.m1,
            "ratios": list(self.ratios),
            "fit_window": list(self.window),
            "radius_estimates": {str(k): v for k, v in self.radius_estimates.items()},
        }


def gevrey_fit(tt: TimeTaylor, norm_params: NormParams = NormParams()) -> GevreyReport:
    """Least-squares fit of log(||X^[m]||/m!) against m over the last half.

    d0_hat = exp(slope), a0_hat = exp(intercept); ratios are
    r_m = (||X^[m+1]||/(m+1)!) / (||X^[m]||/m!).
    """
    norms = np.asarray(pair_norm(tt.array(), tt.lattice, norm_params), dtype=float)
    nz = np.flatnonzero(norms > 0)
    if len(nz) < 8:
        raise ValueError(f"gevrey_fit needs >= 8 nonzero coefficients, got {len(nz)}")
    m = np.arange(len(norms))
    logfact = np.array([math.lgamma(i + 1) for i in m])
    with np.errstate(divide="ignore"):
        y = np.log(norms) - logfact
    sel = nz[nz >= len(norms) // 2]
    if len(sel) < 2:
        sel = nz[-len(nz) // 2:]
    slope, intercept = np.polyfit(m[sel], y[sel], 1)
    ratios = []
    for i in range(len(norms) - 1):
        if norms[i] > 0 and norms[i + 1] > 0:
            ratios.append(float(np.exp(y[i + 1] - y[i])))
    return GevreyReport(
        a0_hat=float(np.exp(intercept)),
        d0_hat=float(np.exp(slope)),
        ratios=ratios,
        k1=tt.k1,
        m1=tt.params.m1,
        window=(int(sel[0]), int(sel[-1])),
    )


def amplitude_sweep(
    initial: SpectralState,
    f_hat,
    pp: PhysicalParams,
    M_max: int,
    scales=(1.0, 10.0, 100.0),
    ceiling: int | None = None,
    norm_params: NormParams = NormParams(),
) -> dict:
    """gevrey_fit for c (u0, theta0, f) at each scale c; returns {c: GevreyReport}."""
    out = {}
    for c in scales:
        tt = time_taylor(initial * c, np.asarray(f_hat) * c, pp, M_max, ceiling)
        out[c] = gevrey_fit(tt, norm_params)
    radii = {c: r.radius for c, r in out.items()}
    for r in out.values():
        r.radius_estimates = dict(radii)
    return out


def qn_poly(n: int, y: float) -> float:
    """Q_n(y) = sum_{j=0}^n 2^(n-j) y^j / j!."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    total, term = 0.0, 1.0
    for j in range(n + 1):
        if j:
            term *= y / j
        total += 2.0 ** (n - j) * term
    return total
