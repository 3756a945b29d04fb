"""Order-one Bessel functions and the Borel-plane heat kernel.

The kernel of the integral equation is

    G(z, z') = z' (-J1(z) Y1(z') + Y1(z) J1(z')),   0 <= z' <= z,

with z = 2|k| sqrt(visc p).  In the p variables it appears as
H(p, p', k) = pi G(z, z') / z, the solution of
(p d_pp + 2 d_p + visc |k|^2) H = 0 with H = 0, H_p = 1/p at p' = p.

J1 and Y1 are evaluated in-house: ascending series below ``SERIES_SWITCH``
and the Hankel asymptotic expansion above it (about 3e-12 absolute error
at the switch, better elsewhere).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SERIES_SWITCH = 12.0
SMALL_Z = 1e-4
EULER_GAMMA = 0.5772156649015329
TWO_OVER_PI = 2.0 / np.pi

_SERIES_TERMS = 60


def _j1_series(z):
    x = -0.25 * z * z
    term = 0.5 * z
    total = term.copy()
    for m in range(1, _SERIES_TERMS):
        term = term * x / (m * (m + 1))
        total += term
    return total


def _y1_regular_series(z):
    # sum_k (psi(k+1) + psi(k+2)) (-z^2/4)^k (z/2) / (k! (k+1)!)
    x = -0.25 * z * z
    term = 0.5 * z
    psi1, psi2 = -EULER_GAMMA, 1.0 - EULER_GAMMA
    total = (psi1 + psi2) * term
    for k in range(1, _SERIES_TERMS):
        term = term * x / (k * (k + 1))
        psi1 += 1.0 / k
        psi2 += 1.0 / (k + 1)
        total += (psi1 + psi2) * term
    return total


def _hankel_pq(z):
    # P, Q of the large-argument expansion for order 1, summed to the smallest term
    mu = 4.0
    P = np.ones_like(z)
    Q = np.zeros_like(z)
    term = np.ones_like(z)
    done = np.zeros(z.shape, dtype=bool)
    last = np.full(z.shape, np.inf)
    for k in range(1, 80):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        mag = np.abs(term)
        done |= mag >= last
        add = np.where(done, 0.0, term)
        if k % 2:
            Q += add if (k // 2) % 2 == 0 else -add
        else:
            P += -add if (k // 2) % 2 else add
        last = np.where(done, last, mag)
        if done.all():
            break
    return P, Q


def _asymptotic(z):
    P, Q = _hankel_pq(z)
    chi = z - 0.75 * np.pi
    amp = np.sqrt(TWO_OVER_PI / z)
    c, s = np.cos(chi), np.sin(chi)
    return amp * (P * c - Q * s), amp * (P * s + Q * c)


def _as_array(z):
    z = np.asarray(z, dtype=float)
    return z, z.ndim == 0


def bessel_j1(z):
    """J1(z) for real z >= 0 (vectorized)."""
    z, scalar = _as_array(z)
    z = np.atleast_1d(z)
    if np.any(z < 0):
        raise ValueError("bessel_j1 expects z >= 0")
    out = np.empty_like(z)
    small = z < SERIES_SWITCH
    out[small] = _j1_series(z[small])
    if (~small).any():
        out[~small] = _asymptotic(z[~small])[0]
    return out[0] if scalar else out


def bessel_y1(z):
    """Y1(z) for real z > 0 (vectorized)."""
    z, scalar = _as_array(z)
    z = np.atleast_1d(z)
    if np.any(z <= 0):
        raise ValueError("bessel_y1 requires z > 0")
    out = np.empty_like(z)
    small = z < SERIES_SWITCH
    zs = z[small]
    out[small] = (
        -TWO_OVER_PI / zs
        + TWO_OVER_PI * np.log(0.5 * zs) * _j1_series(zs)
        - _y1_regular_series(zs) / np.pi
    )
    if (~small).any():
        out[~small] = _asymptotic(z[~small])[1]
    return out[0] if scalar else out


def z_y1(z):
    """z Y1(z), continuous at z = 0 where it equals -2/pi."""
    z, scalar = _as_array(z)
    z = np.atleast_1d(z)
    out = np.full(z.shape, -TWO_OVER_PI)
    pos = z > 0
    out[pos] = z[pos] * bessel_y1(z[pos])
    return out[0] if scalar else out


def j1_ratio(z):
    """2 J1(z) / z, equal to 1 at z = 0 and bounded by 1 in magnitude."""
    z, scalar = _as_array(z)
    z = np.atleast_1d(z)
    if np.any(z < 0):
        raise ValueError("j1_ratio expects z >= 0")
    out = np.empty_like(z)
    small = z < SERIES_SWITCH
    # series of 2 J1(z)/z: sum (-z^2/4)^m / (m! (m+1)!)
    zs = z[small]
    x = -0.25 * zs * zs
    term = np.ones_like(zs)
    total = term.copy()
    for m in range(1, _SERIES_TERMS):
        term = term * x / (m * (m + 1))
        total += term
    out[small] = total
    if (~small).any():
        out[~small] = 2.0 * bessel_j1(z[~small]) / z[~small]
    return out[0] if scalar else out


def kernel_G(z, z_prime):
    """G(z, z') = z'(-J1(z) Y1(z') + Y1(z) J1(z')) for 0 <= z' <= z."""
    z = np.asarray(z, dtype=float)
    zp = np.asarray(z_prime, dtype=float)
    scalar = z.ndim == 0 and zp.ndim == 0
    z, zp = np.broadcast_arrays(np.atleast_1d(z), np.atleast_1d(zp))
    if np.any(zp < 0) or np.any(zp > z):
        raise ValueError("kernel_G requires 0 <= z' <= z")
    out = np.zeros(z.shape)
    pos = z > 0
    zz, zpp = z[pos], zp[pos]
    out[pos] = zpp * bessel_y1(zz) * bessel_j1(zpp) - bessel_j1(zz) * z_y1(zpp)
    out[z == zp] = 0.0
    return out[0] if scalar else out


def kernel_G_dzprime(z):
    """Closed form of dG/dz' at z' = z, from the Wronskian: -2/pi for z > 0."""
    z = np.asarray(z, dtype=float)
    return np.where(z > 0, -TWO_OVER_PI, 0.0)


@dataclass(frozen=True)
class KernelArgs:
    p: float
    p_prime: float
    k_abs: float
    visc: float

    def __post_init__(self):
        if not 0 <= self.p_prime <= self.p:
            raise ValueError(f"need 0 <= p' <= p, got p'={self.p_prime}, p={self.p}")
        if self.k_abs < 0 or not self.visc > 0:
            raise ValueError("need k_abs >= 0 and visc > 0")

    @property
    def z(self) -> float:
        return 2.0 * self.k_abs * np.sqrt(self.visc * self.p)

    @property
    def z_prime(self) -> float:
        return 2.0 * self.k_abs * np.sqrt(self.visc * self.p_prime)


def _kernel_H_small(p, pp, lam):
    # H = 1 - p'/p - (lam/2)(p - p'^2/p - 2 p' ln(p/p')) + O(z^4), lam = visc |k|^2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, pp / np.where(p > 0, p, 1.0), 0.0)
        log_term = np.where(pp > 0, pp * np.log(np.where(pp > 0, p / np.where(pp > 0, pp, 1.0), 1.0)), 0.0)
        first = np.where(p > 0, 1.0 - ratio, 0.0)
        second = p - pp * ratio - 2.0 * log_term
    return first - 0.5 * lam * second


def kernel_H_values(p, p_prime, k_abs, visc):
    """Vectorized pi G(z, z')/z with the analytic small-z limit."""
    p, pp, k_abs = np.broadcast_arrays(
        np.asarray(p, float), np.asarray(p_prime, float), np.asarray(k_abs, float)
    )
    p, pp, k_abs = np.atleast_1d(p), np.atleast_1d(pp), np.atleast_1d(k_abs)
    z = 2.0 * k_abs * np.sqrt(visc * p)
    zp = 2.0 * k_abs * np.sqrt(visc * pp)
    out = np.empty(z.shape)
    small = z < SMALL_Z
    out[small] = _kernel_H_small(p[small], pp[small], visc * k_abs[small] ** 2)
    big = ~small
    out[big] = np.pi * kernel_G(z[big], zp[big]) / z[big]
    return out


def kernel_H(args: KernelArgs) -> float:
    """pi G(z, z')/z; below z = 1e-4 the two-term small-z expansion is used."""
    return float(kernel_H_values(args.p, args.p_prime, args.k_abs, args.visc)[0])


def kernel_ode_residual(args: KernelArgs, h: float) -> float:
    """Central-difference value of p H_pp + 2 H_p + visc |k|^2 H at (p, p')."""
    if not args.p_prime < args.p - 2 * h:
        raise ValueError("need p' < p - 2h so the stencil stays inside p' <= p")
    ps = np.array([args.p - h, args.p, args.p + h])
    Hm, H0, Hp = kernel_H_values(ps, args.p_prime, args.k_abs, args.visc)
    Hpp = (Hp - 2 * H0 + Hm) / h**2
    Hp1 = (Hp - Hm) / (2 * h)
    return float(args.p * Hpp + 2 * Hp1 + args.visc * args.k_abs**2 * H0)


@dataclass(frozen=True)
class KernelSup:
    """Grid supremum of |G| (or |G/z|) with its maximizer."""

    value: float
    z: float
    z_prime: float
    limit: float

    @property
    def bound(self) -> float:
        """Value used in certificates: max of the grid value and the known limit."""
        return max(self.value, self.limit)


def _grid_sup(z_max: float, step: float, divide_by_z: bool) -> KernelSup:
    zg = np.arange(0.0, z_max + 0.5 * step, step)
    J = bessel_j1(zg)
    Y = np.empty_like(zg)
    Y[1:] = bessel_y1(zg[1:])
    zY = z_y1(zg)
    zJ = zg * J
    best, arg = 0.0, (0.0, 0.0)
    for i in range(1, len(zg)):
        G = np.abs(Y[i] * zJ[: i + 1] - J[i] * zY[: i + 1])
        if divide_by_z:
            G = G / zg[i]
        j = int(np.argmax(G))
        if G[j] > best:
            best, arg = float(G[j]), (float(zg[i]), float(zg[j]))
    limit = 1.0 / np.pi if divide_by_z else TWO_OVER_PI
    return KernelSup(best, arg[0], arg[1], limit)


@lru_cache(maxsize=8)
def sup_abs_G(z_max: float = 50.0, step: float = 0.01) -> KernelSup:
    """sup |G(z, z')| over 0 <= z' <= z <= z_max on a uniform grid.

    G approaches (2/pi) sqrt(z'/z) sin(z - z') for large arguments, so the
    supremum over all z > 0 is the limit 2/pi, approached from below.
    """
    return _grid_sup(z_max, step, divide_by_z=False)


@lru_cache(maxsize=8)
def sup_abs_G_over_z(z_max: float = 50.0, step: float = 0.01) -> KernelSup:
    """sup |G(z, z')/z|; the small-z limit (1/pi)(1 - z'^2/z^2) gives 1/pi."""
    return _grid_sup(z_max, step, divide_by_z=True)
