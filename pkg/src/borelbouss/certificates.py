"""Existence-time certificates from the contraction argument and its revision.

Two rates are computed.  The basic one is the smallest omega with

    2 C2 sqrt(pi) omega^(-1/2) (2 ||X1||/omega + ||X0||) + 2 C3/omega < 1,

X0 = (u0, theta0), X1 = (u1, theta1).  The improved one uses a computed
solution on [0, p0]: with X^(a) that solution cut off beyond p0 and X^(s)
the integral operator applied to X^(a) on [p0, P_ext],

    b  = omega0 int_{p0}^inf e^(-omega0 p) ||X^(s)(p)|| dp,
    e1 = B1 + B4 + int_0^{p0} e^(-omega0 p) B2(p) dp,

and any omega >= omega0 with omega > e1 + 2 sqrt(B3 b) is admissible.
All numbers here are numerically computed, not interval-certified.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.integrate

from . import borel_kernel as bk
from .borel_solver import BorelSolution, PGrid, apply_N
from .spectral_field import NormKind, NormParams, PhysicalParams, SpectralState, norm, u1_theta1

log = logging.getLogger(__name__)

OMEGA_FLOOR = 1e-6
OMEGA_CEILING = 1e6
BASIC_MARGIN = 1e-9
IMPROVED_MARGIN = 1e-6
# constant from the subalgebra estimates of the Laplace-convolution bound;
# only used in proofs, exposed for reference
M0 = 3.76


def subalgebra_c0(norm_params: NormParams, d: int) -> float:
    """C0 of the product bound ||f * g|| <= C0 ||f|| ||g|| in the chosen norm."""
    if norm_params.kind is NormKind.L1_LINF:
        return 1.0
    g = norm_params.gamma
    if not g > d:
        raise ValueError(f"GammaBeta norm needs gamma > d, got gamma={g}, d={d}")
    if d == 2:
        return math.pi * 2.0 ** (g + 2) / ((g - 1) * (g - 2))
    if d == 3:
        return math.pi * 2.0 ** (g + 4) / ((g - 1) * (g - 2) * (g - 3))
    raise ValueError(f"d must be 2 or 3, got {d}")


def kernel_constants(pp: PhysicalParams, norm_params: NormParams) -> tuple[float, float]:
    """(C2, C3) = (pi C0 sup|G| / min(sqrt nu, sqrt mu), pi a sup|G/z|)."""
    c0 = subalgebra_c0(norm_params, pp.d)
    supG = bk.sup_abs_G().bound
    supGz = bk.sup_abs_G_over_z().bound
    c2 = math.pi * c0 * supG / min(math.sqrt(pp.nu), math.sqrt(pp.mu))
    c3 = math.pi * pp.a * supGz
    return c2, c3


def _data_norms(initial: SpectralState, f_hat, pp, norm_params):
    n0 = norm(initial, norm_params)
    n1 = norm(u1_theta1(initial, f_hat, pp), norm_params)
    return n0, n1


def basic_lhs(omega: float, n0: float, n1: float, c2: float, c3: float) -> float:
    """Left side of the basic contraction condition at ``omega``."""
    return 2 * c2 * math.sqrt(math.pi) * omega**-0.5 * (2 * n1 / omega + n0) + 2 * c3 / omega


def basic_L_lhs(L: float, n0: float, n1: float, c2: float, c3: float) -> float:
    """Left side of the small-L contraction condition."""
    return 2 * c2 * math.sqrt(L) * (2 * L * n1 + n0) + 2 * c3 * L


def _bisect(f, lo, hi, increasing: bool, rtol=1e-13):
    """Root of the monotone f - 1 on [lo, hi] by geometric bisection."""
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if (f(mid) < 1) != increasing:
            hi = mid
        else:
            lo = mid
        if hi / lo - 1 < rtol:
            break
    return lo, hi


def basic_omega(
    initial: SpectralState,
    f_hat,
    pp: PhysicalParams,
    norm_params: NormParams = NormParams(),
    floor: float = OMEGA_FLOOR,
    ceiling: float = OMEGA_CEILING,
    margin: float = BASIC_MARGIN,
) -> float:
    """Smallest omega (times 1 + margin) satisfying the basic condition."""
    n0, n1 = _data_norms(initial, f_hat, pp, norm_params)
    c2, c3 = kernel_constants(pp, norm_params)
    f = lambda w: basic_lhs(w, n0, n1, c2, c3)  # noqa: E731
    if f(floor) < 1:
        return floor
    if f(ceiling) >= 1:
        return math.inf
    _, hi = _bisect(f, floor, ceiling, increasing=False)
    return hi * (1 + margin)


def basic_L(
    initial: SpectralState,
    f_hat,
    pp: PhysicalParams,
    norm_params: NormParams = NormParams(),
    floor: float = OMEGA_FLOOR,
    ceiling: float = OMEGA_CEILING,
    margin: float = BASIC_MARGIN,
) -> float:
    """Largest L (times 1 - margin) satisfying the small-L condition."""
    n0, n1 = _data_norms(initial, f_hat, pp, norm_params)
    c2, c3 = kernel_constants(pp, norm_params)
    f = lambda L: basic_L_lhs(L, n0, n1, c2, c3)  # noqa: E731
    if f(ceiling) < 1:
        return ceiling
    if f(floor) >= 1:
        return 0.0
    lo, _ = _bisect(f, floor, ceiling, increasing=True)
    return lo * (1 - margin)


def hs_small(solution: BorelSolution, p0: float, P_ext: float) -> BorelSolution:
    """Integral operator applied to the solution cut off beyond p0, sampled on [0, P_ext].

    Only samples with p <= p0 are read; the result beyond p0 is the
    extension X^(s) entering the improved certificate.
    """
    grid = solution.grid
    j0 = grid.index_of(p0)
    if P_ext < 2 * p0:
        raise ValueError(f"P_ext={P_ext} must be >= 2 p0 = {2 * p0}")
    n_ext = int(round(P_ext / grid.dp))
    ext = PGrid(grid.dp, n_ext)
    data = np.zeros((n_ext + 1,) + solution.data.shape[1:], dtype=complex)
    data[: j0 + 1] = solution.data[: j0 + 1]
    cut = BorelSolution(ext, data, solution.params, solution.initial, solution.forcing, {})
    out = apply_N(cut)
    return BorelSolution(ext, out, solution.params, solution.initial, solution.forcing,
                         {"p0": p0, "source": "truncated-extension"})


def _kernel_sup_over_z(k_abs: float, visc: float, p0: float, P_ext: float, step: float) -> float:
    """sup |G(z, z')/z| for z0 <= z' <= z <= z1 on a uniform z grid."""
    z0 = 2 * k_abs * math.sqrt(visc * p0)
    z1 = 2 * k_abs * math.sqrt(visc * P_ext)
    m = max(2, int(math.ceil((z1 - z0) / step)) + 1)
    z = np.linspace(z0, z1, m)
    J = bk.bessel_j1(z)
    zJ = z * J
    zY = bk.z_y1(z)
    Y = np.zeros_like(z)
    Y[1:] = bk.bessel_y1(z[1:])
    best = 0.0
    for i in range(1, m):
        G = np.abs(Y[i] * zJ[: i + 1] - J[i] * zY[: i + 1]) / z[i]
        best = max(best, float(G.max()))
    return best


def kernel_B0(lattice, pp: PhysicalParams, norm_params: NormParams, p0: float, P_ext: float,
              step: float = 0.02) -> np.ndarray:
    """B0(k) = C0 sup_{p0 <= p' <= p <= P_ext} |G/z| per mode (max over nu and mu)."""
    c0 = subalgebra_c0(norm_params, pp.d)
    kabs = lattice.kabs
    out = np.zeros(lattice.shape)
    cache = {}
    for idx in np.ndindex(lattice.shape):
        ka = float(kabs[idx])
        if ka == 0:
            continue
        if ka not in cache:
            cache[ka] = max(
                _kernel_sup_over_z(ka, v, p0, P_ext, step) for v in (pp.nu, pp.mu)
            )
        out[idx] = c0 * cache[ka]
    return out


def B3_limit(pp: PhysicalParams, norm_params: NormParams, p0: float) -> float:
    """Large-|k| value of |k| B0(k): C0 / (pi sqrt(min(nu, mu) p0)).

    |k| |G/z| = |G| / (2 sqrt(visc p)) with |G| <= 2/pi, so this bounds
    |k| B0(k) for every k and is approached as |k| grows.
    """
    return subalgebra_c0(norm_params, pp.d) / (math.pi * math.sqrt(min(pp.nu, pp.mu) * p0))


@dataclass
class Certificate:
    c0: float
    c2: float
    c3: float
    omega_basic: float
    L_basic: float
    omega0: float | None = None
    p0: float | None = None
    P_ext: float | None = None
    eps1: float | None = None
    b: float | None = None
    b_truncated: float | None = None
    b_tail_estimate: float | None = None
    B1: float | None = None
    B3_lattice: float | None = None
    B2_integral: float | None = None
    B3: float | None = None
    B4: float | None = None
    omega_improved: float | None = None
    preconditions_hold: bool | None = None
    inconclusive: bool = False
    notes: list = field(default_factory=list)

    @property
    def T_existence(self) -> float:
        cands = [self.omega_basic]
        if self.omega_improved is not None and not self.inconclusive:
            cands.append(self.omega_improved)
        w = min(cands)
        return math.inf if w <= 0 else 1.0 / w

    def improved_bound(self) -> float:
        """eps1 + 2 sqrt(B3 b)."""
        return self.eps1 + 2 * math.sqrt(self.B3 * self.b)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["T_existence"] = self.T_existence
        out["label"] = "numerically computed, not interval-certified"
        return {k: _finite(v) for k, v in out.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


def _tail_estimate(p, g):
    """Geometric tail of int g beyond the last sample, from the last-decade decay."""
    n = len(p)
    lo = max(0, n - max(2, n // 10))
    a, b_ = g[lo], g[-1]
    if b_ <= 0:
        return 0.0
    if a <= b_ or p[-1] == p[lo]:
        return math.inf
    lam = math.log(a / b_) / (p[-1] - p[lo])
    return float(b_ / lam)


def improved_omega(
    solution: BorelSolution,
    pp: PhysicalParams,
    norm_params: NormParams,
    omega0: float,
    p0: float,
    P_ext: float,
    ceiling: float = OMEGA_CEILING,
    margin: float = IMPROVED_MARGIN,
    kernel_step: float = 0.02,
) -> Certificate:
    """Revised rate from the solution on [0, p0] and its extension to [p0, P_ext]."""
    if omega0 < 0:
        raise ValueError(f"omega0 must be >= 0, got {omega0}")
    initial, f_hat = solution.initial, solution.forcing
    lat = solution.lattice
    c0 = subalgebra_c0(norm_params, pp.d)
    c2, c3 = kernel_constants(pp, norm_params)
    cert = Certificate(
        c0=c0, c2=c2, c3=c3,
        omega_basic=basic_omega(initial, f_hat, pp, norm_params),
        L_basic=basic_L(initial, f_hat, pp, norm_params),
        omega0=omega0, p0=p0, P_ext=P_ext,
    )
    j0 = solution.grid.index_of(p0)
    ext = hs_small(solution, p0, P_ext)

    B0 = kernel_B0(lat, pp, norm_params, p0, P_ext, kernel_step)
    B3_lat = float(np.max(lat.kabs * B0))
    B3 = max(B3_lat, B3_limit(pp, norm_params, p0))
    B4 = float(pp.a * np.max(B0))
    n0 = norm(initial, norm_params)
    B1 = 2 * B3 * n0
    p = solution.grid.p[: j0 + 1]
    B2 = 2 * B3 * solution.norms(norm_params)[: j0 + 1]
    B2_int = float(scipy.integrate.simpson(np.exp(-omega0 * p) * B2, x=p)) if j0 >= 2 else \
        float(np.trapezoid(np.exp(-omega0 * p) * B2, p))
    eps1 = B1 + B4 + B2_int

    if omega0 == 0:
        b_trunc, b_tail = 0.0, 0.0
        cert.notes.append("omega0 = 0 makes b vanish identically")
    else:
        pe = ext.grid.p[j0:]
        g = np.exp(-omega0 * pe) * ext.norms(norm_params)[j0:]
        b_trunc = omega0 * float(scipy.integrate.simpson(g, x=pe))
        b_tail = omega0 * _tail_estimate(pe, g)
    b = b_trunc + b_tail
    cert.notes.append("integral over [p0, inf) truncated at P_ext plus a geometric tail estimate")
    cert.B1, cert.B2_integral, cert.B3, cert.B4 = B1, B2_int, B3, B4
    cert.B3_lattice = B3_lat
    cert.eps1, cert.b, cert.b_truncated, cert.b_tail_estimate = eps1, b, b_trunc, b_tail

    if not math.isfinite(b):
        cert.inconclusive = True
        cert.notes.append("tail of the extension does not decay on the last decade")
        return cert
    w = max(omega0, eps1 + 2 * math.sqrt(B3 * b)) * (1 + margin)
    if w == 0:
        w = OMEGA_FLOOR
    cert.omega_improved = w
    cert.preconditions_hold = bool(eps1 < w and (eps1 - w) ** 2 > 4 * B3 * b)
    if w > ceiling:
        cert.inconclusive = True
        cert.notes.append(f"improved rate {w:g} exceeds ceiling {ceiling:g}")
    return cert
