"""Reference time stepper for the truncated Boussinesq system.

Integrating-factor RK4: with E = exp(-D h) and Eh = exp(-D h/2) for the
diagonal diffusion D = diag(nu|k|^2, mu|k|^2), one step of size h is

    k1 = N(u)
    k2 = N(Eh (u + h/2 k1))
    k3 = N(Eh u + h/2 k2)
    k4 = N(E u + h Eh k3)
    u <- E u + h/6 (E k1 + 2 Eh (k2 + k3) + k4)

where N collects advection, buoyancy and the steady forcing.  It uses the
same lattice convolution as the rest of the package, so any disagreement
with the Borel pipeline points at the time-versus-Borel treatment.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .spectral_field import (
    LatticeMismatchError,
    NormKind,
    NormParams,
    PhysicalParams,
    SpectralState,
    _require_divergence_free,
    buoyancy,
    pair_norm,
    transport,
)


class Scheme(str, enum.Enum):
    INTEGRATING_FACTOR_RK4 = "IntegratingFactorRK4"


@dataclass(frozen=True)
class OracleConfig:
    dt: float
    t_end: float
    scheme: Scheme = Scheme.INTEGRATING_FACTOR_RK4

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValueError(f"t_end must be >= dt, got t_end={self.t_end}, dt={self.dt}")


def _rhs(pair, f_hat, lat, a):
    d = lat.d
    out = transport(pair[:d], pair, lat)
    out[:d] += buoyancy(pair[d], lat, a) + f_hat
    return out


def _advance(pair, f_hat, pp, lat, t, dt):
    """Integrate from 0 to t with steps of at most dt (the last ones equalized)."""
    n = max(1, math.ceil(t / dt - 1e-9))
    h = t / n
    D = pp.diffusivities()[(slice(None),) + (None,) * lat.d] * lat.k2
    E = np.exp(-D * h)
    Eh = np.exp(-D * h / 2)
    for _ in range(n):
        k1 = _rhs(pair, f_hat, lat, pp.a)
        k2 = _rhs(Eh * (pair + 0.5 * h * k1), f_hat, lat, pp.a)
        k3 = _rhs(Eh * pair + 0.5 * h * k2, f_hat, lat, pp.a)
        k4 = _rhs(E * pair + h * Eh * k3, f_hat, lat, pp.a)
        pair = E * pair + (h / 6) * (E * k1 + 2 * Eh * (k2 + k3) + k4)
        if not np.all(np.isfinite(pair)):
            raise FloatingPointError("oracle produced non-finite values")
    return pair


def integrate(initial: SpectralState, f_hat, pp: PhysicalParams, cfg: OracleConfig) -> SpectralState:
    """State at cfg.t_end."""
    return integrate_times(initial, f_hat, pp, cfg.dt, [cfg.t_end])[0]


def integrate_times(initial: SpectralState, f_hat, pp: PhysicalParams, dt: float, times) -> list:
    """States at each of the increasing ``times`` (> 0), stepping with at most ``dt``."""
    lat = initial.lattice
    f_hat = np.asarray(f_hat, dtype=complex)
    _require_divergence_free(initial.u_hat, lat, "initial velocity")
    _require_divergence_free(f_hat, lat, "forcing")
    out = []
    pair = initial.pair.copy()
    t_now = 0.0
    for t in times:
        if t < t_now:
            raise ValueError("times must be increasing")
        if t > t_now:
            pair = _advance(pair, f_hat, pp, lat, t - t_now, dt)
            t_now = t
        out.append(SpectralState.from_pair(lat, pair.copy()))
    return out


@dataclass
class ErrorReport:
    sup_err: float
    l2_err: float
    rel_l2: float
    norm_err: float
    gamma_beta_err: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compare(a: SpectralState, b: SpectralState, norm_params: NormParams = NormParams()) -> ErrorReport:
    """Sup-mode, l2 and normed differences of two states on the same lattice."""
    if a.lattice != b.lattice:
        raise LatticeMismatchError(f"{a.lattice} vs {b.lattice}")
    diff = a.pair - b.pair
    l2 = float(np.sqrt(np.sum(np.abs(diff) ** 2)))
    ref = float(np.sqrt(np.sum(np.abs(b.pair) ** 2)))
    gb = NormParams(norm_params.gamma if norm_params.gamma > a.lattice.d else 3.0,
                    norm_params.beta, NormKind.GAMMA_BETA)
    return ErrorReport(
        sup_err=float(np.max(np.abs(diff))),
        l2_err=l2,
        rel_l2=l2 / ref if ref > 0 else (0.0 if l2 == 0 else math.inf),
        norm_err=float(pair_norm(diff, a.lattice, norm_params)),
        gamma_beta_err=float(pair_norm(diff, a.lattice, gb)),
    )
