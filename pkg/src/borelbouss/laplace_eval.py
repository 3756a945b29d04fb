"""Time-domain values from a Borel solution.

(u, theta)(k, t) = (u0, theta0)(k) + int_0^inf (H, S)(k, p) e^{-p/t} dp for
Re(1/t) > omega.  The integral is cut at the grid horizon P and the
remainder is estimated from the growth seen on the last tenth of the grid.
That estimate is a diagnostic, not a rigorous bound.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .borel_solver import BorelSolution
from .spectral_field import NormParams, SpectralState

log = logging.getLogger(__name__)

CSV_FORMAT_VERSION = 1


class OutsideValidityError(ValueError):
    """Requested t does not satisfy Re(1/t) > omega."""


@dataclass
class TimeSample:
    t: complex | float
    state: SpectralState
    tail_bound: float


def _check_t(t, omega):
    if t == 0:
        raise OutsideValidityError("t must be nonzero")
    s = 1.0 / t
    if np.iscomplexobj(s):
        re = float(np.real(s))
    else:
        if t < 0:
            raise OutsideValidityError(f"t must be positive, got {t}")
        re = float(s)
    if not re > omega:
        raise OutsideValidityError(f"Re(1/t) = {re:g} must exceed omega = {omega:g}")
    return s, re


def tail_bound(solution: BorelSolution, t, omega: float,
               norm_params: NormParams = NormParams()) -> float:
    """M e^{(omega - Re 1/t) P} / (Re 1/t - omega), M = max e^{-omega p}||X(p)|| on the last decade."""
    _, re = _check_t(t, omega)
    p = solution.grid.p
    lo = int(0.9 * solution.grid.n)
    M = float(np.max(np.exp(-omega * p[lo:]) * solution.norms(norm_params)[lo:]))
    P = solution.grid.P
    return M * np.exp((omega - re) * P) / (re - omega)


def eval_time(
    solution: BorelSolution,
    t,
    omega: float,
    norm_params: NormParams = NormParams(),
) -> TimeSample:
    """Laplace integral of the solution at real or complex ``t`` (Simpson rule on the grid)."""
    s, _ = _check_t(t, omega)
    p = solution.grid.p
    w = np.exp(-p * s)
    integrand = solution.data * w[(slice(None),) + (None,) * (solution.data.ndim - 1)]
    integral = scipy.integrate.simpson(integrand, x=p, axis=0)
    pair = solution.initial.pair + integral
    tb = tail_bound(solution, t, omega, norm_params)
    return TimeSample(t, SpectralState.from_pair(solution.lattice, pair), float(tb))


@dataclass
class PhysicalSample:
    """Real fields on the uniform grid x_i = 2 pi i / n in each direction."""

    x: np.ndarray
    u: np.ndarray  # (d, n, ..., n)
    theta: np.ndarray  # (n, ..., n)


def to_physical(state: SpectralState, points_per_axis: int, tol: float = 1e-8) -> PhysicalSample:
    """Synthesize u(x) = sum_k u_hat(k) e^{i k.x} at every grid point.

    Evaluated one axis at a time with exact exponentials, so any number of
    points is allowed.  Raises if the imaginary residue exceeds ``tol``
    relative to the field scale (the input was not conjugate-symmetric).
    """
    if points_per_axis < 1:
        raise ValueError("points_per_axis must be >= 1")
    lat = state.lattice
    d = lat.d
    x = 2 * np.pi * np.arange(points_per_axis) / points_per_axis
    ks = np.arange(-lat.K, lat.K + 1)
    E = np.exp(1j * np.outer(x, ks))  # (n, 2K+1)
    vals = state.pair
    for ax in range(d):
        vals = np.moveaxis(np.tensordot(vals, E, axes=([1 + ax], [1])), -1, 1 + ax)
    scale = max(1.0, float(np.max(np.abs(vals))))
    resid = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    if resid > tol * scale:
        raise ValueError(f"physical field has imaginary residue {resid:.3e}; input not conjugate-symmetric")
    vals = vals.real
    return PhysicalSample(x, vals[:d], vals[d])


def _preamble(writer, config_hash: str):
    writer.writerow([f"# format_version={CSV_FORMAT_VERSION}"])
    writer.writerow([f"# config_hash={config_hash}"])


def spectral_header(d: int) -> list:
    cols = ["t", "valid", "tail_bound"] + [f"k{i + 1}" for i in range(d)]
    for i in range(d):
        cols += [f"u{i + 1}_re", f"u{i + 1}_im"]
    return cols + ["theta_re", "theta_im"]


def _fmt(v) -> str:
    return repr(float(v))


def _fmt_t(t) -> str:
    if isinstance(t, complex) or np.iscomplexobj(t):
        return str(complex(t))
    return _fmt(t)


def write_spectral_csv(path, rows, lattice, config_hash: str = "") -> None:
    """``rows`` is a list of (t, TimeSample or None); None marks a t outside validity."""
    d = lattice.d
    kv = lattice.wavevectors()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        _preamble(w, config_hash)
        w.writerow(spectral_header(d))
        for t, sample in rows:
            if sample is None:
                w.writerow([_fmt_t(t), 0] + [""] * (len(spectral_header(d)) - 2))
                continue
            pair = sample.state.pair.reshape(d + 1, -1)
            for i, k in enumerate(kv):
                vals = []
                for c in range(d + 1):
                    vals += [_fmt(pair[c, i].real), _fmt(pair[c, i].imag)]
                w.writerow([_fmt_t(t), 1, _fmt(sample.tail_bound)] + [int(c) for c in k] + vals)


def physical_header(d: int) -> list:
    names = "xyz"[:d]
    return ["t", "valid"] + list(names) + [f"u{i + 1}" for i in range(d)] + ["theta"]


def write_physical_csv(path, rows, points_per_axis: int, config_hash: str = "", d: int = 2) -> None:
    """``rows`` as in :func:`write_spectral_csv`; fields sampled with :func:`to_physical`."""
    header = physical_header(d)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        _preamble(w, config_hash)
        w.writerow(header)
        for t, sample in rows:
            if sample is None:
                w.writerow([_fmt_t(t), 0] + [""] * (len(header) - 2))
                continue
            if sample.state.lattice.d != d:
                raise ValueError(f"sample at t={t} has d={sample.state.lattice.d}, header has d={d}")
            ps = to_physical(sample.state, points_per_axis)
            for idx in np.ndindex(*(points_per_axis,) * d):
                xs = [_fmt(ps.x[i]) for i in idx]
                us = [_fmt(ps.u[(c,) + idx]) for c in range(d)]
                w.writerow([_fmt_t(t), 1] + xs + us + [_fmt(ps.theta[idx])])
