"""Truncated Fourier-lattice fields for the periodic Boussinesq system.

A field on the box [0, 2*pi)^d is stored through its Fourier coefficients on
the integer lattice {k : max|k_i| <= K}.  Arrays are laid out with axis
index ``i`` holding wavenumber ``i - K``, so C-order flattening is the
lexicographic order over k used by every file format in this package.

Convention: u(x) = sum_k u_hat(k) exp(i k.x), hence the coefficient of a
product is the lattice convolution sum_k' f(k') g(k - k').
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft
import scipy.signal

__all__ = [
    "DivergenceError",
    "LatticeMismatchError",
    "Lattice",
    "NormKind",
    "NormParams",
    "PhysicalParams",
    "ProductGrid",
    "SpectralState",
    "buoyancy",
    "convolve",
    "dilate",
    "divergence",
    "flux_divergence",
    "hodge_project",
    "norm",
    "pair_norm",
    "project",
    "support_mask",
    "transport",
    "u1_theta1",
]

_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Set the thread count handed to scipy.fft for pseudo-spectral products."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


class LatticeMismatchError(ValueError):
    """Two spectral objects live on different lattices."""


class DivergenceError(ValueError):
    """A velocity field that must be divergence-free is not."""


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity ``nu``, diffusivity ``mu``, buoyancy ``a`` and dimension ``d``."""

    nu: float = 1.0
    mu: float = 1.0
    a: float = 0.0
    d: int = 2

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.a >= 0:
            raise ValueError(f"a must be non-negative, got {self.a}")
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")

    @property
    def m1(self) -> float:
        return max(self.nu, self.mu)

    def diffusivities(self) -> np.ndarray:
        """Per-component diffusion constants (nu for each velocity component, mu last)."""
        return np.array([self.nu] * self.d + [self.mu])


class NormKind(str, enum.Enum):
    GAMMA_BETA = "GammaBeta"
    L1_LINF = "L1LInf"


@dataclass(frozen=True)
class NormParams:
    """Weighted sup norm (GammaBeta) or the max of l1 and sup (L1LInf)."""

    gamma: float = 3.0
    beta: float = 0.0
    kind: NormKind = NormKind.L1_LINF

    def __post_init__(self):
        object.__setattr__(self, "kind", NormKind(self.kind))
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    def check_dimension(self, d: int) -> None:
        if self.kind is NormKind.GAMMA_BETA and not self.gamma > d:
            raise ValueError(
                f"GammaBeta norm needs gamma > d, got gamma={self.gamma}, d={d}"
            )


@dataclass(frozen=True)
class Lattice:
    """Integer wavenumbers k in Z^d with max|k_i| <= K."""

    d: int
    K: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.K + 1,) * self.d

    @property
    def size(self) -> int:
        return (2 * self.K + 1) ** self.d

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavevectors, shape (d, *shape)."""
        axis = np.arange(-self.K, self.K + 1)
        return np.array(np.meshgrid(*([axis] * self.d), indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k.astype(float) ** 2, axis=0)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @property
    def origin(self) -> tuple[int, ...]:
        return (self.K,) * self.d

    def index(self, k) -> tuple[int, ...]:
        k = tuple(int(c) for c in k)
        if len(k) != self.d or max(abs(c) for c in k) > self.K:
            raise KeyError(f"wavevector {k} outside lattice (d={self.d}, K={self.K})")
        return tuple(c + self.K for c in k)

    def contains(self, k) -> bool:
        return len(k) == self.d and max(abs(int(c)) for c in k) <= self.K

    def wavevectors(self) -> np.ndarray:
        """All k in lexicographic order, shape (size, d)."""
        return self.k.reshape(self.d, -1).T.copy()


def _resize(arr: np.ndarray, K_old: int, K_new: int, d: int) -> np.ndarray:
    lead = arr.shape[: arr.ndim - d]
    out = np.zeros(lead + (2 * K_new + 1,) * d, dtype=arr.dtype)
    m = min(K_old, K_new)
    src = tuple(slice(K_old - m, K_old + m + 1) for _ in range(d))
    dst = tuple(slice(K_new - m, K_new + m + 1) for _ in range(d))
    out[(Ellipsis,) + dst] = arr[(Ellipsis,) + src]
    return out


class SpectralState:
    """Velocity and temperature Fourier coefficients on one lattice.

    ``u_hat`` has shape (d, *lattice.shape) and ``theta_hat`` has shape
    lattice.shape.  Instances are treated as immutable.
    """

    __slots__ = ("lattice", "u_hat", "theta_hat")

    def __init__(self, lattice: Lattice, u_hat, theta_hat):
        u_hat = np.asarray(u_hat, dtype=complex)
        theta_hat = np.asarray(theta_hat, dtype=complex)
        if u_hat.shape != (lattice.d,) + lattice.shape:
            raise LatticeMismatchError(
                f"u_hat shape {u_hat.shape} does not fit lattice {lattice}"
            )
        if theta_hat.shape != lattice.shape:
            raise LatticeMismatchError(
                f"theta_hat shape {theta_hat.shape} does not fit lattice {lattice}"
            )
        self.lattice = lattice
        self.u_hat = u_hat
        self.theta_hat = theta_hat

    @classmethod
    def zeros(cls, lattice: Lattice) -> "SpectralState":
        return cls(
            lattice,
            np.zeros((lattice.d,) + lattice.shape, complex),
            np.zeros(lattice.shape, complex),
        )

    @classmethod
    def from_pair(cls, lattice: Lattice, pair: np.ndarray) -> "SpectralState":
        pair = np.asarray(pair)
        return cls(lattice, pair[: lattice.d], pair[lattice.d])

    @classmethod
    def from_modes(cls, lattice: Lattice, modes, symmetrize: bool = True) -> "SpectralState":
        """Build a state from ``(k, u, theta)`` triples.

        With ``symmetrize`` the conjugate coefficient is written at -k so the
        physical fields are real.
        """
        state = cls.zeros(lattice)
        u, th = state.u_hat, state.theta_hat
        for k, uk, thk in modes:
            idx = lattice.index(k)
            u[(slice(None),) + idx] += np.asarray(uk, dtype=complex)
            th[idx] += complex(thk)
            if symmetrize and any(int(c) != 0 for c in k):
                nidx = lattice.index([-int(c) for c in k])
                u[(slice(None),) + nidx] += np.conj(np.asarray(uk, dtype=complex))
                th[nidx] += np.conj(complex(thk))
        return state

    @property
    def pair(self) -> np.ndarray:
        """(d+1, *shape) array stacking velocity components and temperature."""
        return np.concatenate([self.u_hat, self.theta_hat[None]], axis=0)

    def embed(self, lattice: Lattice) -> "SpectralState":
        """Zero-pad or truncate onto another lattice of the same dimension."""
        if lattice.d != self.lattice.d:
            raise LatticeMismatchError("cannot embed across dimensions")
        pair = _resize(self.pair, self.lattice.K, lattice.K, lattice.d)
        return SpectralState.from_pair(lattice, pair)

    def _check(self, other: "SpectralState"):
        if other.lattice != self.lattice:
            raise LatticeMismatchError(f"{self.lattice} vs {other.lattice}")

    def __add__(self, other):
        self._check(other)
        return SpectralState(self.lattice, self.u_hat + other.u_hat, self.theta_hat + other.theta_hat)

    def __sub__(self, other):
        self._check(other)
        return SpectralState(self.lattice, self.u_hat - other.u_hat, self.theta_hat - other.theta_hat)

    def __mul__(self, c):
        return SpectralState(self.lattice, c * self.u_hat, c * self.theta_hat)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.pair)))

    def is_zero(self) -> bool:
        return not np.any(self.u_hat) and not np.any(self.theta_hat)

    def max_divergence(self) -> float:
        return float(np.max(np.abs(divergence(self))))

    def is_divergence_free(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, self.max_abs() * self.lattice.K)
        return self.max_divergence() <= tol * scale

    def conjugate_asymmetry(self) -> float:
        """max |X(-k) - conj(X(k))| over all components."""
        pair = self.pair
        flipped = pair[(slice(None),) + (slice(None, None, -1),) * self.lattice.d]
        return float(np.max(np.abs(flipped - np.conj(pair))))

    def is_conjugate_symmetric(self, tol: float = 1e-12) -> bool:
        return self.conjugate_asymmetry() <= tol * max(1.0, self.max_abs())

    def support_radius(self) -> float:
        """Largest |k| carrying a nonzero coefficient (0 for the zero state)."""
        mask = np.any(self.pair != 0, axis=0)
        return float(self.lattice.kabs[mask].max()) if mask.any() else 0.0

    def __repr__(self):
        return f"SpectralState(d={self.lattice.d}, K={self.lattice.K}, max|.|={self.max_abs():.3e})"


def hodge_project(v, k) -> np.ndarray:
    """Project one vector onto the plane orthogonal to k; identity at k = 0."""
    v = np.asarray(v, dtype=complex)
    k = np.asarray(k, dtype=float)
    k2 = k @ k
    if k2 == 0:
        return v.copy()
    return v - k * (k @ v) / k2


def project(u_hat: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Apply P_k mode by mode to a (d, *shape) array (and any leading axes)."""
    k = lattice.k.astype(float)
    k2 = lattice.k2
    kdotu = np.sum(k * u_hat, axis=-lattice.d - 1, keepdims=True)
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    return u_hat - k * kdotu * inv


def divergence(state: SpectralState) -> np.ndarray:
    """k . u_hat(k) per mode."""
    return np.sum(state.lattice.k * state.u_hat, axis=0)


def _support_box(a: np.ndarray):
    nz = np.nonzero(a)
    if len(nz[0]) == 0:
        return None
    return tuple(slice(int(ix.min()), int(ix.max()) + 1) for ix in nz)


def convolve(f: np.ndarray, g: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Lattice convolution (f * g)(k) = sum_k' f(k') g(k - k'), truncated to the lattice.

    Direct summation; both arguments are first cropped to their nonzero
    bounding boxes, which is exact and keeps sparse coefficients cheap.
    """
    shape = lattice.shape
    if np.shape(f) != shape or np.shape(g) != shape:
        raise LatticeMismatchError(
            f"convolve operands {np.shape(f)}, {np.shape(g)} vs lattice shape {shape}"
        )
    out = np.zeros(shape, dtype=complex)
    bf, bg = _support_box(f), _support_box(g)
    if bf is None or bg is None:
        return out
    full = scipy.signal.convolve(f[bf], g[bg], mode="full", method="direct")
    K = lattice.K
    src, dst = [], []
    for ax in range(lattice.d):
        off = bf[ax].start + bg[ax].start - K
        lo = max(0, -off)
        hi = min(full.shape[ax], 2 * K + 1 - off)
        if hi <= lo:
            return out
        src.append(slice(lo, hi))
        dst.append(slice(lo + off, hi + off))
    out[tuple(dst)] = full[tuple(src)]
    return out


def transport(v: np.ndarray, pair: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Advection of ``pair`` by ``v`` in divergence form.

    Returns the (d+1, *shape) array whose velocity part is
    -i k_j P_k[v_j * w] and whose temperature part is -i k_j (v_j * s),
    with (w, s) = pair.
    """
    d = lattice.d
    out = np.zeros(pair.shape, dtype=complex)
    k = lattice.k
    for j in range(d):
        if not np.any(v[j]):
            continue
        for c in range(d + 1):
            out[c] += k[j] * convolve(v[j], pair[c], lattice)
    out *= -1j
    out[:d] = project(out[:d], lattice)
    return out


def buoyancy(theta: np.ndarray, lattice: Lattice, a: float) -> np.ndarray:
    """a P_k[e_2 theta] as a (..., d, *shape) array."""
    theta = np.asarray(theta)
    lead = theta.shape[: theta.ndim - lattice.d]
    e2 = np.zeros(lead + (lattice.d,) + lattice.shape, dtype=complex)
    e2[(Ellipsis, 1) + (slice(None),) * lattice.d] = a * theta
    return project(e2, lattice)


def _mode_magnitude(pair: np.ndarray, d: int) -> np.ndarray:
    # Euclidean length of the (d+1)-vector at each mode; pair axis sits just before the lattice axes
    return np.sqrt(np.sum(np.abs(pair) ** 2, axis=-d - 1))


def pair_norm(pair: np.ndarray, lattice: Lattice, norm_params: NormParams) -> np.ndarray | float:
    """Norm of (..., d+1, *shape) coefficient arrays, reduced over the last d+1 axes."""
    d = lattice.d
    norm_params.check_dimension(d)
    mag = _mode_magnitude(pair, d)
    flat = mag.reshape(mag.shape[: mag.ndim - d] + (-1,))
    if norm_params.kind is NormKind.GAMMA_BETA:
        w = (1.0 + lattice.kabs) ** norm_params.gamma * np.exp(norm_params.beta * lattice.kabs)
        return np.max(flat * w.ravel(), axis=-1)
    return np.maximum(np.sum(flat, axis=-1), np.max(flat, axis=-1))


def norm(state: SpectralState, norm_params: NormParams) -> float:
    """Discrete (gamma, beta) or L1-and-sup norm of the pair (u_hat, theta_hat)."""
    return float(pair_norm(state.pair, state.lattice, norm_params))


def _require_divergence_free(u_hat: np.ndarray, lattice: Lattice, what: str, tol=1e-10):
    div = np.max(np.abs(np.sum(lattice.k * u_hat, axis=0)))
    scale = max(1.0, float(np.max(np.abs(u_hat))) * lattice.K)
    if div > tol * scale:
        raise DivergenceError(f"{what} is not divergence-free (max |k.u| = {div:.3e})")


def _require_mean_zero(pair: np.ndarray, lattice: Lattice, what: str):
    if np.any(pair[(slice(None),) + lattice.origin] != 0):
        raise ValueError(f"{what} must have zero k=0 mode")


def u1_theta1(state0: SpectralState, f_hat, pp: PhysicalParams) -> SpectralState:
    """Time derivative of (u_hat, theta_hat) at t = 0.

    u1 = -nu|k|^2 u0 - i k_j P_k[u0_j * u0] + a P_k[e_2 theta0] + f
    theta1 = -mu|k|^2 theta0 - i k_j (u0_j * theta0)
    """
    lat = state0.lattice
    f_hat = np.asarray(f_hat, dtype=complex)
    if f_hat.shape != state0.u_hat.shape:
        raise LatticeMismatchError(f"forcing shape {f_hat.shape} vs {state0.u_hat.shape}")
    if pp.d != lat.d:
        raise LatticeMismatchError(f"physical d={pp.d} vs lattice d={lat.d}")
    _require_divergence_free(state0.u_hat, lat, "initial velocity")
    _require_divergence_free(f_hat, lat, "forcing")
    out = transport(state0.u_hat, state0.pair, lat)
    out -= pp.diffusivities()[(slice(None),) + (None,) * lat.d] * lat.k2 * state0.pair
    out[: lat.d] += buoyancy(state0.theta_hat, lat, pp.a) + f_hat
    return SpectralState.from_pair(lat, out)


class ProductGrid:
    """Physical-space grid on which lattice products are alias-free.

    A product of two fields supported in max|k_i| <= K lives in
    max|k_i| <= 2K; with M >= 3K + 1 points per axis nothing aliases back
    into the lattice, so transforming, multiplying pointwise and truncating
    reproduces :func:`convolve` up to rounding.
    """

    def __init__(self, lattice: Lattice, real: bool = False):
        self.lattice = lattice
        self.real = real
        self.M = scipy.fft.next_fast_len(3 * lattice.K + 1)
        idx = np.arange(-lattice.K, lattice.K + 1) % self.M
        self._ix = np.ix_(*([idx] * lattice.d))
        self.npoints = self.M**lattice.d
        self._axes = tuple(range(-lattice.d, 0))

    def to_physical(self, arr: np.ndarray) -> np.ndarray:
        """(..., *lattice.shape) coefficients -> (..., npoints) samples."""
        lead = arr.shape[: arr.ndim - self.lattice.d]
        big = np.zeros(lead + (self.M,) * self.lattice.d, dtype=complex)
        big[(Ellipsis,) + self._ix] = arr
        phys = scipy.fft.ifftn(big, axes=self._axes, norm="forward", workers=_FFT_WORKERS)
        if self.real:
            phys = phys.real
        return phys.reshape(lead + (self.npoints,))

    def to_spectral(self, phys: np.ndarray) -> np.ndarray:
        """(..., npoints) samples -> (..., *lattice.shape) truncated coefficients."""
        lead = phys.shape[:-1]
        grid = phys.reshape(lead + (self.M,) * self.lattice.d)
        coef = scipy.fft.fftn(grid, axes=self._axes, norm="forward", workers=_FFT_WORKERS)
        return coef[(Ellipsis,) + self._ix]

    def products(self, v_phys: np.ndarray, w_phys: np.ndarray) -> np.ndarray:
        """Pointwise flux products v_j w_c, shape (d, d+1, npoints)."""
        return v_phys[:, None, :] * w_phys[None, :, :]


def support_mask(pair: np.ndarray, d: int) -> np.ndarray:
    """Boolean mask of modes where any component is nonzero."""
    return np.any(pair != 0, axis=tuple(range(pair.ndim - d)))


def dilate(mask_a: np.ndarray, mask_b: np.ndarray) -> np.ndarray:
    """Support of a lattice convolution: the Minkowski sum of two masks, truncated."""
    K = (mask_a.shape[0] - 1) // 2
    d = mask_a.ndim
    out = np.zeros(mask_a.shape, dtype=bool)
    ba, bb = _support_box(mask_a), _support_box(mask_b)
    if ba is None or bb is None:
        return out
    full = scipy.signal.convolve(
        mask_a[ba].astype(float), mask_b[bb].astype(float), mode="full", method="direct"
    ) > 0.5
    src, dst = [], []
    for ax in range(d):
        off = ba[ax].start + bb[ax].start - K
        lo, hi = max(0, -off), min(full.shape[ax], 2 * K + 1 - off)
        if hi <= lo:
            return out
        src.append(slice(lo, hi))
        dst.append(slice(lo + off, hi + off))
    out[tuple(dst)] = full[tuple(src)]
    return out


def flux_divergence(flux_hat: np.ndarray, lattice: Lattice) -> np.ndarray:
    """-i k_j F_jc for a (..., d, d+1, *shape) flux array; velocity rows projected."""
    d = lattice.d
    k = lattice.k.astype(float)
    lead = flux_hat.ndim - d - 2
    kk = k.reshape((1,) * lead + (d, 1) + lattice.shape)
    out = -1j * np.sum(kk * flux_hat, axis=lead)
    out[(Ellipsis, slice(0, d)) + (slice(None),) * d] = project(
        out[(Ellipsis, slice(0, d)) + (slice(None),) * d], lattice
    )
    return out
