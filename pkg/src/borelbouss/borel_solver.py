"""Explicit marching solver for the Borel-plane integral equation.

For every mode and component c (velocity with visc = nu, temperature
with visc = mu) the unknown X = (H, S) satisfies

    X(k, p) = int_0^p Hk(p, p', k) R(k, p') dp' + X1(k) 2 J1(z)/z,

with Hk = pi G(z, z')/z, z = 2|k| sqrt(visc p), X1 = (u1, theta1) and
the source

    R = (-i k_j P[u0_j * H + H_j * u0 + H_j ** H] + a P[e2 S],
         -i k_j (u0_j * S + H_j * theta0 + H_j ** S)).

``*`` is the lattice convolution and ``**`` adds a Laplace convolution in p.
Because G(z, z') = z' Y1(z) J1(z') - J1(z) z' Y1(z') separates, the
trapezoid sum over p' collapses to two running sums per mode:

    X_j = (pi/z_j) (Y1(z_j) A_j - J1(z_j) B_j) + X1 2 J1(z_j)/z_j,
    A_j = sum_{i<j} w_i z_i J1(z_i) R_i,   B_j = sum_{i<j} w_i z_i Y1(z_i) R_i.

The diagonal i = j is left out: its kernel value is zero, which is what
makes the scheme explicit.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal

from . import borel_kernel as bk
from .borel_series import PTaylor, _is_sym, _prepare, eval_ptaylor, p_series, radius_estimate
from .spectral_field import (
    Lattice,
    LatticeMismatchError,
    NormParams,
    PhysicalParams,
    ProductGrid,
    SpectralState,
    buoyancy,
    flux_divergence,
    pair_norm,
    u1_theta1,
)

log = logging.getLogger(__name__)

SIGN_CONVENTION = "minus-ik"
FORMAT_VERSION = 1
MAGIC = b"BBSOL\n"


class MarchBlowupError(FloatingPointError):
    """Non-finite values appeared while marching."""

    def __init__(self, index: int, last_valid: int):
        super().__init__(f"non-finite state at grid index {index}; last valid index {last_valid}")
        self.index = index
        self.last_valid = last_valid


class SeedRadiusError(ValueError):
    """The seed interval does not fit inside half the series radius; refine dp."""


class PicardDivergenceError(RuntimeError):
    """Picard sweeps grew for three consecutive iterations."""


@dataclass(frozen=True)
class PGrid:
    """Uniform grid p_j = j dp, j = 0..n."""

    dp: float
    n: int

    def __post_init__(self):
        if not self.dp > 0:
            raise ValueError(f"dp must be positive, got {self.dp}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")

    @classmethod
    def from_horizon(cls, dp: float, P: float) -> "PGrid":
        return cls(dp, int(round(P / dp)))

    @property
    def P(self) -> float:
        return self.n * self.dp

    @property
    def p(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dp

    def index_of(self, p: float, rtol: float = 1e-9) -> int:
        """Grid index of ``p``; raises if ``p`` is not a grid point."""
        j = int(round(p / self.dp))
        if not 0 <= j <= self.n or abs(j * self.dp - p) > rtol * max(1.0, abs(p)):
            raise ValueError(f"p={p} is not on the grid (dp={self.dp}, n={self.n})")
        return j


@dataclass
class BorelSolution:
    """(H, S) sampled on a PGrid; ``data`` has shape (n+1, d+1, *lattice.shape)."""

    grid: PGrid
    data: np.ndarray
    params: PhysicalParams
    initial: SpectralState
    forcing: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def lattice(self) -> Lattice:
        return self.initial.lattice

    def state(self, j: int) -> SpectralState:
        return SpectralState.from_pair(self.lattice, self.data[j])

    @property
    def states(self) -> list:
        return [self.state(j) for j in range(self.grid.n + 1)]

    def norms(self, norm_params: NormParams = NormParams()) -> np.ndarray:
        return np.asarray(pair_norm(self.data, self.lattice, norm_params), dtype=float)

    def truncate(self, n: int) -> "BorelSolution":
        """Solution restricted to the first n+1 grid points."""
        return BorelSolution(
            PGrid(self.grid.dp, n), self.data[: n + 1].copy(), self.params,
            self.initial, self.forcing, dict(self.meta),
        )


def laplace_convolve(F, G, grid: PGrid, j: int):
    """Trapezoid value of int_0^{p_j} F(p_j - s) G(s) ds from grid samples."""
    if not 0 <= j <= grid.n:
        raise IndexError(f"index {j} outside 0..{grid.n}")
    if j == 0:
        return 0.0 * (F[0] * G[0])
    F = np.asarray(F)[: j + 1]
    G = np.asarray(G)[: j + 1]
    w = np.full(j + 1, grid.dp)
    w[0] = w[-1] = 0.5 * grid.dp
    return np.sum(w * F[::-1] * G)


class KernelTables:
    """Bessel factors of the separated kernel for every (p_j, mode, component).

    Evaluated once per distinct value of visc |k|^2 and indexed per mode.
    """

    def __init__(self, lattice: Lattice, pp: PhysicalParams, grid: PGrid):
        d = lattice.d
        lam = pp.diffusivities()[(slice(None),) + (None,) * d] * lattice.k2
        self.shape = lam.shape
        uniq, inv = np.unique(lam.ravel(), return_inverse=True)
        self.inv = inv
        self.zero_mode = (lam == 0)
        p = grid.p
        z = 2.0 * np.sqrt(np.outer(p, uniq))
        self.zJ = z * bk.bessel_j1(z.ravel()).reshape(z.shape)
        self.zY = bk.z_y1(z.ravel()).reshape(z.shape)
        self.ratio = bk.j1_ratio(z.ravel()).reshape(z.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            zz = np.where(z > 0, z, 1.0)
            self.Yoz = np.where(z > 0, np.pi * self.zY / zz**2, 0.0)
            self.Joz = np.where(z > 0, np.pi * self.zJ / zz**2, 0.0)

    def at(self, name: str, j) -> np.ndarray:
        """Table ``name`` at grid index (or slice) j, mapped to (…, d+1, *shape)."""
        tab = getattr(self, name)[j]
        return tab[..., self.inv].reshape(tab.shape[:-1] + self.shape)


def _trapezoid_weights(dp: float, n: int) -> np.ndarray:
    w = np.full(n + 1, dp)
    w[0] = 0.5 * dp
    return w


class _Sources:
    """Evaluates R at grid points from physical-space samples of X.

    The Laplace products sum_{s+t=j} h_t x_s are accumulated online: a
    divide-and-conquer pass adds the contribution of every finished block
    to later targets with one FFT convolution, so marching n steps costs
    O(n log^2 n) instead of O(n^2).  Pairs with s = 0 or t = 0 (the
    trapezoid end points) are added directly when index j is finalized.
    """

    LEAF = 32

    def __init__(self, initial: SpectralState, pp: PhysicalParams, grid: PGrid, real: bool):
        self.lattice = initial.lattice
        self.pp = pp
        self.grid = grid
        self.pg = ProductGrid(self.lattice, real=real)
        self.x0 = self.pg.to_physical(initial.pair)
        d = self.lattice.d
        dtype = float if real else complex
        self.phys = np.zeros((grid.n + 1, d + 1, self.pg.npoints), dtype=dtype)
        # interior pairs (s, t >= 1) of the Laplace sum, without the dp factor
        self.inner = np.zeros((grid.n + 1, d, d + 1, self.pg.npoints), dtype=dtype)

    def store(self, j: int, pair: np.ndarray):
        self.phys[j] = self.pg.to_physical(pair)

    def _pairs(self, hs, xs):
        return np.einsum("sax,sbx->abx", hs[:, : self.lattice.d], xs)

    def leaf_terms(self, l: int, j: int):
        """Interior pairs for target j that the block structure leaves to the leaf [l, j)."""
        ph = self.phys
        if j < 2:
            return
        if l == 0:
            self.inner[j] += self._pairs(ph[j - 1:0:-1], ph[1:j])
        elif j > l:
            s = np.arange(l, j)
            self.inner[j] += self._pairs(ph[s], ph[j - s]) + self._pairs(ph[j - s], ph[s])

    def block_terms(self, l: int, m: int, r: int):
        """Add pairs with one index in [l, m) to targets in [m, r)."""
        n1 = self.grid.n + 1
        if m >= n1:
            return
        r = min(r, n1)
        ph = self.phys
        if l == 0:
            conv = self._fft(ph[1:m], ph[1:m])  # entry i lands on target i + 2
            shift = 2
        else:
            w = r - l
            conv = self._fft(ph[l:m], ph[1:w]) + self._fft(ph[1:w], ph[l:m])  # target l + 1 + i
            shift = l + 1
        hi = min(r, shift + conv.shape[0])
        if hi > m:
            self.inner[m:hi] += conv[m - shift: hi - shift]

    def _fft(self, hs, xs):
        d = self.lattice.d
        out = scipy.signal.fftconvolve(hs[:, :d, None, :], xs[:, None, :, :], axes=0)
        return out.real if self.phys.dtype == float else out

    def laplace_products(self, j: int) -> np.ndarray:
        """Trapezoid sum of h_a(p_j - s) x_c(s) over s, shape (d, d+1, npoints)."""
        d = self.lattice.d
        if j == 0:
            return np.zeros((d, d + 1, self.pg.npoints), dtype=self.phys.dtype)
        ph = self.phys
        ends = self._pairs(ph[j:j + 1], ph[0:1]) + self._pairs(ph[0:1], ph[j:j + 1])
        return self.grid.dp * (self.inner[j] + 0.5 * ends)

    def source(self, j: int, pair_j: np.ndarray) -> np.ndarray:
        d = self.lattice.d
        xj = self.phys[j]
        flux = self.pg.products(self.x0[:d], xj) + self.pg.products(xj[:d], self.x0)
        flux += self.laplace_products(j)
        out = flux_divergence(self.pg.to_spectral(flux), self.lattice)
        out[:d] += buoyancy(pair_j[d], self.lattice, self.pp.a)
        return out

    def run(self, finalize):
        """Visit j = 0..n in order, calling ``finalize(j)`` once inner[j] is complete."""
        n1 = self.grid.n + 1
        size = 1
        while size < n1:
            size *= 2

        def solve(l, r):
            if l >= n1:
                return
            if r - l <= self.LEAF:
                for j in range(l, min(r, n1)):
                    self.leaf_terms(l, j)
                    finalize(j)
                return
            m = (l + r) // 2
            solve(l, m)
            self.block_terms(l, m, r)
            solve(m, r)

        solve(0, size)


def _real_path(initial: SpectralState, f_hat) -> bool:
    return initial.is_conjugate_symmetric() and _is_sym(np.asarray(f_hat), initial.lattice.d)


def rhs_sources(solution: BorelSolution, j: int) -> SpectralState:
    """Source R at p_j built from the stored states with indices <= j.

    The Laplace-convolution term reads states[j] only through its
    end-point products, which enter the march with zero kernel weight.
    """
    if not 0 <= j <= solution.grid.n:
        raise IndexError(f"index {j} outside 0..{solution.grid.n}")
    src = _Sources(solution.initial, solution.params, solution.grid,
                   _real_path(solution.initial, solution.forcing))
    out = {}

    def finalize(i):
        if i <= j:
            src.store(i, solution.data[i])
        if i == j:
            out["R"] = src.source(j, solution.data[j])

    src.run(finalize)
    return SpectralState.from_pair(solution.lattice, out["R"])


def march(
    initial: SpectralState,
    f_hat,
    pp: PhysicalParams,
    grid: PGrid,
    seed: PTaylor | None = None,
    seed_steps: int = 5,
    series_order: int = 30,
) -> BorelSolution:
    """Solve the integral equation on ``grid`` by explicit trapezoid marching.

    Entries 1..seed_steps come from the p-series ``seed`` (computed here on
    the same lattice when not supplied); the rest are marched.
    """
    f_hat = _prepare(initial, f_hat, pp)
    lat = initial.lattice
    d = lat.d
    n = grid.n
    if seed_steps < 0 or seed_steps >= n:
        raise ValueError(f"seed_steps must lie in [0, n), got {seed_steps}")
    x1 = u1_theta1(initial, f_hat, pp).pair
    data = np.zeros((n + 1, d + 1) + lat.shape, dtype=complex)
    data[0] = x1
    meta = {"seed_steps": int(seed_steps), "sign_convention": SIGN_CONVENTION}

    if seed_steps > 0:
        if seed is None:
            seed = p_series(initial, f_hat, pp, series_order)
        if seed.lattice != lat:
            raise LatticeMismatchError(f"seed lattice {seed.lattice} vs data lattice {lat}")
        try:
            r = radius_estimate(seed)
        except ValueError:
            r = np.inf  # too few nonzero terms: the series is a polynomial
        if not seed_steps * grid.dp < r / 2:
            raise SeedRadiusError(
                f"seed interval {seed_steps * grid.dp:g} must lie inside half the series radius {r:g}"
            )
        for j in range(1, seed_steps + 1):
            data[j] = eval_ptaylor(seed, j * grid.dp).state.pair
        meta.update(series_order=int(seed.L_max), series_radius=float(r))

    tabs = KernelTables(lat, pp, grid)
    src = _Sources(initial, pp, grid, _real_path(initial, f_hat))
    w = _trapezoid_weights(grid.dp, n)
    A = np.zeros((d + 1,) + lat.shape, dtype=complex)
    B = np.zeros_like(A)

    def finalize(j):
        if j > seed_steps:
            xj = tabs.at("Yoz", j) * A - tabs.at("Joz", j) * B + x1 * tabs.at("ratio", j)
            xj[tabs.zero_mode] = 0.0
            if not np.all(np.isfinite(xj)):
                raise MarchBlowupError(j, j - 1)
            data[j] = xj
        if j == n:
            return
        src.store(j, data[j])
        R = src.source(j, data[j])
        A[...] += w[j] * tabs.at("zJ", j) * R
        B[...] += w[j] * tabs.at("zY", j) * R

    src.run(finalize)
    return BorelSolution(grid, data, pp, initial, f_hat, meta)


def _laplace_products_full(phys: np.ndarray, d: int, dp: float, chunk: int = 64) -> np.ndarray:
    """Trapezoid Laplace products at every grid point via FFT along p."""
    n1 = phys.shape[0]
    out = np.zeros((n1, d, d + 1, phys.shape[-1]), dtype=phys.dtype)
    for lo in range(0, phys.shape[-1], chunk):
        sl = slice(lo, lo + chunk)
        h = phys[:, :d, None, sl]
        x = phys[:, None, :, sl]
        full = scipy.signal.fftconvolve(h, x, axes=0)[:n1]
        end = h * x[0:1] + h[0:1] * x
        block = dp * full - 0.5 * dp * end
        block[0] = 0.0
        out[..., sl] = block
    return out


def apply_N(solution: BorelSolution) -> np.ndarray:
    """One application of the discrete integral operator over the whole grid."""
    lat, pp, grid = solution.lattice, solution.params, solution.grid
    d = lat.d
    real = _real_path(solution.initial, solution.forcing)
    pg = ProductGrid(lat, real=real)
    phys = pg.to_physical(solution.data)
    x0 = pg.to_physical(solution.initial.pair)
    flux = _laplace_products_full(phys, d, grid.dp)
    flux += x0[None, :d, None, :] * phys[:, None, :, :]
    flux += phys[:, :d, None, :] * x0[None, None, :, :]
    R = flux_divergence(pg.to_spectral(flux), lat)
    R[:, :d] += buoyancy(solution.data[:, d], lat, pp.a)

    tabs = KernelTables(lat, pp, grid)
    w = _trapezoid_weights(grid.dp, grid.n)[(slice(None),) + (None,) * (d + 1)]
    everything = slice(None)
    cA = np.cumsum(w * tabs.at("zJ", everything) * R, axis=0)
    cB = np.cumsum(w * tabs.at("zY", everything) * R, axis=0)
    A = np.zeros_like(cA)
    B = np.zeros_like(cB)
    A[1:], B[1:] = cA[:-1], cB[:-1]
    x1 = u1_theta1(solution.initial, solution.forcing, pp).pair
    out = tabs.at("Yoz", everything) * A - tabs.at("Joz", everything) * B
    out += x1[None] * tabs.at("ratio", everything)
    out[:, tabs.zero_mode] = 0.0
    return out


def residual_norm(solution: BorelSolution, norm_params: NormParams = NormParams()) -> float:
    """sup over the grid of ||X - N[X]||."""
    diff = solution.data - apply_N(solution)
    return float(np.max(pair_norm(diff, solution.lattice, norm_params)))


@dataclass
class PicardReport:
    changes: list
    factors: list
    converged: bool
    omega: float


def _weighted_change(diff, solution, omega, norm_params):
    norms = np.asarray(pair_norm(diff, solution.lattice, norm_params))
    return float(np.sum(np.exp(-omega * solution.grid.p) * norms) * solution.grid.dp)


def picard_refine(
    solution: BorelSolution,
    max_iter: int = 20,
    tol: float = 1e-12,
    omega: float | None = None,
    norm_params: NormParams = NormParams(),
) -> BorelSolution:
    """Iterate X <- N[X] until sum_j e^{-omega p_j} ||dX_j|| dp < tol.

    ``omega`` defaults to the basic contraction rate of the data.  The
    report (changes and successive ratios) is stored in ``meta["picard"]``.
    """
    if omega is None:
        from .certificates import basic_omega

        omega = basic_omega(solution.initial, solution.forcing, solution.params, norm_params)
    cur = solution
    changes, factors = [], []
    grows = 0
    converged = False
    for _ in range(max_iter):
        new = apply_N(cur)
        ch = _weighted_change(new - cur.data, cur, omega, norm_params)
        if changes:
            factors.append(ch / changes[-1] if changes[-1] > 0 else 0.0)
            grows = grows + 1 if ch > changes[-1] else 0
        changes.append(ch)
        cur = BorelSolution(cur.grid, new, cur.params, cur.initial, cur.forcing, dict(cur.meta))
        if grows >= 3:
            raise PicardDivergenceError(f"Picard change grew three sweeps in a row: {changes[-4:]}")
        if ch < tol:
            converged = True
            break
    cur.meta["picard"] = {
        "changes": changes, "factors": factors, "converged": converged, "omega": float(omega),
    }
    return cur


# ---- binary I/O ----


def write_solution(path, solution: BorelSolution, config_hash: str = "") -> None:
    """Write the documented binary layout (see README, "Solution file format")."""
    lat, pp = solution.lattice, solution.params
    d = lat.d
    header = {
        "format": "borelbouss-solution",
        "version": FORMAT_VERSION,
        "d": d,
        "K": lat.K,
        "nu": pp.nu,
        "mu": pp.mu,
        "a": pp.a,
        "dp": solution.grid.dp,
        "n": solution.grid.n,
        "sign_convention": SIGN_CONVENTION,
        "config_hash": config_hash,
        "meta": _jsonable(solution.meta),
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    N = lat.size
    states = np.moveaxis(solution.data.reshape(solution.grid.n + 1, d + 1, N), 1, 2)
    init = solution.initial.pair.reshape(d + 1, N).T
    forc = np.asarray(solution.forcing).reshape(d, N).T
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(hbytes)))
    buf.write(hbytes)
    for block in (states, init, forc):
        buf.write(np.ascontiguousarray(block, dtype="<c16").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_solution(path) -> tuple[BorelSolution, dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a solution file")
    off = len(MAGIC)
    (hlen,) = struct.unpack("<I", raw[off: off + 4])
    off += 4
    header = json.loads(raw[off: off + hlen])
    off += hlen
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {header.get('version')}")
    d, K, n = header["d"], header["K"], header["n"]
    lat = Lattice(d, K)
    N = lat.size
    body = np.frombuffer(raw[off:], dtype="<c16")
    expected = (n + 1) * N * (d + 1) + N * (d + 1) + N * d
    if body.size != expected:
        raise ValueError(f"{path}: payload has {body.size} values, expected {expected}")
    s1 = (n + 1) * N * (d + 1)
    states = body[:s1].reshape(n + 1, N, d + 1)
    data = np.moveaxis(states, 2, 1).reshape((n + 1, d + 1) + lat.shape).astype(complex)
    init = body[s1: s1 + N * (d + 1)].reshape(N, d + 1).T.reshape((d + 1,) + lat.shape)
    forc = body[s1 + N * (d + 1):].reshape(N, d).T.reshape((d,) + lat.shape)
    pp = PhysicalParams(header["nu"], header["mu"], header["a"], d)
    sol = BorelSolution(
        PGrid(header["dp"], n), data, pp, SpectralState.from_pair(lat, init.astype(complex)),
        forc.astype(complex), dict(header.get("meta", {})),
    )
    return sol, header


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
