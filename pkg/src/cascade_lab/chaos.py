"""Log-correlated Gaussian field on [0, 1] and its chaos measure.

The field X_eps has covariance

    K_eps(d) = log(1/eps) - (1/eps - 1) d    for d < eps
             = log(1/d) - 1 + d              for eps <= d <= 1
             = 0                             for d > 1

and equals the white-noise integral over the cone {max(2|x - x'|, eps) <= y <= 1}
with intensity dx dy / y^2.  It is sampled either by a Cholesky factor of the
covariance matrix or directly from that cone.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import rng as rngmod
from .stats import ks_distance

BETA_MAX = math.sqrt(2.0)
FIELD_CHUNK = 512


class FactorizationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KernelParams:
    beta: float
    eps: float

    def __post_init__(self):
        if not 0 < self.beta < BETA_MAX:
            raise ValueError(f"beta must lie in (0, sqrt 2), got {self.beta}")
        if not 0 < self.eps <= 1:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")

    @property
    def log_inv_eps(self) -> float:
        return -math.log(self.eps)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "eps": self.eps}


@dataclass(frozen=True)
class FieldGrid:
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("grid needs N >= 2")

    @property
    def points(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) / self.N

    @property
    def spacing(self) -> float:
        return 1.0 / self.N


def kernel_value(eps1, eps2, x, y):
    """Covariance of X_eps1(x) and X_eps2(y)."""
    eps1, eps2 = np.asarray(eps1, dtype=float), np.asarray(eps2, dtype=float)
    if np.any(eps1 <= 0) or np.any(eps1 > 1) or np.any(eps2 <= 0) or np.any(eps2 > 1):
        raise ValueError("eps must lie in (0, 1]")
    e = np.maximum(eps1, eps2)
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    near = np.log(1.0 / e) - (1.0 / e - 1.0) * d
    far = -np.log(np.where(d > 0, d, 1.0)) - 1.0 + d
    out = np.where(d < e, near, np.where(d <= 1.0, far, 0.0))
    return float(out) if out.ndim == 0 else out


def build_covariance(grid: FieldGrid, eps: float, eps2: float | None = None) -> np.ndarray:
    """Toeplitz matrix of kernel_value on the grid."""
    lags = np.arange(grid.N) * grid.spacing
    col = kernel_value(eps, eps if eps2 is None else eps2, 0.0, lags)
    return linalg.toeplitz(col)


def increment_covariance(grid: FieldGrid, eps_fine: float, eps_coarse: float) -> np.ndarray:
    """Covariance of X_fine - X_coarse, the part of the cone with eps_fine <= y < eps_coarse."""
    return build_covariance(grid, eps_fine) - build_covariance(grid, eps_coarse)


@dataclass(frozen=True)
class CovFactor:
    lower: np.ndarray
    jitter: float

    @property
    def N(self) -> int:
        return self.lower.shape[0]


def factorize(cov, max_jitter_rel: float = 1e-10) -> CovFactor:
    """Cholesky factor, adding diagonal jitter up to ``max_jitter_rel * C00`` if needed."""
    cov = np.asarray(cov, dtype=float)
    scale = float(np.max(np.abs(np.diag(cov)))) if cov.size else 0.0
    if scale == 0.0:
        return CovFactor(np.zeros_like(cov), 0.0)
    jitter = 0.0
    steps = [0.0] + [scale * r for r in (1e-14, 1e-13, 1e-12, 1e-11, max_jitter_rel)]
    for jitter in steps:
        try:
            L = linalg.cholesky(cov + jitter * np.eye(cov.shape[0]), lower=True)
            return CovFactor(L, jitter)
        except linalg.LinAlgError:
            continue
    raise FactorizationError(
        f"covariance not positive definite even with jitter {max_jitter_rel:g} x diagonal; "
        "check the kernel and grid"
    )


def sample_field(factor: CovFactor, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
    """Centered Gaussian vector(s) L z; shape (N,) or (count, N)."""
    n = 1 if count is None else int(count)
    z = rng.standard_normal((n, factor.N))
    x = z @ factor.lower.T
    return x[0] if count is None else x


def chaos_mass(field, params: KernelParams, grid: FieldGrid):
    """Riemann sum of exp(beta X - beta^2/2 log(1/eps)) over the grid; one value per row."""
    X = np.asarray(field, dtype=float)
    if X.shape[-1] != grid.N:
        raise ValueError(f"field length {X.shape[-1]} does not match grid N = {grid.N}")
    b = params.beta
    out = np.exp(b * X - 0.5 * b * b * params.log_inv_eps).sum(axis=-1) * grid.spacing
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ChaosSample:
    params: KernelParams
    grid: FieldGrid
    field: np.ndarray
    mass: float

    def recomputed_mass(self) -> float:
        return chaos_mass(self.field, self.params, self.grid)


@dataclass(frozen=True)
class ChaosBatch:
    params: KernelParams
    grid: FieldGrid
    masses: np.ndarray
    fields: np.ndarray | None
    master_seed: int
    chunk_size: int
    jitter: float

    @property
    def mean(self) -> float:
        return float(self.masses.mean())

    @property
    def stderr(self) -> float:
        return float(self.masses.std(ddof=1) / math.sqrt(self.masses.size))


def chaos_batch(params: KernelParams, N: int, count: int, master_seed: int, *,
                keep_fields: bool = False, chunk_size: int = FIELD_CHUNK,
                workers: int | None = None) -> ChaosBatch:
    """``count`` independent fields and their masses via the Cholesky construction."""
    grid = FieldGrid(N)
    factor = factorize(build_covariance(grid, params.eps))

    def run(index, start, stop):
        X = sample_field(factor, rngmod.stream(master_seed, rngmod.CHAOS_FIELD, index), stop - start)
        return X, chaos_mass(X, params, grid)

    parts = rngmod.map_chunks(run, rngmod.chunks(count, chunk_size), workers)
    fields = np.concatenate([p[0] for p in parts]) if keep_fields else None
    masses = np.concatenate([np.atleast_1d(p[1]) for p in parts])
    return ChaosBatch(params, grid, masses, fields, int(master_seed), chunk_size, factor.jitter)


# -- white-noise cone construction -------------------------------------------

@dataclass(frozen=True)
class ConeLattice:
    """Cells of the cone region in coordinates (x', s = 1/y').

    With s = 1/y' the intensity dx' dy'/y'^2 becomes ds dx', so cells are
    ordinary rectangles of area dx * ds.  Rows are geometric in s; a row
    is represented by its log-mean s_c = (s_b - s_a)/log(s_b/s_a), at which
    the half-width 1/(2 s_c) times the row height equals the exact row area.
    """

    eps: float
    dx: float
    row_edges: np.ndarray
    row_centers: np.ndarray
    m_lo: int
    m_hi: int

    @property
    def row_heights(self) -> np.ndarray:
        return np.diff(self.row_edges)

    @property
    def cell_x(self) -> np.ndarray:
        return (np.arange(self.m_lo, self.m_hi) + 0.5) * self.dx

    def members(self, x: float) -> list[tuple[int, int]]:
        """Per row, the half-open index range of cells whose centers lie in the cone over x."""
        half = 0.5 / self.row_centers
        lo = np.ceil((x - half) / self.dx - 0.5).astype(int)
        hi = np.floor((x + half) / self.dx - 0.5).astype(int) + 1
        return [(int(a) - self.m_lo, int(b) - self.m_lo) for a, b in zip(lo, hi)]

    def cell_count(self, x: float) -> int:
        return int(sum(b - a for a, b in self.members(x)))


def cone_lattice(eps: float, points, cell_resolution: int = 512, rows: int | None = None) -> ConeLattice:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    dx = 1.0 / cell_resolution
    s_max = 1.0 / eps
    if rows is None:
        rows = max(16, int(math.ceil(8 * math.log(s_max) / math.log(2.0))))
    edges = np.geomspace(1.0, s_max, rows + 1)
    centers = np.diff(edges) / np.log(edges[1:] / edges[:-1])
    m_lo = int(math.floor((pts.min() - 0.5) / dx)) - 1
    m_hi = int(math.ceil((pts.max() + 0.5) / dx)) + 1
    return ConeLattice(float(eps), dx, edges, centers, m_lo, m_hi)


def whitenoise_field(eps: float, points, cell_resolution: int, rng: np.random.Generator,
                     count: int = 1, *, rows: int | None = None, min_cells: int = 100) -> np.ndarray:
    """X_eps at ``points`` as sums of independent cell Gaussians over each cone; shape (count, len(points))."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    lat = cone_lattice(eps, pts, cell_resolution, rows)
    mem = [lat.members(x) for x in pts]
    fewest = min(sum(b - a for a, b in m) for m in mem)
    if fewest < min_cells:
        raise ValueError(f"cone covers only {fewest} cells; raise cell_resolution")
    M = lat.m_hi - lat.m_lo
    sd = np.sqrt(lat.row_heights * lat.dx)
    out = np.empty((count, pts.size))
    G = rng.standard_normal((count, lat.row_centers.size, M)) * sd[None, :, None]
    C = np.concatenate([np.zeros((count, G.shape[1], 1)), np.cumsum(G, axis=2)], axis=2)
    rows_idx = np.arange(G.shape[1])
    for i, m in enumerate(mem):
        a = np.array([p[0] for p in m])
        b = np.array([p[1] for p in m])
        out[:, i] = (C[:, rows_idx, b] - C[:, rows_idx, a]).sum(axis=1)
    return out


def whitenoise_batch(eps: float, points, count: int, master_seed: int, *, cell_resolution: int = 512,
                     chunk_size: int = FIELD_CHUNK, workers: int | None = None) -> np.ndarray:
    def run(index, start, stop):
        g = rngmod.stream(master_seed, rngmod.WHITENOISE, index)
        return whitenoise_field(eps, points, cell_resolution, g, stop - start)

    return np.concatenate(rngmod.map_chunks(run, rngmod.chunks(count, chunk_size), workers))


# -- scale decomposition -------------------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    W0: np.ndarray
    W1: np.ndarray
    mass: np.ndarray
    recombined: np.ndarray          # W0 Y0 + W1 Y1 with Y0, Y1 independent of everything else
    recombined_coupled: np.ndarray  # same with Y0, Y1 from the path itself
    params: KernelParams
    N: int

    @property
    def ks_w(self) -> float:
        return ks_distance(self.W0, self.W1)


def decompose_scale(params: KernelParams, N: int, count: int, master_seed: int, *,
                    chunk_size: int = FIELD_CHUNK, workers: int | None = None) -> Decomposition:
    """Split X_eps = X_{1/3} + Z into the coarse field and the independent fine increment.

    On the first third the mass factorises as the coarse weight times a
    rescaled copy of the whole measure; bounding the coarse factor by its
    grid minimum gives W0 Y0 <= M([0, 1/3]), and likewise on the last third.
    """
    if N % 3:
        raise ValueError("N must be divisible by 3")
    if not params.eps < 1.0 / 3.0:
        raise ValueError("eps must be below 1/3")
    grid = FieldGrid(N)
    third = N // 3
    b = params.beta
    coarse = factorize(build_covariance(grid, 1.0 / 3.0))
    inc = factorize(increment_covariance(grid, params.eps, 1.0 / 3.0))
    log3 = math.log(3.0)
    fine_var = params.log_inv_eps - log3

    def run(index, start, stop):
        g = rngmod.stream(master_seed, rngmod.DECOMPOSE, index)
        n = stop - start
        X13 = sample_field(coarse, g, n)
        Z = sample_field(inc, g, n)
        Zf = sample_field(inc, g, n)  # fresh increments for the independent Y's
        mass = chaos_mass(X13 + Z, params, grid)
        w = np.exp(b * X13 - 0.5 * b * b * log3)
        W0 = w[:, :third].min(axis=1) / 3.0
        W1 = w[:, -third:].min(axis=1) / 3.0
        dens = lambda F: np.exp(b * F - 0.5 * b * b * fine_var) * grid.spacing * 3.0
        Y0c, Y1c = dens(Z[:, :third]).sum(axis=1), dens(Z[:, -third:]).sum(axis=1)
        # first and last thirds of one increment field are independent
        Y0f, Y1f = dens(Zf[:, :third]).sum(axis=1), dens(Zf[:, -third:]).sum(axis=1)
        return np.stack([W0, W1, mass, W0 * Y0f + W1 * Y1f, W0 * Y0c + W1 * Y1c])

    parts = np.concatenate(rngmod.map_chunks(run, rngmod.chunks(count, chunk_size), workers), axis=1)
    return Decomposition(parts[0], parts[1], parts[2], parts[3], parts[4], params, N)


# -- infimum tail probe --------------------------------------------------------

@dataclass(frozen=True)
class TailProbe:
    a: np.ndarray
    prob: np.ndarray
    exceedances: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    replicates: int


def inf_tail_probe(beta: float, eps: float = 1.0 / 3.0, a_grid=None, replicates: int = 20000,
                   master_seed: int = 0, *, N: int = 96, chunk_size: int = 4096,
                   workers: int | None = None) -> TailProbe:
    """P(inf over [0, 1/3] of X_eps <= -a) by Monte Carlo, with a fit of log P against a^2.

    ``beta`` only identifies the run (the infimum does not depend on it).
    """
    KernelParams(beta, eps)
    a = np.linspace(0.5, 2.5, 9) if a_grid is None else np.asarray(a_grid, dtype=float)
    if np.any(np.diff(a) <= 0):
        raise ValueError("a_grid must be increasing")
    x = (np.arange(N) + 0.5) / (3.0 * N)
    cov = kernel_value(eps, eps, x[:, None], x[None, :])
    factor = factorize(cov)

    def run(index, start, stop):
        X = sample_field(factor, rngmod.stream(master_seed, rngmod.INF_PROBE, index), stop - start)
        m = X.min(axis=1)
        return (m[:, None] <= -a[None, :]).sum(axis=0)

    hits = np.sum(rngmod.map_chunks(run, rngmod.chunks(replicates, chunk_size), workers), axis=0)
    p = hits / replicates
    if hits[-1] < 50:
        warnings.warn(f"only {int(hits[-1])} exceedances at a = {a[-1]:g}; tail estimate is noisy",
                      stacklevel=2)
    ok = hits > 0
    if ok.sum() < 3:
        raise ValueError("fewer than three a values with exceedances")
    u, v = a[ok] ** 2, np.log(p[ok])
    slope, intercept = np.polyfit(u, v, 1)
    resid = v - (slope * u + intercept)
    ss = np.sum((v - v.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return TailProbe(a, p, hits, float(slope), float(intercept), float(r2), int(replicates))
