"""Exact finite-depth cascade sampling and the population-dynamics pool."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _pykernels, kernels, rng as rngmod
from .generator import GeneratorSpec
from .stats import ks_distance

MAX_DEPTH = 30
BURN_IN = 50


class DepthError(ValueError):
    pass


def _check_depth(depth: int, max_depth: int) -> None:
    if depth < 0:
        raise DepthError("depth must be >= 0")
    if depth > max_depth:
        raise DepthError(
            f"depth {depth} exceeds the cap {max_depth}: one replicate costs "
            f"{_pykernels.draws_per_replicate(depth):.3g} weight draws; pass max_depth to override"
        )


def sample_yn(spec: GeneratorSpec, depth: int, rng: np.random.Generator | None = None, *,
              weights=None, max_depth: int = MAX_DEPTH) -> float:
    """One draw of Y_depth by depth-first recursion.

    ``weights`` injects the 2^(depth+1) - 2 weights in stream order (at every
    node the left/right pair, then the left subtree, then the right one)
    instead of drawing them.
    """
    _check_depth(depth, max_depth)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        need = _pykernels.draws_per_replicate(depth)
        if w.size != need:
            raise ValueError(f"depth {depth} needs {need} weights, got {w.size}")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        return float(_pykernels.reduce_tree(w[None, :], depth)[0])
    if rng is None:
        raise ValueError("need an rng or injected weights")
    code, a, b, c = spec.kernel_params()
    return float(kernels.cascade_batch(rng, code, a, b, c, depth, 1)[0])


@dataclass(frozen=True)
class CascadeSampleSet:
    depth: int
    values: np.ndarray
    spec: GeneratorSpec
    master_seed: int
    chunk_size: int
    backend: str = kernels.BACKEND

    @property
    def count(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def stderr(self) -> float:
        return float(self.values.std(ddof=1) / np.sqrt(self.values.size))


def default_chunk(depth: int) -> int:
    # roughly 2^22 weight draws per chunk
    return max(1, (1 << 22) // max(1, _pykernels.draws_per_replicate(depth)))


def sample_yn_batch(spec: GeneratorSpec, depth: int, count: int, master_seed: int, *,
                    chunk_size: int | None = None, workers: int | None = None,
                    max_depth: int = MAX_DEPTH) -> CascadeSampleSet:
    """``count`` i.i.d. replicates of Y_depth, reproducible for fixed (seed, chunk size)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    _check_depth(depth, max_depth)
    chunk_size = default_chunk(depth) if chunk_size is None else int(chunk_size)
    code, a, b, c = spec.kernel_params()

    def run(index, start, stop):
        g = rngmod.stream(master_seed, rngmod.CASCADE, index)
        return kernels.cascade_batch(g, code, a, b, c, depth, stop - start)

    parts = rngmod.map_chunks(run, rngmod.chunks(count, chunk_size), workers)
    return CascadeSampleSet(depth, np.concatenate(parts), spec, int(master_seed), chunk_size)


def second_moments(spec: GeneratorSpec, depth: int) -> np.ndarray:
    """Exact E Y_k^2 for k = 0..depth.

    Conditioning on the two root weights,
    E Y_k^2 = 2 E W^2 E Y_{k-1}^2 + 2 (E W)^2 (E Y_{k-1})^2 with E Y_{k-1} = 1.
    """
    ew, ew2 = 0.5, spec.moment(2.0)
    m = np.empty(depth + 1)
    m[0] = 1.0
    for k in range(1, depth + 1):
        m[k] = 2.0 * ew2 * m[k - 1] + 2.0 * ew * ew
    return m


def variance_yn(spec: GeneratorSpec, depth: int) -> float:
    return float(second_moments(spec, depth)[-1] - 1.0)


@dataclass(frozen=True)
class CascadePool:
    values: np.ndarray
    generation: int
    spec: GeneratorSpec | None = None
    lineage: tuple = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return self.values.size


def pool_init(M: int, spec: GeneratorSpec | None = None) -> CascadePool:
    """M copies of Y_0 = 1."""
    if M < 2:
        raise ValueError("a pool needs at least two members")
    return CascadePool(np.ones(int(M)), 0, spec)


def _recombine(values, spec, master_seed, generation, chunk_size, workers):
    M = values.size
    code, a, b, c = spec.kernel_params()

    def run(index, start, stop):
        g = rngmod.stream(master_seed, rngmod.POOL, generation, index)
        n = stop - start
        if code == _pykernels.DETERMINISTIC:
            w0 = w1 = np.full(n, a)
        else:
            raw = _pykernels.draw_raw(g, code, (2, n))
            w0, w1 = _pykernels.weights_from_draws(raw, code, a, b, c)
        i = g.integers(0, M, n)
        j = g.integers(0, M, n)
        return w0 * values[i] + w1 * values[j]

    return np.concatenate(rngmod.map_chunks(run, rngmod.chunks(M, chunk_size), workers))


def pool_evolve(pool: CascadePool, generations: int, master_seed: int, *,
                spec: GeneratorSpec | None = None, chunk_size: int = rngmod.DEFAULT_CHUNK,
                workers: int | None = None, history: list | None = None,
                normalize: bool = True) -> CascadePool:
    """Apply v' = W0 v_i + W1 v_j (i, j uniform with replacement) ``generations`` times.

    Every multiple c Y of the fixed point is again a fixed point, so a finite
    pool performs a random walk in scale.  With ``normalize`` the pool is
    rescaled to mean 1 after each generation, pinning the cascade limit
    (E Y = 1).

    Generation k draws from the stream keyed by its absolute index, so evolving
    50 then 1 generations equals evolving 51 at once.  If ``history`` is a
    list, per-generation diagnostics (raw mean, KS to previous) are appended.
    """
    if generations < 1:
        raise ValueError("generations must be >= 1")
    spec = spec or pool.spec
    if spec is None:
        raise ValueError("pool has no generator spec")
    values = pool.values
    for k in range(pool.generation, pool.generation + generations):
        new = _recombine(values, spec, master_seed, k, chunk_size, workers)
        mean = float(new.mean())
        if normalize:
            new = new / mean
        if history is not None:
            history.append({"generation": k + 1, "mean": mean, "ks_prev": ks_distance(values, new)})
        values = new
    lineage = pool.lineage + ({"seed": int(master_seed), "from": pool.generation,
                               "to": pool.generation + generations, "chunk_size": chunk_size,
                               "normalize": normalize},)
    return CascadePool(values, pool.generation + generations, spec, lineage)


def pool_run(spec: GeneratorSpec, M: int, generations: int, master_seed: int, **kw) -> CascadePool:
    return pool_evolve(pool_init(M, spec), generations, master_seed, **kw)


@dataclass(frozen=True)
class NegMoment:
    q: float
    estimate: float
    stderr: float
    max_share: float


def neg_moment(pool, q: float, *, burn_in: int = BURN_IN, dominance: float = 0.1) -> NegMoment:
    """Estimate E Y^-q from a pool, with jackknife standard error.

    Warns when a single member carries more than ``dominance`` of the sum,
    the usual sign that the left tail is undersampled.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    if isinstance(pool, CascadePool):
        if pool.generation < burn_in and not np.all(pool.values == pool.values[0]):
            warnings.warn(f"pool generation {pool.generation} is below burn-in {burn_in}", stacklevel=2)
        values = pool.values
    else:
        values = np.asarray(pool, dtype=float)
    x = values ** (-q)
    n = x.size
    total = x.sum()
    est = total / n
    loo = (total - x) / (n - 1)
    se = float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    share = float(x.max() / total)
    if share > dominance:
        warnings.warn(
            f"E Y^-{q:g} estimate dominated by one pool member ({share:.1%} of the sum)", stacklevel=2
        )
    return NegMoment(float(q), float(est), se, share)
