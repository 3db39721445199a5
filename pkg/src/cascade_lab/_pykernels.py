"""numpy fallback for the compiled kernels.

Draw order and arithmetic mirror ``_ckernels.pyx``: at every internal node
the (left, right) weight pair is drawn, then the left subtree, then the
right subtree.  The tree is evaluated bottom-up here, level by level,
using the same ``wl * yl + wr * yr`` combination.
"""
from functools import lru_cache

import numpy as np

DETERMINISTIC = 0
LOGNORMAL = 1
LOG_WEIBULL = 2

BACKEND = "numpy"

# replicates are processed in blocks of at most this many weight draws
_BLOCK_DRAWS = 1 << 22


def draws_per_replicate(depth: int) -> int:
    return (1 << (depth + 1)) - 2


@lru_cache(maxsize=64)
def pair_offsets(depth: int) -> tuple:
    """Stream offset of the weight pair of every internal node, per level."""
    levels = []
    offs = np.zeros(1, dtype=np.int64)
    for level in range(depth):
        levels.append(offs)
        sub = depth - level - 1  # depth of each child subtree
        children = np.empty(2 * offs.size, dtype=np.int64)
        children[0::2] = offs + 2
        children[1::2] = offs + 2 + draws_per_replicate(sub)
        offs = children
    return tuple(levels)


def weights_from_draws(raw, code, a, b, c):
    if code == LOGNORMAL:
        return np.exp(a + b * raw)
    if code == LOG_WEIBULL:
        return a * np.exp(-((raw / b) ** c))
    raise ValueError(f"family code {code} consumes no draws")


def draw_raw(rng, code, size):
    if code == LOGNORMAL:
        return rng.standard_normal(size)
    if code == LOG_WEIBULL:
        return rng.standard_exponential(size)
    raise ValueError(f"family code {code} consumes no draws")


def reduce_tree(w, depth):
    """Evaluate Y_depth from a (replicates, draws) array of weights in stream order."""
    y = np.ones((w.shape[0], 1 << depth))
    levels = pair_offsets(depth)
    for level in range(depth - 1, -1, -1):
        offs = levels[level]
        y = w[:, offs] * y[:, 0::2] + w[:, offs + 1] * y[:, 1::2]
    return y[:, 0]


def cascade_batch(rng, code, a, b, c, depth, count):
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if code == DETERMINISTIC or depth == 0:
        w = np.full((1, draws_per_replicate(depth)), a)
        value = reduce_tree(w, depth)[0] if code == DETERMINISTIC else 1.0
        return np.full(count, value)
    per = draws_per_replicate(depth)
    block = max(1, _BLOCK_DRAWS // per)
    out = np.empty(count)
    for start in range(0, count, block):
        stop = min(count, start + block)
        raw = draw_raw(rng, code, (stop - start, per))
        out[start:stop] = reduce_tree(weights_from_draws(raw, code, a, b, c), depth)
    return out
