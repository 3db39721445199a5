# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled depth-first sampler for the finite-depth cascade variable.

Weights are drawn straight from the numpy ``bitgen_t`` of the caller's
Generator, so a replicate consumes exactly the same stream positions as
the numpy fallback in ``_pykernels``.
"""
import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, pow
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_exponential,
    random_standard_normal,
)

# family codes, mirrored in _pykernels
cdef enum:
    DETERMINISTIC = 0
    LOGNORMAL = 1
    LOG_WEIBULL = 2

BACKEND = "cython"


cdef struct Family:
    int code
    double a
    double b
    double c


cdef inline double _draw(bitgen_t *bg, Family *f) noexcept nogil:
    # lognormal: a = mu, b = sigma; log-weibull: a = scale, b = c, c = 1/gamma
    if f.code == LOGNORMAL:
        return exp(f.a + f.b * random_standard_normal(bg))
    elif f.code == LOG_WEIBULL:
        return f.a * exp(-pow(random_standard_exponential(bg) / f.b, f.c))
    return f.a


cdef double _node(bitgen_t *bg, Family *f, int k) noexcept nogil:
    cdef double wl, wr, yl, yr
    if k == 0:
        return 1.0
    wl = _draw(bg, f)
    wr = _draw(bg, f)
    yl = _node(bg, f, k - 1)
    yr = _node(bg, f, k - 1)
    return wl * yl + wr * yr


cdef bitgen_t *_bitgen(rng) except NULL:
    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("rng does not expose a numpy BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


def cascade_batch(rng, int code, double a, double b, double c, int depth,
                  Py_ssize_t count):
    """Draw ``count`` independent replicates of Y_depth from ``rng``."""
    cdef Family fam
    cdef bitgen_t *bg = _bitgen(rng)
    cdef Py_ssize_t i
    cdef double[::1] out_v
    if depth < 0:
        raise ValueError("depth must be >= 0")
    fam.code = code
    fam.a = a
    fam.b = b
    fam.c = c
    out = np.empty(count, dtype=np.float64)
    out_v = out
    with rng.bit_generator.lock, nogil:
        for i in range(count):
            out_v[i] = _node(bg, &fam, depth)
    return out
