# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: dead-time thinning of arrival streams (optionally
drawn straight from a numpy bit generator) and the overlapping Allan
variance sum.  ``_kernels_py`` holds the numpy fallback
with the same signatures."""
import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_exponential


def register_mask(const double[::1] times, double dead_time, bint paralyzable,
                  double blocked_until=-1e300):
    """Flag arrivals registered by a dead-time counter.

    Returns ``(mask, blocked_until)``; pass ``blocked_until`` back in to
    continue a stream across chunks.
    """
    cdef Py_ssize_t i, n = times.shape[0]
    cdef double t
    out = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] o = out
    for i in range(n):
        t = times[i]
        if t >= blocked_until:
            o[i] = 1
            blocked_until = t + dead_time
        else:
            o[i] = 0
            if paralyzable:
                blocked_until = t + dead_time
    return out, blocked_until


def count_registered(const double[::1] times, double dead_time, bint paralyzable,
                     double blocked_until=-1e300):
    cdef Py_ssize_t i, n = times.shape[0]
    cdef long long count = 0
    cdef double t
    for i in range(n):
        t = times[i]
        if t >= blocked_until:
            count += 1
            blocked_until = t + dead_time
        elif paralyzable:
            blocked_until = t + dead_time
    return count, blocked_until


def oavar_sum(const double[::1] phase, Py_ssize_t m):
    """Sum of squared second differences ``x[i+2m] - 2 x[i+m] + x[i]``."""
    cdef Py_ssize_t i, n = phase.shape[0] - 2 * m
    cdef double d0, d1, d2, d3
    cdef double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0
    if n <= 0:
        return 0.0, 0
    with nogil:
        # four independent partial sums keep the pipeline full and halve the
        # rounding error growth of a single running sum
        i = 0
        while i + 4 <= n:
            d0 = phase[i + 2 * m] - 2.0 * phase[i + m] + phase[i]
            d1 = phase[i + 1 + 2 * m] - 2.0 * phase[i + 1 + m] + phase[i + 1]
            d2 = phase[i + 2 + 2 * m] - 2.0 * phase[i + 2 + m] + phase[i + 2]
            d3 = phase[i + 3 + 2 * m] - 2.0 * phase[i + 3 + m] + phase[i + 3]
            a0 += d0 * d0
            a1 += d1 * d1
            a2 += d2 * d2
            a3 += d3 * d3
            i += 4
        while i < n:
            d0 = phase[i + 2 * m] - 2.0 * phase[i + m] + phase[i]
            a0 += d0 * d0
            i += 1
    return (a0 + a1) + (a2 + a3), n


def gate_counts(const double[::1] gaps, double scale, double gate_s, Py_ssize_t n_gates,
                double dead_time, bint paralyzable, double t, double blocked_until,
                long long[::1] counts):
    """Accumulate registered arrivals into consecutive gates.

    Arrival times are ``t + cumsum(gaps * scale)``.  Registered arrivals
    before ``n_gates * gate_s`` are added to ``counts`` in place.  Returns
    ``(t, blocked_until, done)`` where ``done`` is true once an arrival past
    the last gate was reached; otherwise call again with fresh gaps.
    """
    cdef Py_ssize_t i, idx, n = gaps.shape[0]
    cdef double end = n_gates * gate_s
    for i in range(n):
        t = t + gaps[i] * scale
        if t >= end:
            return t, blocked_until, True
        if t >= blocked_until:
            idx = <Py_ssize_t>(t / gate_s)
            if idx >= n_gates:
                idx = n_gates - 1
            counts[idx] += 1
            blocked_until = t + dead_time
        elif paralyzable:
            blocked_until = t + dead_time
    return t, blocked_until, False


def stream_gate_counts(bit_generator, double rate, double gate_s, Py_ssize_t n_gates,
                       double dead_time, bint paralyzable):
    """Registered counts per gate for a Poisson stream drawn on the fly.

    Gaps are standard exponentials from ``bit_generator`` (the same sequence
    ``Generator.standard_exponential`` yields), scaled by ``1 / rate``.
    Exactly as many gaps are consumed as reach the first arrival past the
    last gate, so the generator state afterwards is backend independent.
    """
    counts = np.zeros(n_gates, dtype=np.int64)
    if rate <= 0 or n_gates <= 0:
        return counts
    cdef long long[::1] c = counts
    cdef const char *name = "BitGenerator"
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, name):
        raise ValueError("not a numpy BitGenerator")
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(capsule, name)
    cdef double scale = 1.0 / rate, end = n_gates * gate_s
    cdef double t = 0.0, blocked = -1e300
    cdef Py_ssize_t idx
    with bit_generator.lock, nogil:
        while True:
            t = t + random_standard_exponential(rng) * scale
            if t >= end:
                break
            if t >= blocked:
                idx = <Py_ssize_t>(t / gate_s)
                if idx >= n_gates:
                    idx = n_gates - 1
                c[idx] += 1
                blocked = t + dead_time
            elif paralyzable:
                blocked = t + dead_time
    return counts
