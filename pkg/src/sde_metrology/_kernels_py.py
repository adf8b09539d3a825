"""Numpy implementations of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def register_mask(times, dead_time, paralyzable, blocked_until=-1e300):
    t = np.ascontiguousarray(times, dtype=float)
    n = t.size
    if n == 0:
        return np.zeros(0, dtype=np.uint8), blocked_until
    if paralyzable:
        prev_block = np.empty(n)
        prev_block[0] = blocked_until
        prev_block[1:] = t[:-1] + dead_time
        mask = t >= prev_block
        return mask.astype(np.uint8), float(t[-1] + dead_time)

    # Non-paralyzable: an arrival registers iff it comes at least dead_time
    # after the last *registered* one.  Start from "all registered" and
    # iterate to the fixed point; each pass fixes one more position in every
    # cluster of closely spaced arrivals, so this converges after at most
    # (longest cluster) passes.
    start = blocked_until - dead_time
    mask = np.ones(n, dtype=bool)
    for _ in range(n + 1):
        last = np.where(mask, t, -np.inf)
        last = np.maximum.accumulate(last)
        prev = np.empty(n)
        prev[0] = start
        prev[1:] = np.maximum(last[:-1], start)
        new = t >= prev + dead_time
        if np.array_equal(new, mask):
            break
        mask = new
    reg = t[mask]
    end = float(reg[-1] + dead_time) if reg.size else blocked_until
    return mask.astype(np.uint8), end


def count_registered(times, dead_time, paralyzable, blocked_until=-1e300):
    mask, blocked = register_mask(times, dead_time, paralyzable, blocked_until)
    return int(mask.sum()), blocked


def oavar_sum(phase, m):
    x = np.ascontiguousarray(phase, dtype=float)
    n = x.size - 2 * m
    if n <= 0:
        return 0.0, 0
    d = x[2 * m:] - 2.0 * x[m:m + n] + x[:n]
    return float(np.dot(d, d)), int(n)


def gate_counts(gaps, scale, gate_s, n_gates, dead_time, paralyzable, t, blocked_until, counts):
    x = np.asarray(gaps, dtype=float) * scale
    if x.size == 0:
        return t, blocked_until, False
    times = np.cumsum(np.concatenate([[t], x]))[1:]
    end = n_gates * gate_s
    stop = int(np.searchsorted(times, end, side="left"))
    done = stop < times.size
    inside = times[:stop]
    mask, blocked = register_mask(inside, dead_time, paralyzable, blocked_until)
    if inside.size == 0:
        blocked = blocked_until
    idx = np.minimum((inside[mask.view(bool)] / gate_s).astype(np.int64), n_gates - 1)
    counts += np.bincount(idx, minlength=n_gates)[:n_gates].astype(counts.dtype)
    t_out = float(times[stop]) if done else float(times[-1])
    return t_out, blocked, done


_STREAM_CHUNK = 1 << 20


def stream_gate_counts(bit_generator, rate, gate_s, n_gates, dead_time, paralyzable):
    counts = np.zeros(n_gates, dtype=np.int64)
    if rate <= 0 or n_gates <= 0:
        return counts
    gen = np.random.Generator(bit_generator)
    mean = rate * gate_s * n_gates
    chunk = int(min(mean + 6.0 * np.sqrt(mean) + 20, _STREAM_CHUNK))
    t, blocked = 0.0, -1e300
    while True:
        saved = bit_generator.state
        gaps = gen.standard_exponential(chunk)
        t0 = t
        t, blocked, done = gate_counts(gaps, 1.0 / rate, gate_s, n_gates, dead_time, paralyzable,
                                       t, blocked, counts)
        if done:
            # rewind and consume exactly the gaps up to the crossing arrival, as
            # the compiled kernel does
            used = int(np.searchsorted(np.cumsum(np.concatenate([[t0], gaps * (1.0 / rate)]))[1:],
                                       n_gates * gate_s, side="left")) + 1
            bit_generator.state = saved
            gen.standard_exponential(used)
            return counts
