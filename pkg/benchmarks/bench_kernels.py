"""Compiled kernels against the numpy fallback.

Run ``python benchmarks/bench_kernels.py``; each line gives the best of a
few repeats for both backends and the speed-up.  The outputs are checked
for equality before timing.
"""
import argparse
import timeit

import numpy as np

from sde_metrology import _kernels_py as py

try:
    from sde_metrology import _kernels as cy
except ImportError:  # pragma: no cover
    raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")


def cases(scale: float):
    rng = np.random.default_rng(0)
    n = int(1_000_000 * scale)
    times = np.cumsum(rng.exponential(1 / 2e5, n))
    phase = np.cumsum(rng.standard_normal(n))
    gaps = rng.standard_exponential(n)

    def gate(impl, par):
        counts = np.zeros(10, dtype=np.int64)
        impl.gate_counts(gaps, 1 / 2e5, n / 2e5 / 10, 10, 175e-9, par, 0.0, -1e300, counts)
        return counts

    def stream(impl, par):
        return impl.stream_gate_counts(np.random.default_rng(1).bit_generator, 2e5, 1.0, max(1, int(5 * scale)),
                                       175e-9, par)

    yield "register_mask paralyzable", lambda k: k.register_mask(times, 175e-9, True)[0]
    yield "register_mask non-paralyzable", lambda k: k.register_mask(times, 175e-9, False)[0]
    yield "gate_counts paralyzable", lambda k: gate(k, True)
    yield "gate_counts non-paralyzable", lambda k: gate(k, False)
    yield "stream_gate_counts paralyzable", lambda k: stream(k, True)
    yield "stream_gate_counts non-paralyzable", lambda k: stream(k, False)
    yield "oavar_sum, 20 values of m", lambda k: [k.oavar_sum(phase, m)[0] for m in np.unique(np.geomspace(1, n // 3, 20).astype(int))]


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="problem size multiplier")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'kernel':<36}{'numpy s':>10}{'cython s':>10}{'speed-up':>10}")
    for name, run in cases(args.scale):
        a, b = run(py), run(cy)
        a, b = np.asarray(a), np.asarray(b)
        # integer outputs must match exactly, sums only to rounding
        same = np.array_equal(a, b) if a.dtype.kind in "iub" else np.allclose(a, b, rtol=1e-12, atol=0)
        if not same:
            raise SystemExit(f"{name}: backends disagree")
        tp, tc = best(lambda: run(py), args.repeat), best(lambda: run(cy), args.repeat)
        print(f"{name:<36}{tp:>10.4f}{tc:>10.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
