import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sde_metrology import _kernels_py as py
from sde_metrology import kernels

cy = pytest.importorskip("sde_metrology._kernels")


def loop_register(times, tau, paralyzable, blocked=-1e300):
    """Arrival-by-arrival reference for both dead-time models."""
    out = []
    for t in times:
        ok = t >= blocked
        out.append(ok)
        if ok or paralyzable:
            blocked = t + tau
    return np.array(out, dtype=np.uint8)


arrivals = st.lists(st.floats(0.0, 1e-5), min_size=0, max_size=200).map(lambda g: np.cumsum(g))


@settings(max_examples=100)
@given(arrivals, st.floats(1e-8, 2e-6), st.booleans())
def test_register_mask_backends_agree_with_loop(times, tau, par):
    times = np.ascontiguousarray(times, dtype=float)
    want = loop_register(times, tau, par)
    for impl in (py, cy):
        mask, _ = impl.register_mask(times, tau, par)
        np.testing.assert_array_equal(np.asarray(mask), want)


@pytest.mark.parametrize("par", [True, False])
def test_register_mask_carries_block_across_calls(par):
    rng = np.random.default_rng(0)
    t = np.cumsum(rng.exponential(1e-7, 5000))
    whole, _ = cy.register_mask(t, 1.5e-7, par)
    a, b = cy.register_mask(t[:2500], 1.5e-7, par)
    c, _ = cy.register_mask(t[2500:], 1.5e-7, par, b)
    np.testing.assert_array_equal(np.concatenate([a, c]), whole)


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 50))
def test_oavar_sum_backends(seed, m):
    x = np.cumsum(np.random.default_rng(seed).standard_normal(400))
    s_py, n_py = py.oavar_sum(x, m)
    s_cy, n_cy = cy.oavar_sum(x, m)
    assert n_py == n_cy
    assert s_cy == pytest.approx(s_py, rel=1e-12)


@pytest.mark.parametrize("par", [True, False])
def test_gate_counts_backends(par):
    gaps = np.random.default_rng(4).standard_exponential(30000)
    res = []
    for impl in (py, cy):
        counts = np.zeros(5, dtype=np.int64)
        out = impl.gate_counts(gaps, 1e-4, 0.5, 5, 2e-4, par, 0.0, -1e300, counts)
        res.append((out, counts))
    assert res[0][0][2] == res[1][0][2]
    assert res[0][0][0] == pytest.approx(res[1][0][0], rel=1e-12)
    np.testing.assert_array_equal(res[0][1], res[1][1])


@pytest.mark.parametrize("rate, dead, par", [(2e5, 175e-9, True), (2e5, 175e-9, False), (50.0, 0.0, True),
                                             (3e6, 1e-6, False)])
def test_stream_backends_identical_including_rng_state(rate, dead, par):
    gens = [np.random.default_rng(12) for _ in range(2)]
    a = py.stream_gate_counts(gens[0].bit_generator, rate, 0.1, 7, dead, par)
    b = cy.stream_gate_counts(gens[1].bit_generator, rate, 0.1, 7, dead, par)
    np.testing.assert_array_equal(a, b)
    assert gens[0].random() == gens[1].random()


def test_stream_is_poisson_without_dead_time():
    rng = np.random.default_rng(1)
    c = kernels.stream_gate_counts(rng.bit_generator, 1e4, 0.01, 20000, 0.0, True)
    assert c.mean() == pytest.approx(100.0, rel=0.01)
    assert c.var() == pytest.approx(100.0, rel=0.05)


def test_stream_registration_rate_matches_dead_time_models():
    rate, tau = 2e5, 1e-6
    for par, expect in [(True, rate * np.exp(-rate * tau)), (False, rate / (1 + rate * tau))]:
        c = kernels.stream_gate_counts(np.random.default_rng(2).bit_generator, rate, 1.0, 5, tau, par)
        assert c.mean() == pytest.approx(expect, rel=3e-3)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")
