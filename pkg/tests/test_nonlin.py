import math
import warnings

import numpy as np
import pytest

from sde_metrology import nonlin
from sde_metrology.errors import DataError, InsufficientDataError, MissingOverlapError
from sde_metrology.nonlin import NonlinModel, NonlinRecord
from sde_metrology.sim import SimScenario, run_nonlin_acquisition
from sde_metrology.sim.acquisition import new_bench
from sde_metrology.sim.scenario import random_nonlin_scenario


TRUE_ORDERS = {-10: 1, -20: 1, -30: 2, -40: 1, -50: 1, -60: 1}


def records(bundle):
    return [NonlinRecord(r[2], r[3], r[1], r[6], r[0], r[7]) for r in bundle.tables["nonlin"].rows]


def sim_records(**meter):
    sc = SimScenario(seed=meter.pop("seed", 0))
    for k, v in meter.items():
        setattr(sc.mpm, k, v)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return sc, records(run_nonlin_acquisition(sc))


# schedule ------------------------------------------------------------------


@pytest.mark.parametrize("x, expected", [(10.0, 3.0), (20.0, 0.0), (15.0, 1.0), (1.0, 13.0)])
def test_base_attenuation_examples(x, expected):
    i = int(np.flatnonzero(nonlin.sweep_levels() == x)[0])
    assert nonlin.base_attenuations()[i] == expected


def test_schedule_top_range_matches_direct_arithmetic():
    xs = [20, 15] + [10 - 0.5 * i for i in range(19)] + [0.95]
    raw = [round(10 - 10 * math.log10(x)) for x in xs]
    want = [b - min(raw) - 3 for b in raw]
    with pytest.warns(UserWarning, match="clamped"):
        steps = nonlin.plan_nonlin_sweep([-10])
    requested = [s.requested_att1_db for s in steps if s.att2_db == 0.0]
    assert len(requested) == 22
    assert requested == want
    assert min(requested) == -3 and max(requested) == 10
    assert all(s.att1_db == max(s.requested_att1_db, 0.0) for s in steps)


def test_schedule_covers_six_ranges_and_both_att2_states():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        steps = nonlin.plan_nonlin_sweep()
    assert {s.range_dbm for s in steps} == {-10, -20, -30, -40, -50, -60}
    assert {s.att2_db for s in steps} == {0.0, 3.0}
    assert len(steps) == 6 * 22 * 2


def test_schedule_shifts_by_range():
    steps = nonlin.plan_nonlin_sweep([-40], clamp=False)
    assert min(s.att1_db for s in steps) == 27.0


@pytest.mark.parametrize("bad", [-15, 0, -70, -30.5])
def test_bad_range_rejected(bad):
    with pytest.raises(DataError):
        nonlin.plan_nonlin_sweep([bad])


# fit -----------------------------------------------------------------------


def test_linear_meter_gives_vanishing_coefficients():
    _, recs = sim_records(coeffs={}, steps={}, read_noise_rel=1e-9, read_noise_abs_fs=0.0)
    m = nonlin.calibrate_nonlinearity(recs)
    assert m.tau == pytest.approx(0.5, abs=max(3 * m.tau_sigma, 1e-8))
    for r in m.ranges:
        lo, hi = m.span[r]
        for k, b in m.coeffs(r).items():
            assert abs(b) * hi ** (k - 1) < 1e-6
        assert m.correction(r, hi).value == pytest.approx(1.0, abs=1e-6)


def test_b2_recovery_rate():
    """Injected b_2 = 0.02 / full scale at -30 dBm, 0.05% read noise."""
    good = 0
    for seed in range(100):
        _, recs = sim_records(seed=seed, read_noise_rel=5e-4)
        m = nonlin.fit_nonlinearity(recs, orders=TRUE_ORDERS)
        b2 = m.coeffs(-30)[2]
        truth = 0.02 / nonlin.full_scale_w(-30)
        good += abs(b2 - truth) <= 3 * m.coeff_sigmas(-30)[2] and abs(m.tau / 0.5 - 1) <= 1e-3
    assert good >= 95


def test_scale_identifiability():
    _, recs = sim_records(seed=3)
    orders = TRUE_ORDERS
    c = 1.37
    scaled = [NonlinRecord(r.att1_db, r.att2_db, r.range_dbm,
                           r.reading_w * (c if r.range_dbm == -30 else 1.0), r.wavelength_nm,
                           r.zero_w * (c if r.range_dbm == -30 else 1.0)) for r in recs]
    a = nonlin.fit_nonlinearity(recs, orders=orders)
    b = nonlin.fit_nonlinearity(scaled, orders=orders)
    assert b.coeffs(-30)[2] == pytest.approx(a.coeffs(-30)[2] * c ** -1, rel=1e-6)
    assert b.tau == pytest.approx(a.tau, rel=1e-9)
    lo, hi = a.span[-30]
    ra = a.poly(-30, hi, uncertain=False) / a.poly(-30, lo, uncertain=False)
    rb = b.poly(-30, c * hi, uncertain=False) / b.poly(-30, c * lo, uncertain=False)
    assert rb == pytest.approx(ra, rel=1e-9)


@pytest.mark.parametrize("omit", [-10, -30, -60])
def test_tau_is_range_independent(omit):
    _, recs = sim_records(seed=11)
    full = nonlin.fit_nonlinearity(recs)
    part = nonlin.fit_nonlinearity([r for r in recs if r.range_dbm != omit])
    assert abs(part.tau - full.tau) < 3 * math.hypot(part.tau_sigma, full.tau_sigma)


def test_order_selection_ftest_finds_true_order():
    hits = total = 0
    for seed in range(100):
        sc, recs = sim_records(seed=seed)
        m = nonlin.fit_nonlinearity(recs, selection="ftest")
        for r in m.ranges:
            hits += m.orders[r] == max([1] + list(sc.mpm.coeff(r)))
            total += 1
    assert hits / total >= 0.95


@pytest.mark.xfail(strict=True, reason="minimum reduced chi-square over-fits at this noise level; "
                                       "it picks the injected order in about a third of the ranges")
def test_order_selection_redchi_finds_true_order():
    hits = total = 0
    for seed in range(30):
        sc, recs = sim_records(seed=seed)
        m = nonlin.fit_nonlinearity(recs, selection="redchi")
        for r in m.ranges:
            hits += m.orders[r] == max([1] + list(sc.mpm.coeff(r)))
            total += 1
    assert hits / total >= 0.95


def test_unknown_selection_rule():
    with pytest.raises(ValueError):
        nonlin.pick_order({1: 1.0}, 10, rule="aic")


@pytest.mark.parametrize("table, expected", [
    ({1: 5.0, 2: 1.0, 3: 0.99}, 2),     # order 3 gains nothing
    ({1: 1.0, 2: 0.98, 3: 0.97}, 1),
    ({1: 50.0, 2: 9.0, 3: 1.0}, 3),
])
def test_ftest_table_examples(table, expected):
    assert nonlin.pick_order(table, 40, rule="ftest") == expected


def test_too_few_settings():
    _, recs = sim_records()
    few = [r for r in recs if r.range_dbm == -30 and r.att1_db in (20.0, 21.0)]
    with pytest.raises(InsufficientDataError):
        nonlin.fit_nonlinearity(few, orders={-30: 3})


def test_non_positive_reading_rejected():
    with pytest.raises(DataError):
        NonlinRecord(0.0, 0.0, -30, 1e-9, 1550.0, zero_w=2e-9)


# range discontinuities -----------------------------------------------------


def test_range_factor_top_is_one():
    _, recs = sim_records(seed=2)
    m = nonlin.calibrate_nonlinearity(recs)
    assert m.range_factor(-10).value == 1.0 and m.range_factor(-10).sigma == 0.0


# Orders are pinned to the injected ones so that these tests see the range
# factor estimator alone; minimum reduced chi-square tends to over-fit, which
# widens the scatter of RF beyond its propagated sigma by up to ~30%.
@pytest.mark.parametrize("seed", [5, 6, 7])
def test_continuous_meter_range_factors_are_one(seed):
    _, recs = sim_records(seed=seed, steps={})
    m = nonlin.calibrate_nonlinearity(recs, orders=TRUE_ORDERS)
    for r in (-20, -30, -40, -50, -60):
        f = m.range_factor(r)
        assert abs(f.value - 1.0) <= 3 * f.sigma


def test_injected_step_recovered():
    _, recs = sim_records(seed=6, steps={-30: 1.004})
    m = nonlin.calibrate_nonlinearity(recs, orders=TRUE_ORDERS)
    f = m.range_factor(-30)
    assert abs(f.value - 1.004) <= 2 * f.sigma


def test_missing_overlap():
    _, recs = sim_records()
    m = nonlin.fit_nonlinearity(recs)
    lower = [r for r in recs if r.range_dbm == -20]
    upper = [NonlinRecord(r.att1_db + 0.25 if r.att1_db else 0.0, r.att2_db, -10, r.reading_w,
                          r.wavelength_nm, r.zero_w) for r in recs if r.range_dbm == -10]
    with pytest.raises(MissingOverlapError):
        nonlin.range_discontinuity(m, [r for r in lower if r.att1_db > 0] + [u for u in upper if u.att1_db])


# correction ----------------------------------------------------------------


def _b2_model(b2_per_w, r=-10):
    fs = nonlin.full_scale_w(r)
    return NonlinModel(1550.0, {r: 2}, np.array([0.5, b2_per_w * fs]), np.diag([1e-8, 1e-10]),
                       {r: (1e-7, 2e-4)}, 1.0)


def test_hand_evaluated_b2_correction():
    m = _b2_model(1e4)
    assert m.correction(-10, 1e-6).value == pytest.approx(1.0 / 1.01, rel=1e-12)


def test_linear_model_correction_is_one():
    m = _b2_model(0.0)
    for v in (1e-7, 1e-5, 1.5e-4):
        assert m.correction(-10, v).value == pytest.approx(1.0, rel=1e-15)


def test_out_of_domain():
    from sde_metrology.errors import OutOfDomainError

    with pytest.raises(OutOfDomainError):
        _b2_model(1e4).correction(-10, 1e-3)


def test_model_json_round_trip():
    _, recs = sim_records(seed=4)
    m = nonlin.calibrate_nonlinearity(recs)
    back = NonlinModel.from_dict(m.to_dict())
    for r in m.ranges:
        v = m.span[r][1] * 0.7
        assert back.correction(r, v).value == m.correction(r, v).value
        assert back.correction(r, v).sigma == pytest.approx(m.correction(r, v).sigma, rel=1e-12)


def test_corrected_readings_track_truth_on_random_meter():
    sc = random_nonlin_scenario(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = nonlin.calibrate_nonlinearity(records(run_nonlin_acquisition(sc)))
    bench = new_bench(sc, "nonlin")
    for r in m.ranges:
        xs = np.geomspace(*m.span[r], 6)
        c = np.array([m.linearize(r, bench._mpm_clean(x, r), check=False).value / x for x in xs])
        # the chained corrected power agrees with truth up to the overall -10 dBm scale
        assert np.all(np.abs(c / c[-1] - 1) < 0.003)
