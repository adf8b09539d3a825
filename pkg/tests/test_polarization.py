import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sde_metrology import polarization as pol
from sde_metrology import uncertainty as unc
from sde_metrology.errors import DataError, DegenerateGridError, IncompleteGridError
from sde_metrology.polarization import PolGridRecord
from sde_metrology.sim import GridSpec, SimScenario, run_polscan


def grid(rate_fn, n=3, trans_fn=lambda q, h: 1.0, gates=2):
    out = []
    for q in range(n):
        for h in range(n):
            c = int(rate_fn(q, h))
            out.append(PolGridRecord(float(q), float(h), (c,) * gates, trans_fn(q, h) * 1e-6, 1e-4))
    return out


def test_constant_grid_has_unit_ps():
    pts = pol.transmission_correct(grid(lambda q, h: 1000), shape=None)
    ps = pol.polarization_sensitivity(pts)
    assert ps.value == 1.0


def test_ps_on_hand_grid():
    pts = pol.transmission_correct(grid(lambda q, h: 1000 + 10 * q + h), shape=None)
    assert pol.polarization_sensitivity(pts).value == pytest.approx(1022 / 1000, rel=1e-12)


@given(st.lists(st.floats(1.0, 1e6), min_size=1, max_size=50), st.floats(1e-3, 1e3))
def test_ps_at_least_one_and_scale_invariant(vals, k):
    ps = pol.polarization_sensitivity(vals).value
    assert ps >= 1.0
    assert pol.polarization_sensitivity([k * v for v in vals]).value == pytest.approx(ps, rel=1e-12)


@settings(max_examples=25)
@given(st.floats(0.2, 5.0))
def test_correction_commutes_with_flux_scaling(k):
    base = grid(lambda q, h: 1e4, trans_fn=lambda q, h: 1 + 0.01 * q - 0.02 * h)
    scaled = [PolGridRecord(g.qwp_deg, g.hwp_deg, tuple(round(c * k) for c in g.counts), g.cpm_w * k, g.mpm_w * k)
              for g in base]
    a = [p.rate.value for p in pol.transmission_correct(base, shape=None)]
    b = [p.rate.value for p in pol.transmission_correct(scaled, shape=None)]
    # counts are rounded to integers after scaling: half a count in 1e4 k
    np.testing.assert_allclose(np.array(b) / k, a, rtol=0.5 / (1e4 * k) + 1e-12)


def test_unit_transmission_is_identity():
    g = grid(lambda q, h: 500 + 7 * q * h)
    for p in pol.transmission_correct(g, dark_rate=unc.lift(20.0, 1.0), shape=None):
        assert p.transmission == 1.0
        assert p.rate.value == p.raw_rate.value
        assert p.rate.sigma == p.raw_rate.sigma


def test_dark_subtraction():
    p = pol.transmission_correct(grid(lambda q, h: 1000, n=2), dark_rate=100.0, shape=None)[0]
    assert p.rate.value == 900.0


def test_per_point_darks_override_session_dark():
    g = grid(lambda q, h: 1000, n=2)
    g[0] = PolGridRecord(0.0, 0.0, (1000, 1000), 1e-6, 1e-4, dark_counts=(40, 60))
    pts = pol.transmission_correct(g, dark_rate=100.0, shape=None)
    assert pts[0].rate.value == 950.0
    assert [p.rate.value for p in pts[1:]] == [900.0] * 3


def test_loader_reads_dark_columns(tmp_path):
    p = tmp_path / "polscan.csv"
    p.write_text("qwp_deg,hwp_deg,counts_1,counts_2,dark_1,cpm_w,mpm_w\n0,0,10,12,3,1e-6,1e-4\n")
    (rec,) = pol.load_polscan(p)
    assert rec.counts == (10, 12) and rec.dark_counts == (3,)


def test_incomplete_grid_names_missing_points():
    g = grid(lambda q, h: 100)
    del g[4]
    with pytest.raises(IncompleteGridError, match=r"\(1, 1\)"):
        pol.transmission_correct(g, shape=None)


def test_wrong_shape():
    with pytest.raises(IncompleteGridError, match="3x3"):
        pol.transmission_correct(grid(lambda q, h: 100))


def test_duplicate_point():
    g = grid(lambda q, h: 100)
    with pytest.raises(IncompleteGridError):
        pol.check_complete(g + [g[0]], shape=None)


def test_degenerate_grid():
    with pytest.raises(DegenerateGridError):
        pol.polarization_sensitivity([])
    pts = pol.transmission_correct(grid(lambda q, h: 50 if q else 10), dark_rate=10.0, shape=None)
    with pytest.raises(DegenerateGridError):
        pol.polarization_sensitivity(pts)


def test_record_validation():
    with pytest.raises(DataError):
        PolGridRecord(0.0, 0.0, (), 1e-6, 1e-4)
    with pytest.raises(DataError):
        PolGridRecord(0.0, 0.0, (5,), 0.0, 1e-4)


def test_loader(tmp_path):
    p = tmp_path / "polscan.csv"
    p.write_text("qwp_deg,hwp_deg,counts_1,counts_2,cpm_w,mpm_w\n0,0,10,12,1e-6,1e-4\n0,45,9,x,1e-6,1e-4\n")
    with pytest.raises(DataError, match=r"\.csv:3:"):
        pol.load_polscan(p)


@pytest.fixture(scope="module")
def flat_detector_scan():
    """Polarization-independent detector behind a 2% ripple controller."""
    sc = SimScenario(seed=8)
    sc.detector.ps = 1.0
    sc.laser.power_w = 8e-5
    return run_polscan(sc, GridSpec(7, 7), gates=4)


def _records(bundle):
    return [PolGridRecord(r[0], r[1], tuple(r[2:-2]), r[-2], r[-1]) for r in bundle.tables["polscan"].rows]


def test_ripple_corrected_grid_is_flat(flat_detector_scan):
    pts = pol.transmission_correct(_records(flat_detector_scan), shape=None)
    raw = np.array([p.raw_rate.value for p in pts])
    cor = np.array([p.rate.value for p in pts])
    sig = np.median([p.rate.sigma for p in pts])
    assert np.ptp(raw) / raw.mean() > 0.02
    # counting noise plus the 3-read transmission scatter
    assert np.std(cor) < 2 * sig
    assert pol.polarization_sensitivity(pts).value < 1 + 8 * sig / cor.mean()


def test_scan_duration():
    sc = SimScenario(seed=1)
    b = run_polscan(sc, GridSpec(3, 3))
    # counting plus settling: 2 gates of 1 s and 0.7 s per point
    assert b.params["polscan"]["count_duration_s"] == pytest.approx(9 * 2.7, rel=1e-9)
