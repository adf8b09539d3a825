"""Session-level glue shared by the CLI and the end-to-end tests."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

from . import io as sio
from . import nonlin, polarization, sde, stability
from .instrument import CpmCalibration, load_switch_cal, switching_ratio
from .uncertainty import UncertainValue


def calibrate_session(session: sio.Session, selection: str = "redchi",
                      switch_floor: float = 0.0) -> sde.Calibration:
    """Meter model, switch ratio and CPM certificate from one session."""
    records = nonlin.load_nonlin_records(session.path("nonlin"))
    model = nonlin.calibrate_nonlinearity(records, selection=selection)
    model.source_digest = session.manifest["files"]["nonlin"]["sha256"]
    return calibration_from_model(session, model, switch_floor)


def calibration_from_model(session: sio.Session, model: nonlin.NonlinModel,
                           switch_floor: float = 0.0) -> sde.Calibration:
    rec = load_switch_cal(session.path("switch_cal"))
    r_sw = switching_ratio(rec, model, floor_rel=switch_floor)
    cpm = CpmCalibration.from_dict(sio.load_json(session.path("cpm_certificate")))
    return sde.Calibration(model, r_sw, cpm, session.wavelength_nm)


@dataclass
class PolscanResult:
    ps: UncertainValue
    points: list
    dark_rate: UncertainValue

    def to_dict(self, grid_params=None) -> dict:
        hi = max(self.points, key=lambda p: p.rate.value)
        lo = min(self.points, key=lambda p: p.rate.value)
        return {"kind": "PolarizationSensitivity", "ps": sio.uv_to_json(self.ps),
                "dark_rate": sio.uv_to_json(self.dark_rate),
                "max_point_deg": [hi.qwp_deg, hi.hwp_deg], "min_point_deg": [lo.qwp_deg, lo.hwp_deg],
                "grid": grid_params or {}, "n_points": len(self.points)}


def analyze_polscan(session: sio.Session) -> PolscanResult:
    grid = polarization.load_polscan(session.path("polscan"))
    dark = (polarization.dark_rate_from_file(session.path("polscan_dark"))
            if session.has("polscan_dark") else UncertainValue(0.0))
    shape = None
    g = session.params.get("polscan", {}).get("grid")
    if g:
        shape = (int(g["n_qwp"]), int(g["n_hwp"]))
    pts = polarization.transmission_correct(grid, dark, shape=shape or polarization.GRID_SHAPE)
    return PolscanResult(polarization.polarization_sensitivity(pts), pts, dark)


def analyze_stability(path, taus=None) -> list[tuple[float, float]]:
    series = stability.load_stability(path)
    if taus is None:
        taus = stability.default_taus(series)
    return stability.allan_deviation(series, taus)


def quiet(fn, *args, **kwargs):
    """Call ``fn`` collecting warnings instead of printing them."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = fn(*args, **kwargs)
    return out, [str(w.message) for w in caught]
