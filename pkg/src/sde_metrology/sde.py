"""System detection efficiency from calibrated power and gated counts.

The photon flux at the detector is the zero-attenuation detector-port power
times the three calibrated attenuator transmissions divided by the photon
energy.  The SDE at each bias point is the dark-subtracted count rate over
that flux.  Every input is an :class:`~sde_metrology.uncertainty.UncertainValue`,
so inputs that share a base variable (the attenuator reference readings also
define the detector-port power) are correlated automatically.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import io as sio
from . import uncertainty as unc
from .constants import SERIES_RESISTOR_OHM, photon_energy_j
from .errors import AlignmentError, DataError, IncompleteSessionError
from .instrument import (
    CAL_RANGE_DBM,
    CpmCalibration,
    attenuator_result,
    check_wavelength,
    load_atten_cal,
)
from .nonlin import NonlinModel
from .uncertainty import UncertainValue

PHASES = ("dark", "maxpol", "minpol")
DEAD_TIME_MODELS = ("paralyzable", "nonparalyzable")


def pileup_max_sde(rate: float, dead_time: float, model: str = "paralyzable") -> float:
    """Registered fraction of Poisson arrivals at ``rate`` behind a dead time.

    >>> round(pileup_max_sde(2e5, 175e-9), 4)
    0.9656
    """
    if rate < 0 or dead_time < 0:
        raise ValueError("rate and dead time must be non-negative")
    x = rate * dead_time
    if model == "paralyzable":
        return math.exp(-x)
    if model == "nonparalyzable":
        return 1.0 / (1.0 + x)
    raise ValueError(f"unknown dead-time model {model!r}")


# ---------------------------------------------------------------------------
# counts


@dataclass(frozen=True)
class CountRecord:
    phase: str
    bias_v: float
    rep: int
    counts: int
    gate_s: float = 1.0

    def __post_init__(self):
        if self.phase not in PHASES:
            raise DataError(f"unknown phase {self.phase!r}")
        if self.counts < 0:
            raise DataError("counts must be non-negative")
        if not self.gate_s > 0:
            raise DataError("gate time must be positive")


def load_counts(path) -> list[CountRecord]:
    """Read a count file; a missing ``phase`` column is filled from ``#`` markers."""
    rows = sio.read_csv(path, required=("bias_v", "counts"), numeric=("bias_v", "counts", "gate_s", "rep"))
    out = []
    for i, row in enumerate(rows):
        phase = row.get("phase") or row["_marker"]
        if phase is None:
            raise DataError("row has no phase column and no preceding phase marker",
                            path=path, line=row["_line"])
        c = row["counts"]
        if c != int(c) or c < 0:
            raise DataError(f"counts must be a non-negative integer, got {c!r}", path=path, line=row["_line"])
        try:
            out.append(CountRecord(phase, row["bias_v"], int(row.get("rep", i)), int(c),
                                   row.get("gate_s", 1.0)))
        except DataError as exc:
            raise DataError(str(exc), path=path, line=row["_line"]) from None
    return out


def _by_bias(records: Sequence[CountRecord]) -> dict:
    out = defaultdict(list)
    for r in records:
        out[r.bias_v].append(r)
    return out


def count_rate(records: Sequence[CountRecord], label: str = "counts") -> UncertainValue:
    """Mean count rate with Poisson and numerical standard deviations in quadrature.

    ``sigma^2 = <rate> / T + s^2 / N`` where ``T`` is the total gate time and
    ``s`` the sample standard deviation of the ``N`` per-gate rates.
    """
    if not records:
        raise DataError("no count records")
    rates = np.array([r.counts / r.gate_s for r in records])
    total = sum(r.gate_s for r in records)
    mean = float(np.sum([r.counts for r in records]) / total)
    var = mean / total
    if rates.size > 1:
        var += float(np.var(rates, ddof=1)) / rates.size
    return unc.lift(mean, math.sqrt(var), label)


@dataclass
class NetRate:
    bias_v: float
    light: UncertainValue
    dark: UncertainValue
    net: UncertainValue


def net_count_rate(light: Sequence[CountRecord], dark: Sequence[CountRecord]) -> list[NetRate]:
    """``<CR> - <DCR>`` per bias point; bias grids must match exactly."""
    lb, db = _by_bias(light), _by_bias(dark)
    if set(lb) != set(db):
        only_l = sorted(set(lb) - set(db))
        only_d = sorted(set(db) - set(lb))
        raise AlignmentError(f"bias grids differ: light-only {only_l}, dark-only {only_d}")
    out = []
    for v in sorted(lb):
        cr = count_rate(lb[v], "counts:light")
        dcr = count_rate(db[v], "counts:dark")
        out.append(NetRate(v, cr, dcr, cr - dcr))
    return out


# ---------------------------------------------------------------------------
# power and flux


def detector_port_power(mpm_reading, model: NonlinModel, r: int, r_sw: UncertainValue,
                        cf_cpm: UncertainValue, wavelength_nm: float | None = None,
                        *, as_written: bool = False) -> UncertainValue:
    """Optical power leaving the detector port at zero attenuation.

    ``P_DP = P_MPM / CF_NL(r, P_MPM) * R_SW / CF_CPM`` with
    ``R_SW = <P_CPM> / <P_MPM,lin>``.  ``as_written=True`` divides by ``R_SW``
    instead; it exists for comparison only and is not physically consistent.
    """
    if wavelength_nm is not None:
        check_wavelength(wavelength_nm, model.wavelength_nm)
    p = model.linearize(r, mpm_reading)
    if as_written:
        return p / r_sw / cf_cpm
    return p * r_sw / cf_cpm


@dataclass
class PhotonFlux:
    p_dp: UncertainValue
    alphas: tuple
    wavelength_nm: float
    rate: UncertainValue


def photon_rate(p_dp, alpha_1, alpha_2, alpha_3, wavelength_nm: float) -> PhotonFlux:
    """Photons per second reaching the detector."""
    for name, x in (("P_DP", p_dp), ("alpha_1", alpha_1), ("alpha_2", alpha_2), ("alpha_3", alpha_3)):
        if not unc.value_of(x) > 0:
            raise DataError(f"{name} must be positive")
    if not wavelength_nm > 0:
        raise DataError("wavelength must be positive")
    rate = p_dp * alpha_1 * alpha_2 * alpha_3 / photon_energy_j(wavelength_nm)
    if not isinstance(rate, UncertainValue):
        rate = UncertainValue(rate)
    return PhotonFlux(p_dp, (alpha_1, alpha_2, alpha_3), wavelength_nm, rate)


def sde_estimate(net, flux: PhotonFlux | UncertainValue) -> UncertainValue:
    rate = flux.rate if isinstance(flux, PhotonFlux) else flux
    out = net / rate
    return out if isinstance(out, UncertainValue) else UncertainValue(out)


# ---------------------------------------------------------------------------
# curves


@dataclass
class SdePoint:
    bias_v: float
    bias_a: float
    sde: UncertainValue
    net_rate: UncertainValue
    light_rate: UncertainValue
    dark_rate: UncertainValue

    def to_dict(self):
        return {"bias_v": self.bias_v, "bias_a": self.bias_a, "bias_ua": self.bias_a * 1e6,
                "sde": sio.uv_to_json(self.sde), "net_rate": sio.uv_to_json(self.net_rate),
                "light_rate": sio.uv_to_json(self.light_rate), "dark_rate": sio.uv_to_json(self.dark_rate),
                "budget": self.sde.budget()}


@dataclass
class SdeResult:
    wavelength_nm: float
    flux: PhotonFlux
    curves: dict                                # phase -> list[SdePoint]
    series_resistor_ohm: float = SERIES_RESISTOR_OHM
    metadata: dict = field(default_factory=dict)

    def at_bias(self, phase: str, bias_v: float) -> SdePoint:
        for p in self.curves[phase]:
            if abs(p.bias_v - bias_v) < 1e-9:
                return p
        raise KeyError(f"no {phase} point at {bias_v} V")

    def to_dict(self) -> dict:
        f = self.flux
        return {
            "kind": "SdeResult",
            "wavelength_nm": self.wavelength_nm,
            "series_resistor_ohm": self.series_resistor_ohm,
            "flux": {"rate_per_s": sio.uv_to_json(f.rate), "p_dp_w": sio.uv_to_json(f.p_dp),
                     "alphas": [sio.uv_to_json(a) for a in f.alphas],
                     "budget": f.rate.budget()},
            "curves": {ph: [p.to_dict() for p in pts] for ph, pts in self.curves.items()},
            "metadata": self.metadata,
        }

    def write_csv(self, path):
        rows = []
        for ph, pts in self.curves.items():
            for p in pts:
                rows.append([p.bias_a * 1e6, p.sde.value, p.sde.sigma, ph])
        sio.write_csv(path, ["bias_uA", "sde", "sigma", "phase"], rows)


@dataclass
class Calibration:
    """Everything needed to turn counts into SDE at one wavelength."""

    nonlin: NonlinModel
    r_sw: UncertainValue
    cpm: CpmCalibration
    wavelength_nm: float

    def cf_cpm(self) -> UncertainValue:
        return self.cpm.factor(self.wavelength_nm)

    def to_dict(self) -> dict:
        return {"kind": "CalibrationBundle", "wavelength_nm": self.wavelength_nm,
                "nonlin": self.nonlin.to_dict(), "switch": sio.uv_to_json(self.r_sw),
                "cpm": self.cpm.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        if d.get("kind") != "CalibrationBundle":
            raise DataError("document is not a calibration bundle")
        try:
            sw = d["switch"]
            return cls(NonlinModel.from_dict(d["nonlin"]),
                       unc.lift(float(sw["value"]), float(sw["sigma"]), label="R_SW"),
                       CpmCalibration.from_dict(d["cpm"]), float(d["wavelength_nm"]))
        except KeyError as exc:
            raise DataError(f"calibration bundle lacks {exc}") from None


def sde_from_records(counts: Sequence[CountRecord], atten_records, calib: Calibration,
                     wavelength_nm: float, series_resistor_ohm: float = SERIES_RESISTOR_OHM,
                     as_written: bool = False) -> SdeResult:
    check_wavelength(wavelength_nm, calib.wavelength_nm, calib.nonlin.wavelength_nm)
    by_phase = defaultdict(list)
    for c in counts:
        by_phase[c.phase].append(c)
    missing = [p for p in PHASES if not by_phase.get(p)]
    if missing:
        raise IncompleteSessionError(f"session lacks phases {missing}")
    results = [attenuator_result(rec, calib.nonlin) for rec in atten_records]
    ids = sorted(r.record.attenuator_id for r in results)
    if ids != [1, 2, 3]:
        raise IncompleteSessionError(f"attenuator calibration covers {ids}, need [1, 2, 3]")
    for r in results:
        check_wavelength(wavelength_nm, r.record.wavelength_nm)
    results.sort(key=lambda r: r.record.attenuator_id)
    # monitor-port power at zero attenuation: mean of the three reference phases
    ref = unc.umean([r.reference_w for r in results])
    p_mpm = ref
    p_dp = p_mpm * calib.r_sw / calib.cf_cpm() if not as_written else p_mpm / calib.r_sw / calib.cf_cpm()
    flux = photon_rate(p_dp, *[r.alpha for r in results], wavelength_nm)
    curves = {}
    for phase in ("maxpol", "minpol"):
        pts = []
        for nr in net_count_rate(by_phase[phase], by_phase["dark"]):
            pts.append(SdePoint(nr.bias_v, nr.bias_v / series_resistor_ohm,
                                sde_estimate(nr.net, flux), nr.net, nr.light, nr.dark))
        curves[phase] = pts
    return SdeResult(wavelength_nm, flux, curves, series_resistor_ohm,
                     {"alphas_nominal_db": [r.record.nominal_db for r in results],
                      "attenuated_range_dbm": [r.record.range_dbm for r in results],
                      "reference_range_dbm": CAL_RANGE_DBM})


def sde_curve(session: sio.Session, calib: Calibration, as_written: bool = False) -> SdeResult:
    """SDE versus bias for both polarization phases of an Algorithm-3 style session."""
    present = [r for r in ("sde_maxpol", "sde_minpol", "atten_cal") if session.has(r)]
    missing = sorted({"sde_maxpol", "sde_minpol", "atten_cal"} - set(present))
    if missing:
        raise IncompleteSessionError(f"session lacks files {missing}")
    counts = []
    seen_dark = False
    for role in ("sde_maxpol", "sde_minpol"):
        recs = load_counts(session.path(role))
        # both files repeat the same dark scan; use it once
        if seen_dark:
            recs = [r for r in recs if r.phase != "dark"]
        seen_dark = seen_dark or any(r.phase == "dark" for r in recs)
        counts.extend(recs)
    atten = load_atten_cal(session.path("atten_cal"))
    rs = session.params.get("series_resistor_ohm", SERIES_RESISTOR_OHM)
    return sde_from_records(counts, atten, calib, session.wavelength_nm, rs, as_written)


# ---------------------------------------------------------------------------
# budgets


@dataclass
class BudgetInputs:
    """Relative standard uncertainties of the non-counting inputs."""

    cf_cpm: float = 0.0014
    cf_nl: float = 0.00075
    r_sw: float = 0.0014
    alpha: tuple = (0.002, 0.002, 0.002)
    mpm: float = 0.001


def counting_relative_sigma(light_rate: float, dark_rate: float = 1e4, gates: int = 10,
                            gate_s: float = 1.0) -> float:
    """Relative sigma of ``<CR> - <DCR>`` for Poisson counts.

    The numerical standard deviation of Poisson gates equals the Poisson one
    in expectation, so each rate has variance ``2 * rate / T``.
    """
    t = gates * gate_s
    var = 2.0 * light_rate / t + 2.0 * dark_rate / t
    return math.sqrt(var) / (light_rate - dark_rate)


def budget_sde(inputs: BudgetInputs = BudgetInputs(), light_rate: float = 2.3e5,
               dark_rate: float = 1e4, gates: int = 10, gate_s: float = 1.0,
               include_counting: bool = True, alpha_base: str = "independent") -> UncertainValue:
    """Relative SDE uncertainty assembled from relative inputs.

    Returns an :class:`UncertainValue` with value 1 so that ``sigma`` is the
    relative uncertainty and ``budget()`` lists the contributions.

    Parameters
    ----------
    alpha_base : {"independent", "shared"}
        ``"independent"`` takes each attenuator transmission as its own input
        at ``inputs.alpha``.  ``"shared"`` rebuilds every transmission from
        two monitor reads (``inputs.mpm`` each) and nonlinearity corrections
        common to all three: one at the attenuated range (``CF_NL_att``) and
        the top-range one that also enters ``P_DP``.
    """
    if alpha_base not in ("independent", "shared"):
        raise ValueError(f"alpha_base must be 'independent' or 'shared', got {alpha_base!r}")
    cf_nl = unc.lift(1.0, inputs.cf_nl, "CF_NL")
    p_dp = (unc.lift(1.0, inputs.mpm, "MPM") * unc.lift(1.0, inputs.r_sw, "R_SW")
            / unc.lift(1.0, inputs.cf_cpm, "CF_CPM") / cf_nl)
    rate = p_dp
    if alpha_base == "independent":
        for i, a in enumerate(inputs.alpha, start=1):
            rate = rate * unc.lift(1.0, a, f"alpha_{i}")
    else:
        cf_att = unc.lift(1.0, inputs.cf_nl, "CF_NL_att")
        for i in range(1, len(inputs.alpha) + 1):
            att = unc.lift(1.0, inputs.mpm, f"alpha_{i}") / cf_att
            ref = unc.lift(1.0, inputs.mpm, f"alpha_{i}") / cf_nl
            rate = rate * (att / ref)
    net = UncertainValue(1.0)
    if include_counting:
        net = unc.lift(1.0, counting_relative_sigma(light_rate, dark_rate, gates, gate_s), "counts")
    return net / rate


def sde_relative_sigma(counting: float, p_dp: float, alphas: Sequence[float]) -> float:
    return math.sqrt(counting ** 2 + p_dp ** 2 + sum(a * a for a in alphas))


def port_power_relative_sigma(mpm: float, r_sw: float, cf_cpm: float, cf_nl: float) -> float:
    return math.sqrt(mpm ** 2 + r_sw ** 2 + cf_cpm ** 2 + cf_nl ** 2)
