"""Optical-switch and attenuator calibration.

The switch ratio ``R_SW`` transfers a monitor-port reading to the power
leaving the detector port: with the detector port spliced to the calibrated
meter (CPM), ``R_SW = <P_CPM> / <P_MPM>`` at classical levels, both meters on
their -10 dBm range.  The attenuators are calibrated on the monitor port
alone, so neither ``R_SW`` nor the CPM factor enters ``alpha_i``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import io as sio
from . import uncertainty as unc
from .errors import (
    CalibrationMismatchError,
    DataError,
    SuspiciousGainError,
    UnstableSourceError,
)
from .nonlin import NonlinModel, check_range
from .uncertainty import UncertainValue

MAX_SPREAD = 0.05
CAL_RANGE_DBM = -10
# wavelength agreement required between calibration inputs
WAVELENGTH_TOL_NM = 0.01


def check_wavelength(*values, what="calibration inputs"):
    vals = [float(v) for v in values if v is not None]
    if vals and max(vals) - min(vals) > WAVELENGTH_TOL_NM:
        raise CalibrationMismatchError(f"{what} disagree on wavelength: {sorted(set(vals))} nm")


def _spread(a) -> float:
    a = np.asarray(a, float)
    return float((a.max() - a.min()) / abs(a.mean()))


def _positive(name, a):
    a = np.asarray(a, float)
    if a.size == 0:
        raise DataError(f"{name}: no readings")
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise DataError(f"{name}: readings must be positive and finite")
    return a


# ---------------------------------------------------------------------------
# switch


@dataclass
class SwitchCalRecord:
    wavelength_nm: float
    cpm_readings: Sequence[float]
    mpm_readings: Sequence[float]
    range_dbm: int = CAL_RANGE_DBM
    mpm_zero_w: float = 0.0

    def __post_init__(self):
        if check_range(self.range_dbm) != CAL_RANGE_DBM:
            raise DataError(f"switch calibration must use the {CAL_RANGE_DBM} dBm range")
        self.cpm_readings = _positive("CPM", self.cpm_readings)
        self.mpm_readings = _positive("MPM", np.asarray(self.mpm_readings, float) - self.mpm_zero_w)
        self.mpm_zero_w = 0.0


def switching_ratio(rec: SwitchCalRecord, model: NonlinModel | None = None,
                    floor_rel: float = 0.0) -> UncertainValue:
    """``R_SW = <P_CPM> / <P_MPM>`` with standard-error uncertainty.

    With ``model`` the MPM mean is linearised first, so ``R_SW`` maps a
    linearised monitor reading onto the raw CPM scale.  ``floor_rel`` adds an
    independent term so that the relative sigma is at least that value.
    """
    for name, a in (("CPM", rec.cpm_readings), ("MPM", rec.mpm_readings)):
        if a.size > 1 and _spread(a) > MAX_SPREAD:
            raise UnstableSourceError(f"{name} readings spread {_spread(a):.1%} exceeds {MAX_SPREAD:.0%}")
    cpm = unc.from_samples(rec.cpm_readings, label="R_SW")
    mpm = unc.from_samples(rec.mpm_readings, label="R_SW")
    if model is not None:
        check_wavelength(rec.wavelength_nm, model.wavelength_nm)
        mpm = model.linearize(CAL_RANGE_DBM, mpm)
    r = cpm / mpm
    if floor_rel > 0 and r.relative_sigma < floor_rel:
        extra = math.sqrt(floor_rel ** 2 - r.relative_sigma ** 2) * r.value
        r = r + unc.lift(0.0, extra, label="R_SW")
    return r


def load_switch_cal(path) -> SwitchCalRecord:
    rows = sio.read_csv(path, required=("wavelength_nm", "meter", "range_dbm", "reading_w"),
                        numeric=("wavelength_nm", "range_dbm", "reading_w", "zero_w"))
    by = defaultdict(list)
    zeros = []
    lams = set()
    for row in rows:
        if row["range_dbm"] != CAL_RANGE_DBM:
            raise DataError(f"switch calibration row at range {row['range_dbm']:g} dBm",
                            path=path, line=row["_line"])
        meter = row["meter"].lower()
        if meter not in ("cpm", "mpm"):
            raise DataError(f"unknown meter {row['meter']!r}", path=path, line=row["_line"])
        val = row["reading_w"]
        if meter == "mpm":
            val -= row.get("zero_w", 0.0)
        by[meter].append(val)
        lams.add(row["wavelength_nm"])
    if len(lams) != 1:
        raise DataError(f"switch calibration must cover one wavelength, found {sorted(lams)}", path=path)
    if not by["cpm"] or not by["mpm"]:
        raise DataError("switch calibration needs both CPM and MPM readings", path=path)
    return SwitchCalRecord(lams.pop(), by["cpm"], by["mpm"])


# ---------------------------------------------------------------------------
# calibrated power meter


@dataclass
class CpmCalibration:
    """Certificate factors ``CF_CPM(lambda)``; CPM readings are divided by them."""

    factors: dict  # wavelength nm -> (cf, relative sigma)
    range_dbm: int = CAL_RANGE_DBM
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for lam, (cf, rel) in self.factors.items():
            if not cf > 0 or rel < 0:
                raise DataError(f"invalid CPM factor at {lam} nm")

    def factor(self, wavelength_nm: float) -> UncertainValue:
        for lam, (cf, rel) in self.factors.items():
            if abs(float(lam) - wavelength_nm) <= WAVELENGTH_TOL_NM:
                if lam not in self._cache:
                    self._cache[lam] = unc.lift(cf, cf * rel, label="CF_CPM")
                return self._cache[lam]
        raise CalibrationMismatchError(
            f"no CPM calibration at {wavelength_nm} nm (have {sorted(map(float, self.factors))})")

    @classmethod
    def from_dict(cls, d: dict) -> "CpmCalibration":
        try:
            f = {float(k): (float(v["cf"]), float(v["rel_sigma"])) for k, v in d["factors"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed CPM certificate: {exc}") from exc
        return cls(f, int(d.get("range_dbm", CAL_RANGE_DBM)))

    def to_dict(self) -> dict:
        return {"kind": "CpmCertificate", "range_dbm": self.range_dbm,
                "factors": {format(k, ".17g"): {"cf": cf, "rel_sigma": rel}
                            for k, (cf, rel) in self.factors.items()}}


# ---------------------------------------------------------------------------
# attenuators


@dataclass
class AttenCalRecord:
    attenuator_id: int
    zero_readings: Sequence[float]
    att_readings: Sequence[float]
    nominal_db: float
    range_dbm: int
    wavelength_nm: float
    zero_range_dbm: int = CAL_RANGE_DBM

    def __post_init__(self):
        if self.attenuator_id not in (1, 2, 3):
            raise DataError(f"attenuator id must be 1, 2 or 3, got {self.attenuator_id!r}")
        check_range(self.range_dbm)
        if check_range(self.zero_range_dbm) != CAL_RANGE_DBM:
            raise DataError(f"reference phase must use the {CAL_RANGE_DBM} dBm range")
        self.zero_readings = _positive(f"attenuator {self.attenuator_id} reference", self.zero_readings)
        self.att_readings = _positive(f"attenuator {self.attenuator_id} attenuated", self.att_readings)


@dataclass
class AttenCalResult:
    """Linearised mean powers of both phases and their ratio ``alpha``."""

    record: AttenCalRecord
    reference_w: UncertainValue
    attenuated_w: UncertainValue
    alpha: UncertainValue


def attenuator_result(rec: AttenCalRecord, model: NonlinModel) -> AttenCalResult:
    check_wavelength(rec.wavelength_nm, model.wavelength_nm)
    tag = f"MPM:att{rec.attenuator_id}"
    zero = model.linearize(rec.zero_range_dbm, unc.from_samples(rec.zero_readings, label=tag))
    att = model.linearize(rec.range_dbm, unc.from_samples(rec.att_readings, label=tag))
    alpha = att / zero
    if alpha.value > 1.0 + 3.0 * alpha.sigma:
        raise SuspiciousGainError(
            f"attenuator {rec.attenuator_id} transmits {alpha.value:.6g} > 1 at {rec.nominal_db:g} dB")
    return AttenCalResult(rec, zero, att, alpha)


def calibrate_attenuator(rec: AttenCalRecord, model: NonlinModel) -> UncertainValue:
    """Linear transmission ``alpha`` of one attenuator at its nominal setting.

    Both phases are averaged first and then linearised with the meter model
    evaluated at the mean reading.
    """
    return attenuator_result(rec, model).alpha


def load_atten_cal(path) -> list[AttenCalRecord]:
    rows = sio.read_csv(path, required=("wavelength_nm", "attenuator", "phase", "setting_db",
                                        "att1_db", "att2_db", "att3_db", "range_dbm", "reading_w"),
                        numeric=("wavelength_nm", "attenuator", "setting_db", "att1_db", "att2_db",
                                 "att3_db", "range_dbm", "reading_w", "zero_w"))
    groups = defaultdict(lambda: {"zero": [], "att": [], "rng": {}, "setting": None, "lam": set()})
    for row in rows:
        i = int(row["attenuator"])
        if i not in (1, 2, 3):
            raise DataError(f"attenuator id {i}", path=path, line=row["_line"])
        others = [row[f"att{j}_db"] for j in (1, 2, 3) if j != i]
        if any(o != 0.0 for o in others):
            raise DataError(f"attenuator {i} calibrated with other attenuators not at 0 dB",
                            path=path, line=row["_line"])
        phase = row["phase"]
        if phase not in ("zero", "att"):
            raise DataError(f"unknown phase {phase!r}", path=path, line=row["_line"])
        g = groups[i]
        g[phase].append(row["reading_w"] - row.get("zero_w", 0.0))
        g["rng"].setdefault(phase, set()).add(int(row["range_dbm"]))
        g["lam"].add(row["wavelength_nm"])
        if phase == "att":
            if g["setting"] is not None and g["setting"] != row["setting_db"]:
                raise DataError(f"attenuator {i} has several nominal settings", path=path,
                                line=row["_line"])
            g["setting"] = row["setting_db"]
    out = []
    for i in sorted(groups):
        g = groups[i]
        if not g["zero"] or not g["att"]:
            raise DataError(f"attenuator {i} lacks a reference or attenuated phase", path=path)
        for phase in ("zero", "att"):
            if len(g["rng"][phase]) != 1:
                raise DataError(f"attenuator {i} {phase} phase mixes range settings", path=path)
        if len(g["lam"]) != 1:
            raise DataError(f"attenuator {i} rows mix wavelengths", path=path)
        out.append(AttenCalRecord(i, g["zero"], g["att"], g["setting"], next(iter(g["rng"]["att"])),
                                  next(iter(g["lam"])), next(iter(g["rng"]["zero"]))))
    return out


# ---------------------------------------------------------------------------
# budgets


def attenuator_relative_sigma(mpm_ref: float, mpm_att: float, nl_ref: float, nl_att: float) -> float:
    """Relative sigma of ``alpha`` from its four independent relative terms."""
    return math.sqrt(mpm_ref ** 2 + mpm_att ** 2 + nl_ref ** 2 + nl_att ** 2)


def attenuator_propagated(mpm_ref: float, mpm_att: float, nl_ref: float, nl_att: float) -> UncertainValue:
    """Same budget realised through the uncertainty engine (ratio of two corrected readings)."""
    ref = unc.lift(1.0, mpm_ref, "MPM") / unc.lift(1.0, nl_ref, "CF_NL")
    att = unc.lift(7.943e-4, 7.943e-4 * mpm_att, "MPM") / unc.lift(1.0, nl_att, "CF_NL")
    return att / ref
