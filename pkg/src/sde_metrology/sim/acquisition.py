"""Acquisition sequences run on the virtual bench.

Each ``run_*`` function drives the simulated instruments in the same order
as the bench procedures (nonlinearity sweep, switch calibration, attenuator
calibration, SDE counts, polarization scan, stability log) and returns a
:class:`SessionBundle` holding the tables it recorded plus the ground truth
needed to grade an analysis.  ``simulate_session`` runs all of them and
writes a session directory.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import io as sio
from ..nonlin import RANGES, full_scale_w, plan_nonlin_sweep
from ..sde import pileup_max_sde
from .bench import Bench
from .scenario import SimScenario

log = logging.getLogger(__name__)

_STAGES = {"cpm": 1, "nonlin": 2, "switch": 3, "sde": 4, "polscan": 5, "stability": 6}

NONLIN_HEADER = ["wavelength_nm", "range_dbm", "att1_db", "att2_db", "requested_att1_db",
                 "rep", "reading_w", "zero_w"]
SWITCH_HEADER = ["wavelength_nm", "meter", "range_dbm", "rep", "reading_w", "zero_w"]
ATTEN_HEADER = ["wavelength_nm", "attenuator", "phase", "setting_db", "att1_db", "att2_db",
                "att3_db", "range_dbm", "rep", "reading_w", "zero_w"]
COUNTS_HEADER = ["phase", "bias_v", "rep", "gate_s", "counts"]
STABILITY_HEADER = ["timestamp_s", "power_w"]


def stage_rng(seed: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2 ** 64 - 1), _STAGES[stage]]))


def realised_cf(scenario: SimScenario) -> float:
    c = scenario.cpm
    if c.cf_true is not None:
        return float(c.cf_true)
    z = stage_rng(scenario.seed, "cpm").standard_normal()
    return c.cf_certificate * (1.0 + c.cf_sigma_rel * z)


def new_bench(scenario: SimScenario, stage: str) -> Bench:
    return Bench(scenario, stage_rng(scenario.seed, stage), realised_cf(scenario))


@dataclass
class Table:
    filename: str
    header: list
    rows: list
    comments: list = field(default_factory=list)


@dataclass
class SessionBundle:
    """Files produced by one or more acquisitions plus sealed ground truth."""

    wavelength_nm: float
    tables: dict = field(default_factory=dict)        # role -> Table
    documents: dict = field(default_factory=dict)     # role -> (filename, obj)
    truth: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def merge(self, other: "SessionBundle") -> "SessionBundle":
        self.tables.update(other.tables)
        self.documents.update(other.documents)
        self.truth.update(other.truth)
        self.params.update(other.params)
        self.warnings.extend(other.warnings)
        return self

    def write(self, root, session_id: str = "sim") -> Path:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        files = {}
        for role, t in sorted(self.tables.items()):
            sio.write_csv(root / t.filename, t.header, t.rows, t.comments)
            files[role] = t.filename
        for role, (fname, obj) in sorted(self.documents.items()):
            sio.dump_json(obj, root / fname)
            files[role] = fname
        sio.write_manifest(root, session_id, self.wavelength_nm, files, self.params, self.warnings)
        tdir = root / sio.TRUTH_DIR
        tdir.mkdir(exist_ok=True)
        sio.dump_json(self.truth, tdir / "ground_truth.json")
        return root


# ---------------------------------------------------------------------------
# nonlinearity sweep


def run_nonlin_acquisition(scenario: SimScenario, ranges=RANGES, reads: int = 10) -> SessionBundle:
    bench = new_bench(scenario, "nonlin")
    lam = scenario.wavelength_nm
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        steps = plan_nonlin_sweep(ranges, reads)
    notes = [str(w.message) for w in caught]
    att1, att2, att3 = 0, 1, 2
    bench.route = "monitor_port"
    bench.att_settings = [0.0, 0.0, 0.0]
    rows = []
    current_range = None
    for st in steps:
        if st.range_dbm != current_range:
            current_range = st.range_dbm
            bench.mpm_set_range(st.range_dbm)
            bench.att_enabled = False
            bench.mpm_zero()
            bench.att_enabled = True
        bench.att_settings[att1] = st.att1_db
        bench.att_settings[att2] = st.att2_db
        bench.att_settings[att3] = 0.0
        for i, v in enumerate(bench.mpm_get_power(st.reads)):
            rows.append([lam, st.range_dbm, st.att1_db, st.att2_db, st.requested_att1_db,
                         i, float(v), bench.mpm_zero_w])
    m = scenario.mpm
    truth = {"nonlin": {
        "tau": scenario.attenuators[1].transmission(3.0) / scenario.attenuators[1].transmission(0.0),
        "coeffs": {str(r): {str(k): c for k, c in m.coeff(r).items()} for r in ranges},
        "range_factors": {str(r): float(m.steps.get(r, 1.0)) for r in ranges if r < -10},
        "monitor_power_w": scenario.laser.power_w * scenario.switch.monitor,
    }}
    return SessionBundle(lam, tables={"nonlin": Table("nonlin.csv", NONLIN_HEADER, rows)},
                         truth=truth, warnings=notes)


# ---------------------------------------------------------------------------
# switch calibration


def run_switch_cal(scenario: SimScenario, flips: int = 5, reads: int = 4) -> SessionBundle:
    bench = new_bench(scenario, "switch")
    lam = scenario.wavelength_nm
    bench.detector_port_to = "cpm"
    bench.controller = "fiber"
    bench.att_settings = [0.0, 0.0, 0.0]
    bench.mpm_set_range(-10)
    bench.route = "monitor_port"
    bench.att_enabled = False
    zero = bench.mpm_zero()
    bench.att_enabled = True
    rows = []
    rep = {"cpm": 0, "mpm": 0}
    for _ in range(flips):
        bench.route = "detector_port"
        for v in bench.cpm_get_power(reads):
            rows.append([lam, "cpm", -10, rep["cpm"], float(v), 0.0])
            rep["cpm"] += 1
        bench.route = "monitor_port"
        for v in bench.mpm_get_power(reads):
            rows.append([lam, "mpm", -10, rep["mpm"], float(v), zero])
            rep["mpm"] += 1
    sc = scenario
    certificate = {"kind": "CpmCertificate", "range_dbm": -10,
                   "factors": {format(lam, ".17g"): {"cf": sc.cpm.cf_certificate,
                                                     "rel_sigma": sc.cpm.cf_sigma_rel}}}
    truth = {"switch": {"cf_cpm_true": bench.cf_true,
                        "coupling_ratio": sc.switch.detector / sc.switch.monitor}}
    return SessionBundle(lam, tables={"switch_cal": Table("switch_cal.csv", SWITCH_HEADER, rows)},
                         documents={"cpm_certificate": ("cpm_certificate.json", certificate)},
                         truth=truth)


# ---------------------------------------------------------------------------
# attenuator calibration (run on an existing bench, as the SDE sequence does)


def attenuator_cal_rows(bench: Bench, attval: float, rngval: int, reads: int = 5,
                        init_rng: int = -10) -> list:
    lam = bench.sc.wavelength_nm
    rows = []
    bench.att_settings = [0.0, 0.0, 0.0]
    bench.route = "monitor_port"
    for i in range(3):
        for phase, rng_setting in (("zero", init_rng), ("att", rngval)):
            if phase == "att":
                bench.att_settings[i] = attval
            bench.mpm_set_range(rng_setting)
            bench.att_enabled = False
            z = bench.mpm_zero()
            bench.att_enabled = True
            for k, v in enumerate(bench.mpm_get_power(reads)):
                rows.append([lam, i + 1, phase, bench.att_settings[i], *bench.att_settings,
                             rng_setting, k, float(v), z])
        bench.att_settings[i] = 0.0
    return rows


def run_attenuator_cal(scenario: SimScenario, attval: float, rngval: int, reads: int = 5) -> SessionBundle:
    bench = new_bench(scenario, "sde")
    rows = attenuator_cal_rows(bench, attval, rngval, reads)
    truth = {"attenuators": {str(i + 1): a.transmission(attval) / a.transmission(0.0)
                             for i, a in enumerate(scenario.attenuators)}}
    return SessionBundle(scenario.wavelength_nm,
                         tables={"atten_cal": Table("atten_cal.csv", ATTEN_HEADER, rows)},
                         truth=truth, params={"attval_db": attval, "rngval_dbm": rngval})


# ---------------------------------------------------------------------------
# SDE counts


def _coordinate_search(bench: Bench, sign: int, steps: int, sweeps: int, gate_s: float):
    """Coordinate ascent on (sign * counts) over the three fiber paddles.

    Each coordinate is scanned over ``steps`` equally spaced angles in
    [0, 180) deg; the first-found best value wins ties.
    """
    angles = np.arange(steps) * 180.0 / steps
    best = list(bench.fiber_paddles)
    evals = 0
    for _ in range(sweeps):
        for j in range(3):
            scores = []
            for a in angles:
                trial = list(best)
                trial[j] = float(a)
                bench.fiber_paddles = tuple(trial)
                scores.append(sign * int(bench.get_counts(gate_s, 1)[0]))
                evals += 1
            best[j] = float(angles[int(np.argmax(scores))])
    bench.fiber_paddles = tuple(best)
    return tuple(best), evals


def expected_measured_sde(light_rate: float, dark_rate: float, flux: float, dead_time: float,
                          model: str) -> float:
    """Expected (registered light+dark - registered dark) / flux."""
    def reg(x):
        return x * pileup_max_sde(x, dead_time, model)
    if flux <= 0:
        return 0.0
    return (reg(light_rate + dark_rate) - reg(dark_rate)) / flux


def run_sde_session(scenario: SimScenario, bias_grid=None, attval: float = 31.0, rngval: int = -30,
                    reads: int = 10, gate_s: float = 1.0, vpol: float = 0.5,
                    opt_steps: int = 12, opt_sweeps: int = 2, opt_gate_s: float = 0.5,
                    att_reads: int = 5) -> SessionBundle:
    """Dark scan, polarization optimisation, max/min-pol scans, then attenuator cal."""
    if bias_grid is None:
        bias_grid = np.round(np.arange(0.0, 0.5 + 1e-9, 0.025), 6)
    bias_grid = [float(v) for v in bias_grid]
    if any(b2 <= b1 for b1, b2 in zip(bias_grid, bias_grid[1:])):
        raise ValueError("bias grid must be strictly increasing")
    sc = scenario
    d = sc.detector
    bench = new_bench(sc, "sde")
    bench.detector_port_to = "dut"
    bench.controller = "fiber"
    bench.att_settings = [attval] * 3
    bench.bias_v = 0.0

    dark_rows = []
    bench.route = "monitor_port"
    bench.att_enabled = False
    for v in bias_grid:
        bench.bias_v = v
        for i, c in enumerate(bench.get_counts(gate_s, reads)):
            dark_rows.append(["dark", v, i, gate_s, int(c)])
    bench.bias_v = 0.0

    bench.att_enabled = True
    bench.route = "detector_port"
    bench.bias_v = vpol
    maxpol, n_max = _coordinate_search(bench, +1, opt_steps, opt_sweeps, opt_gate_s)
    minpol, n_min = _coordinate_search(bench, -1, opt_steps, opt_sweeps, opt_gate_s)
    bench.bias_v = 0.0

    flux = bench.photon_flux()
    light = {}
    truth_curves = {}
    for phase, paddles in (("maxpol", maxpol), ("minpol", minpol)):
        bench.fiber_paddles = paddles
        rows = []
        curve = []
        pol = d.pol_factor(bench.polarization())
        for v in bias_grid:
            bench.bias_v = v
            lrate, drate = bench.incident_rate()
            for i, c in enumerate(bench.get_counts(gate_s, reads)):
                rows.append([phase, v, i, gate_s, int(c)])
            curve.append({"bias_v": v, "bias_ua": bench.bias_ua,
                          "intrinsic_sde": d.sde(bench.bias_ua) * pol,
                          "expected_sde": expected_measured_sde(lrate, drate, flux, d.dead_time_s,
                                                                d.dead_time_model)})
        bench.bias_v = 0.0
        light[phase] = rows
        truth_curves[phase] = {"paddles_deg": list(paddles), "pol_factor": pol, "curve": curve}

    atten_rows = attenuator_cal_rows(bench, attval, rngval, att_reads)

    tables = {"atten_cal": Table("atten_cal.csv", ATTEN_HEADER, atten_rows)}
    for phase in ("maxpol", "minpol"):
        body = ["Dark Counts", *dark_rows, MARKER(phase), *light[phase]]
        tables[f"sde_{phase}"] = Table(f"sde_{phase}.csv", COUNTS_HEADER, body)
    a_true = {str(i + 1): a.transmission(attval) / a.transmission(0.0)
              for i, a in enumerate(sc.attenuators)}
    truth = {
        "sde": {"flux_per_s": flux,
                "detector_port_power_w": sc.laser.power_w * sc.switch.detector,
                "alpha": a_true,
                "dead_time_s": d.dead_time_s, "dead_time_model": d.dead_time_model,
                "phases": truth_curves,
                "optimizer_evaluations": n_max + n_min},
        "attenuators": a_true,
    }
    params = {"attval_db": attval, "rngval_dbm": rngval, "bias_grid_v": bias_grid,
              "reads": reads, "gate_s": gate_s, "vpol_v": vpol,
              "series_resistor_ohm": d.series_resistor_ohm}
    return SessionBundle(sc.wavelength_nm, tables=tables, truth=truth, params=params)


def MARKER(phase):
    return sio.MARKER_TEXT[phase]


# ---------------------------------------------------------------------------
# polarization scan


@dataclass(frozen=True)
class GridSpec:
    n_qwp: int = 21
    n_hwp: int = 21
    qwp_span_deg: tuple = (0.0, 180.0)
    hwp_span_deg: tuple = (0.0, 90.0)

    def angles(self):
        q = self.qwp_span_deg[0] + np.arange(self.n_qwp) * (self.qwp_span_deg[1] - self.qwp_span_deg[0]) / self.n_qwp
        h = self.hwp_span_deg[0] + np.arange(self.n_hwp) * (self.hwp_span_deg[1] - self.hwp_span_deg[0]) / self.n_hwp
        return q, h

    def to_dict(self):
        return {"n_qwp": self.n_qwp, "n_hwp": self.n_hwp,
                "qwp_span_deg": list(self.qwp_span_deg), "hwp_span_deg": list(self.hwp_span_deg)}


def run_polscan(scenario: SimScenario, grid: GridSpec = GridSpec(), gates: int = 2,
                dark_gates: int = 20, bias_v: float = 0.5, attval: float = 31.0,
                classical_reads: int = 3, settle_s: float = 0.7) -> SessionBundle:
    sc = scenario
    d = sc.detector
    bench = new_bench(sc, "polscan")
    bench.controller = "free_space"
    bench.detector_port_to = "dut"
    bench.bias_v = bias_v
    qs, hs = grid.angles()

    # session dark level, light blocked
    bench.route = "monitor_port"
    bench.att_enabled = False
    dark = bench.get_counts(1.0, dark_gates)
    bench.att_enabled = True

    bench.att_settings = [attval] * 3
    bench.route = "detector_port"
    t0 = bench.clock
    counts = {}
    flux_truth = {}
    for q in qs:
        for h in hs:
            bench.free_space_angles = (float(q), float(h))
            bench.clock += settle_s
            counts[(q, h)] = bench.get_counts(1.0, gates)
            flux_truth[(q, h)] = (d.pol_factor(bench.polarization()), bench.controller_transmission())
    count_duration = bench.clock - t0

    # classical-level transmission, detector port spliced to the CPM
    bench.detector_port_to = "cpm"
    bench.att_settings = [0.0, 0.0, 0.0]
    bench.mpm_set_range(-10)
    bench.route = "monitor_port"
    bench.att_enabled = False
    zero = bench.mpm_zero()
    bench.att_enabled = True
    rows = []
    for q in qs:
        for h in hs:
            bench.free_space_angles = (float(q), float(h))
            bench.route = "detector_port"
            cpm = float(np.mean(bench.cpm_get_power(classical_reads)))
            bench.route = "monitor_port"
            mpm = float(np.mean(bench.mpm_get_power(classical_reads))) - zero
            rows.append([float(q), float(h), *[int(c) for c in counts[(q, h)]], cpm, mpm])

    header = ["qwp_deg", "hwp_deg", *[f"counts_{i + 1}" for i in range(gates)], "cpm_w", "mpm_w"]
    dark_rows = [["dark", bias_v, i, 1.0, int(c)] for i, c in enumerate(dark)]
    pol = np.array([v[0] for v in flux_truth.values()])
    truth = {"polscan": {"ps_true": d.ps, "ps_grid": float(pol.max() / pol.min()),
                         "count_duration_s": count_duration}}
    params = {"polscan": {"grid": grid.to_dict(), "gates": gates, "bias_v": bias_v,
                          "attval_db": attval, "count_duration_s": count_duration}}
    return SessionBundle(sc.wavelength_nm,
                         tables={"polscan": Table("polscan.csv", header, rows),
                                 "polscan_dark": Table("polscan_dark.csv", COUNTS_HEADER, dark_rows)},
                         truth=truth, params=params)


# ---------------------------------------------------------------------------
# source stability


def run_stability(scenario: SimScenario, duration_s: float = 3600.0, sample_rate_hz: float = 4.118,
                  range_dbm: int = -10) -> SessionBundle:
    """Monitor-port power logged at a fixed rate with all attenuators at 0 dB."""
    sc = scenario
    rng = stage_rng(sc.seed, "stability")
    n = int(duration_s * sample_rate_hz)
    t = np.arange(n) / sample_rate_hz
    L = sc.laser
    if L.drift_model == "random_walk":
        steps = L.drift_sigma_per_sqrt_s * math.sqrt(1.0 / sample_rate_hz) * rng.standard_normal(n)
        steps[0] = 0.0
        drift = np.cumsum(steps)
    elif L.drift_model == "linear":
        drift = L.drift_ppm_per_hour * 1e-6 * t / 3600.0
    else:
        drift = np.zeros(n)
    power = L.power_w * sc.switch.monitor * (1.0 + drift)
    m = sc.mpm
    fs = full_scale_w(range_dbm)
    reading = power * (1.0 + m.read_noise_rel * rng.standard_normal(n)) \
        + m.read_noise_abs_fs * fs * rng.standard_normal(n)
    rows = list(zip(t.tolist(), reading.tolist()))
    return SessionBundle(sc.wavelength_nm,
                         tables={"stability": Table("stability.csv", STABILITY_HEADER, rows)},
                         truth={"stability": {"drift_model": L.drift_model,
                                              "sigma_per_sqrt_s": L.drift_sigma_per_sqrt_s}},
                         params={"stability": {"sample_rate_hz": sample_rate_hz,
                                               "range_dbm": range_dbm}})


# ---------------------------------------------------------------------------


def simulate_session(scenario: SimScenario, out_dir=None, *, bias_grid=None, attval: float = 31.0,
                     rngval: int = -30, polscan: bool = True, stability: bool = True,
                     stability_s: float = 3600.0, grid: GridSpec = GridSpec()) -> SessionBundle:
    """Run every acquisition and (optionally) write the session directory."""
    scenario.validate()
    bundle = SessionBundle(scenario.wavelength_nm)
    bundle.merge(run_nonlin_acquisition(scenario))
    bundle.merge(run_switch_cal(scenario))
    bundle.merge(run_sde_session(scenario, bias_grid, attval, rngval))
    if polscan:
        bundle.merge(run_polscan(scenario, grid, attval=attval))
    if stability:
        bundle.merge(run_stability(scenario, stability_s))
    bundle.params["seed"] = scenario.seed
    bundle.truth["scenario"] = scenario.to_dict()
    bundle.truth["cf_cpm_true"] = realised_cf(scenario)
    if out_dir is not None:
        bundle.write(out_dir, session_id=f"sim-seed{scenario.seed}")
    return bundle
