"""Ground-truth description of the virtual bench.

A :class:`SimScenario` round-trips through JSON (``to_dict``/``from_dict``);
unknown keys are rejected so that typos in hand-written scenario files fail
loudly.  All fields have defaults sized after the operating point of a
fiber-coupled detector near 1550 nm: about 2.3e5 photons/s after three 31 dB
attenuators, 1e4 dark counts/s at 5 uA and a 175 ns dead time.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..constants import SERIES_RESISTOR_OHM
from ..errors import DataError


@dataclass
class LaserTruth:
    power_w: float = 5.0e-5
    drift_model: str = "none"           # none | linear | random_walk
    drift_ppm_per_hour: float = 0.0
    drift_sigma_per_sqrt_s: float = 5.1e-4

    def validate(self):
        if self.power_w <= 0:
            raise DataError("laser power must be positive")
        if self.drift_model not in ("none", "linear", "random_walk"):
            raise DataError(f"unknown drift model {self.drift_model!r}")


@dataclass
class AttenuatorTruth:
    """Relative transmission at nominal setting ``s`` dB: ``10**(-s (1 + slope_error) / 10)``
    unless listed in ``overrides`` (keys are nominal dB as strings in JSON)."""

    slope_error: float = 0.0
    overrides: dict = field(default_factory=dict)

    def transmission(self, setting_db: float) -> float:
        for k, v in self.overrides.items():
            if float(k) == float(setting_db):
                return float(v)
        return 10.0 ** (-setting_db * (1.0 + self.slope_error) / 10.0)


def _default_attenuators():
    return [
        AttenuatorTruth(slope_error=0.0015),
        # nominal 3 dB step of att2 transmits exactly one half
        AttenuatorTruth(slope_error=-0.001, overrides={"3.0": 0.5}),
        AttenuatorTruth(slope_error=0.0008),
    ]


@dataclass
class SwitchTruth:
    monitor: float = 0.95
    detector: float = 0.93


@dataclass
class MeterTruth:
    """Monitoring power meter.

    ``coeffs[r]`` holds ``{k: c_k}`` of the reading-to-power polynomial in
    full-scale units, ``Q(w) = w + sum c_k w**k``; ``steps[r]`` is the
    multiplicative discontinuity between range ``r`` and ``r + 10``.  The
    reading ``w`` satisfies ``Q_r(w) = (prod_{r'>=r} steps) * x / FS_r``.
    """

    coeffs: dict = field(default_factory=lambda: {-30: {2: 0.02}})
    steps: dict = field(default_factory=lambda: {-20: 1.002, -30: 1.004, -40: 0.997,
                                                 -50: 1.003, -60: 0.998})
    read_noise_rel: float = 1e-3
    read_noise_abs_fs: float = 2e-6
    zero_offset_fs: dict = field(default_factory=lambda: {r: 1e-4 for r in
                                                          (-10, -20, -30, -40, -50, -60)})
    read_time_s: float = 0.25

    def coeff(self, r) -> dict:
        return {int(k): float(v) for k, v in self.coeffs.get(r, {}).items()}

    def discontinuity(self, r) -> float:
        d = 1.0
        rr = r
        while rr < -10:
            d *= float(self.steps.get(rr, 1.0))
            rr += 10
        return d


@dataclass
class CpmTruth:
    """Calibrated power meter: readings are ``cf_true * power``.

    ``cf_true = None`` draws the realised factor per seed from the certificate
    distribution, ``cf_certificate * (1 + cf_sigma_rel * z)``.
    """

    cf_certificate: float = 1.01
    cf_sigma_rel: float = 1.4e-3
    cf_true: float | None = None
    read_noise_rel: float = 1e-3


@dataclass
class DetectorTruth:
    sde_plateau: float = 0.9995
    bias_half_ua: float = 3.6
    bias_width_ua: float = 0.12
    dark_rate_at_ref: float = 1e4
    dark_ref_ua: float = 5.0
    dark_scale_ua: float = 0.6
    dead_time_s: float = 175e-9
    dead_time_model: str = "paralyzable"
    ps: float = 1.02
    # preferred polarization as a unit Stokes vector (S1, S2, S3)
    pol_axis: tuple = (0.36, 0.48, 0.8)
    series_resistor_ohm: float = SERIES_RESISTOR_OHM

    def sde(self, bias_ua: float) -> float:
        z = (bias_ua - self.bias_half_ua) / self.bias_width_ua
        return self.sde_plateau / (1.0 + math.exp(-z)) if z > -700 else 0.0

    def dark_rate(self, bias_ua: float) -> float:
        if bias_ua <= 0:
            return 0.0
        return self.dark_rate_at_ref * math.exp((bias_ua - self.dark_ref_ua) / self.dark_scale_ua)

    def pol_factor(self, stokes) -> float:
        n = self.pol_axis
        norm = math.sqrt(sum(x * x for x in n))
        cos = sum(a * b for a, b in zip(stokes, n)) / norm
        return 1.0 - (1.0 - 1.0 / self.ps) * (1.0 - cos) / 2.0


@dataclass
class PolControllerTruth:
    """Free-space polarizer / QWP / HWP controller.

    Transmission ``t0 * (1 + ripple * (sin(2 q + phase_q) + cos(4 h + phase_h)) / 2)``
    with ``q``, ``h`` the QWP and HWP angles.
    """

    t0: float = 0.8
    ripple: float = 0.02
    phase_q_deg: float = 30.0
    phase_h_deg: float = 10.0
    input_stokes: tuple = (1.0, 0.0, 0.0)

    def transmission(self, qwp_deg: float, hwp_deg: float) -> float:
        q, h = math.radians(qwp_deg), math.radians(hwp_deg)
        wiggle = 0.5 * (math.sin(2 * q + math.radians(self.phase_q_deg))
                        + math.cos(4 * h + math.radians(self.phase_h_deg)))
        return self.t0 * (1.0 + self.ripple * wiggle)


@dataclass
class SimScenario:
    seed: int = 0
    wavelength_nm: float = 1550.0
    laser: LaserTruth = field(default_factory=LaserTruth)
    attenuators: list = field(default_factory=_default_attenuators)
    switch: SwitchTruth = field(default_factory=SwitchTruth)
    mpm: MeterTruth = field(default_factory=MeterTruth)
    cpm: CpmTruth = field(default_factory=CpmTruth)
    detector: DetectorTruth = field(default_factory=DetectorTruth)
    polctrl: PolControllerTruth = field(default_factory=PolControllerTruth)
    # input polarization entering the all-fiber controller
    fiber_input_stokes: tuple = (1.0, 0.0, 0.0)

    def validate(self) -> "SimScenario":
        self.laser.validate()
        if len(self.attenuators) != 3:
            raise DataError("exactly three attenuators are simulated")
        for name, t in (("switch.monitor", self.switch.monitor),
                        ("switch.detector", self.switch.detector),
                        ("polctrl.t0", self.polctrl.t0)):
            if not 0.0 < t <= 1.0:
                raise DataError(f"{name} transmission must be in (0, 1], got {t}")
        if self.polctrl.t0 * (1 + self.polctrl.ripple) > 1.0 or self.polctrl.ripple < 0:
            raise DataError("polarization controller transmission must stay within (0, 1]")
        d = self.detector
        if not 0.0 <= d.sde_plateau <= 1.0:
            raise DataError("detector SDE must be within [0, 1]")
        if d.ps < 1.0:
            raise DataError("polarization sensitivity must be >= 1")
        if d.dead_time_model not in ("paralyzable", "nonparalyzable"):
            raise DataError(f"unknown dead-time model {d.dead_time_model!r}")
        for x in (self.mpm.read_noise_rel, self.mpm.read_noise_abs_fs, self.cpm.read_noise_rel,
                  self.cpm.cf_sigma_rel, d.dead_time_s, d.dark_rate_at_ref):
            if x < 0:
                raise DataError("noise levels, dead time and dark rate must be non-negative")
        return self

    # -- JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mpm"]["coeffs"] = {str(r): {str(k): v for k, v in c.items()}
                              for r, c in self.mpm.coeffs.items()}
        d["mpm"]["steps"] = {str(r): v for r, v in self.mpm.steps.items()}
        d["mpm"]["zero_offset_fs"] = {str(r): v for r, v in self.mpm.zero_offset_fs.items()}
        for a in d["attenuators"]:
            a["overrides"] = {str(float(k)): v for k, v in a["overrides"].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimScenario":
        d = dict(d)
        kw = {}
        sub = {"laser": LaserTruth, "switch": SwitchTruth, "cpm": CpmTruth,
               "detector": DetectorTruth, "polctrl": PolControllerTruth}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise DataError(f"unknown scenario keys {sorted(unknown)}")
        for key, typ in sub.items():
            if key in d:
                kw[key] = _build(typ, d.pop(key), key)
        if "mpm" in d:
            m = dict(d.pop("mpm"))
            if "coeffs" in m:
                m["coeffs"] = {int(r): {int(k): float(v) for k, v in c.items()}
                               for r, c in m["coeffs"].items()}
            for key in ("steps", "zero_offset_fs"):
                if key in m:
                    m[key] = {int(r): float(v) for r, v in m[key].items()}
            kw["mpm"] = _build(MeterTruth, m, "mpm")
        if "attenuators" in d:
            kw["attenuators"] = [_build(AttenuatorTruth, a, "attenuators") for a in d.pop("attenuators")]
        for key in ("fiber_input_stokes",):
            if key in d:
                kw[key] = tuple(d.pop(key))
        kw.update(d)
        sc = cls(**kw)
        if isinstance(sc.detector.pol_axis, list):
            sc.detector.pol_axis = tuple(sc.detector.pol_axis)
        if isinstance(sc.polctrl.input_stokes, list):
            sc.polctrl.input_stokes = tuple(sc.polctrl.input_stokes)
        return sc.validate()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SimScenario":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from exc
        return cls.from_dict(doc)

    def replace(self, **changes) -> "SimScenario":
        return dataclasses.replace(self, **changes)


def _build(typ, d, where):
    names = {f.name for f in dataclasses.fields(typ)}
    unknown = set(d) - names
    if unknown:
        raise DataError(f"unknown keys in {where}: {sorted(unknown)}")
    return typ(**d)


def stability_scenario(seed: int = 0) -> SimScenario:
    """Scenario whose laser wanders as a random walk sized so that the
    10 s Allan deviation is about 9.3e-4."""
    sc = SimScenario(seed=seed)
    sc.laser.drift_model = "random_walk"
    # random-walk Allan variance: sigma_y^2(tau) = q tau / 3
    sc.laser.drift_sigma_per_sqrt_s = 9.3e-4 * math.sqrt(3.0 / 10.0)
    return sc


def random_nonlin_scenario(seed: int, max_nonlin: float = 0.03, step_range=(0.002, 0.005),
                           noise_range=(5e-4, 1e-3), max_order: int = 3) -> SimScenario:
    """Scenario with a randomly drawn monitor-meter response.

    Each range gets a polynomial of order 1..``max_order`` whose deviation
    from linear stays within ``max_nonlin`` over readings up to 1.2 of full
    scale, each range boundary a step of random sign with magnitude in
    ``step_range`` and the relative read noise is drawn from ``noise_range``.
    """
    import numpy as np

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x4E4C]))
    sc = SimScenario(seed=int(seed))
    u_max = 1.2
    coeffs = {}
    for r in (-10, -20, -30, -40, -50, -60):
        order = int(rng.integers(1, max_order + 1))
        if order == 1:
            continue
        # relative deviation (Q - w)/w = sum c_k w**(k-1); split the budget over the terms
        total = rng.uniform(0.2, 1.0) * max_nonlin
        shares = rng.dirichlet(np.ones(order - 1))
        signs = rng.choice([-1.0, 1.0], order - 1)
        c = {k: float(signs[k - 2] * shares[k - 2] * total / u_max ** (k - 1)) for k in range(2, order + 1)}
        # the top coefficient must carry a visible share or the order is not identifiable
        top = order
        if abs(c[top]) * u_max ** (top - 1) < 0.25 * total:
            c[top] = float(np.sign(c[top] or 1.0) * 0.25 * total / u_max ** (top - 1))
        coeffs[r] = c
    sc.mpm.coeffs = coeffs
    sc.mpm.steps = {r: float(1.0 + rng.choice([-1.0, 1.0]) * rng.uniform(*step_range))
                    for r in (-20, -30, -40, -50, -60)}
    sc.mpm.read_noise_rel = float(rng.uniform(*noise_range))
    return sc.validate()
