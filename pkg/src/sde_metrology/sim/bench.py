"""Virtual instruments sharing one optical bench.

The layout follows a CW laser -> three attenuators -> 1x2 switch, with the
monitor port going to the monitoring power meter (MPM) and the detector port
going through a polarization controller to either the calibrated power meter
(CPM) or the detector under test.  Every reading advances a simulated clock,
which is what the laser drift is evaluated against.
"""
from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..constants import photon_energy_j
from ..nonlin import full_scale_w
from .scenario import SimScenario

ROUTES = ("monitor_port", "detector_port")


# -- polarization --------------------------------------------------------------


def _rotate(s, axis, angle):
    """Rodrigues rotation of Stokes vector ``s`` about ``axis``."""
    s = np.asarray(s, float)
    k = np.asarray(axis, float)
    c, sn = math.cos(angle), math.sin(angle)
    return s * c + np.cross(k, s) * sn + k * (k @ s) * (1 - c)


def retarder(s, retardance, angle_rad):
    """Waveplate with fast axis at ``angle_rad`` acting on a Stokes vector."""
    axis = (math.cos(2 * angle_rad), math.sin(2 * angle_rad), 0.0)
    return _rotate(s, axis, retardance)


def free_space_state(input_stokes, qwp_deg, hwp_deg):
    s = retarder(input_stokes, math.pi / 2, math.radians(qwp_deg))
    return retarder(s, math.pi, math.radians(hwp_deg))


def fiber_state(input_stokes, paddles_deg):
    q1, h, q2 = paddles_deg
    s = retarder(input_stokes, math.pi / 2, math.radians(q1))
    s = retarder(s, math.pi, math.radians(h))
    return retarder(s, math.pi / 2, math.radians(q2))


# -- arrival streams ----------------------------------------------------------------


def poisson_stream(rng, rate, duration):
    """Sorted arrival times of a homogeneous Poisson process on [0, duration)."""
    if rate <= 0 or duration <= 0:
        return np.empty(0)
    mean = rate * duration
    n = int(mean + 6.0 * math.sqrt(mean) + 20)
    t = np.cumsum(rng.exponential(1.0 / rate, n))
    while t[-1] < duration:
        more = np.cumsum(rng.exponential(1.0 / rate, max(n // 10, 100))) + t[-1]
        t = np.concatenate([t, more])
    return t[: np.searchsorted(t, duration)]


def registered_counts(rng, rate, gate_s, n_gates, dead_time, paralyzable):
    """Counts per gate for consecutive gates of a dead-time limited counter.

    Arrivals form an exact Poisson stream (exponential gaps drawn from
    ``rng``) that is thinned by the dead-time model as it is generated.
    """
    return kernels.stream_gate_counts(rng.bit_generator, float(rate), float(gate_s), int(n_gates),
                                      float(dead_time), bool(paralyzable))


class Bench:
    """Shared state of all simulated instruments for one acquisition."""

    def __init__(self, scenario: SimScenario, rng: np.random.Generator, cf_true: float):
        self.sc = scenario
        self.rng = rng
        self.cf_true = cf_true
        self.clock = 0.0
        self._drift_t = 0.0
        self._drift_y = 0.0
        self.att_settings = [0.0, 0.0, 0.0]
        self.att_enabled = True
        self.route = "monitor_port"
        self.detector_port_to = "dut"         # "dut" | "cpm"
        self.controller = "fiber"             # "fiber" | "free_space"
        self.fiber_paddles = (0.0, 0.0, 0.0)
        self.free_space_angles = (0.0, 0.0)
        self.mpm_range = -10
        self.mpm_zero_w = 0.0
        self.bias_v = 0.0

    # -- optics --------------------------------------------------------
    def laser_power(self) -> float:
        L = self.sc.laser
        if L.drift_model == "linear":
            return L.power_w * (1.0 + L.drift_ppm_per_hour * 1e-6 * self.clock / 3600.0)
        if L.drift_model == "random_walk":
            dt = self.clock - self._drift_t
            if dt > 0:
                self._drift_y += L.drift_sigma_per_sqrt_s * math.sqrt(dt) * self.rng.standard_normal()
                self._drift_t = self.clock
            return L.power_w * (1.0 + self._drift_y)
        return L.power_w

    def attenuation(self) -> float:
        if not self.att_enabled:
            return 0.0
        out = 1.0
        for att, s in zip(self.sc.attenuators, self.att_settings):
            out *= att.transmission(s)
        return out

    def controller_transmission(self) -> float:
        if self.controller == "free_space":
            return self.sc.polctrl.transmission(*self.free_space_angles)
        return 1.0

    def polarization(self):
        if self.controller == "free_space":
            return free_space_state(self.sc.polctrl.input_stokes, *self.free_space_angles)
        return fiber_state(self.sc.fiber_input_stokes, self.fiber_paddles)

    def port_power(self, port: str) -> float:
        if self.route != port:
            return 0.0
        p = self.laser_power() * self.attenuation()
        if port == "monitor_port":
            return p * self.sc.switch.monitor
        return p * self.sc.switch.detector * self.controller_transmission()

    def photon_flux(self) -> float:
        """Photons/s leaving the detector port (zero unless routed there)."""
        return self.port_power("detector_port") / photon_energy_j(self.sc.wavelength_nm)

    # -- monitoring power meter ----------------------------------------------
    def _mpm_clean(self, x_w: float, r: int) -> float:
        m = self.sc.mpm
        fs = full_scale_w(r)
        y = m.discontinuity(r) * x_w / fs
        coeff = m.coeff(r)
        w = y
        for _ in range(50):
            q = w + sum(c * w ** k for k, c in coeff.items())
            dq = 1.0 + sum(k * c * w ** (k - 1) for k, c in coeff.items())
            step = (q - y) / dq
            w -= step
            if abs(step) <= 1e-16 * max(abs(w), 1e-300):
                break
        return w * fs

    def mpm_set_range(self, r: int):
        self.mpm_range = int(r)

    def mpm_zero(self) -> float:
        """Record the dark offset; light must be blocked."""
        r = self.mpm_range
        fs = full_scale_w(r)
        m = self.sc.mpm
        self.clock += m.read_time_s
        incident = self.port_power("monitor_port")
        raw = m.zero_offset_fs.get(r, 0.0) * fs + m.read_noise_abs_fs * fs * self.rng.standard_normal()
        if incident > 0:
            raw += self._mpm_clean(incident, r)
        self.mpm_zero_w = raw
        return raw

    def mpm_get_power(self, n: int = 1) -> np.ndarray:
        """``n`` raw readings (the recorded zero is *not* subtracted)."""
        r = self.mpm_range
        fs = full_scale_w(r)
        m = self.sc.mpm
        out = np.empty(n)
        for i in range(n):
            self.clock += m.read_time_s
            clean = self._mpm_clean(self.port_power("monitor_port"), r)
            out[i] = (clean * (1.0 + m.read_noise_rel * self.rng.standard_normal())
                      + m.zero_offset_fs.get(r, 0.0) * fs
                      + m.read_noise_abs_fs * fs * self.rng.standard_normal())
        return out

    # -- calibrated power meter ------------------------------------------------
    def cpm_get_power(self, n: int = 1) -> np.ndarray:
        out = np.empty(n)
        for i in range(n):
            self.clock += self.sc.mpm.read_time_s
            p = self.port_power("detector_port") if self.detector_port_to == "cpm" else 0.0
            out[i] = self.cf_true * p * (1.0 + self.sc.cpm.read_noise_rel * self.rng.standard_normal())
        return out

    # -- detector and counter ---------------------------------------------------
    @property
    def bias_ua(self) -> float:
        return self.bias_v / self.sc.detector.series_resistor_ohm * 1e6

    def incident_rate(self) -> tuple[float, float]:
        """(photon-driven rate, dark rate) at the counter input before dead time."""
        d = self.sc.detector
        dark = d.dark_rate(self.bias_ua)
        if self.detector_port_to != "dut":
            return 0.0, dark
        flux = self.photon_flux()
        if flux == 0.0:
            return 0.0, dark
        eff = d.sde(self.bias_ua) * d.pol_factor(self.polarization())
        return eff * flux, dark

    def get_counts(self, gate_s: float = 1.0, n: int = 1) -> np.ndarray:
        light, dark = self.incident_rate()
        d = self.sc.detector
        counts = registered_counts(self.rng, light + dark, gate_s, n, d.dead_time_s,
                                   d.dead_time_model == "paralyzable")
        self.clock += gate_s * n
        return counts
