"""Monitoring power-meter nonlinearity calibration.

The meter is characterised with two attenuators: ``att1`` sweeps the light
level while ``att2`` toggles between its nominal 0 dB and 3 dB settings.  The
true transmission ``tau`` of the 3 dB step is unknown and fitted jointly with
one polynomial per range setting,

    P_r(V) = V + sum_{k=2}^{N_r} b_k V**k,

by requiring ``P_r(V_tau) = tau * P_r(V)`` for every att1 setting at every
range.  Range-to-range steps are measured on att1 settings recorded at two
adjacent ranges and chained up to -10 dBm, where the calibrated reference
lives.  A reading ``v`` is linearised by dividing it by ``CF_NL(r, v)``.

Coefficients are fitted and stored in full-scale units (``u = V / FS_r`` with
``FS_r`` the range's full-scale power) to keep the normal equations well
conditioned.
"""
from __future__ import annotations

import logging
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import least_squares

from . import uncertainty as unc
from .errors import (
    DataError,
    FitFailure,
    InsufficientDataError,
    MissingOverlapError,
    OutOfDomainError,
)
from .uncertainty import UncertainValue

log = logging.getLogger(__name__)

RANGES = (-10, -20, -30, -40, -50, -60)
ATT2_STATES = (0.0, 3.0)
READS_PER_SETTING = 10
MAX_ORDER = 5
TAU_BOUNDS = (0.3, 0.7)


def full_scale_w(range_dbm: int) -> float:
    """Full-scale power of a range setting in watts (-10 dBm -> 100 uW)."""
    return 10.0 ** (range_dbm / 10.0) * 1e-3


def check_range(range_dbm) -> int:
    r = int(range_dbm)
    if r != range_dbm or r not in RANGES:
        raise DataError(f"range setting {range_dbm!r} dBm is not one of {RANGES}")
    return r


# ---------------------------------------------------------------------------
# acquisition schedule


def sweep_levels() -> np.ndarray:
    """Relative light levels of the att1 sweep, highest first (22 values)."""
    return np.concatenate([[20.0, 15.0], np.arange(10, 0.9, -0.5), np.arange(0.95, 0.5, -0.5)])


def base_attenuations() -> np.ndarray:
    base = np.round(10.0 - 10.0 * np.log10(sweep_levels()))
    return base - base.min()


@dataclass(frozen=True)
class SweepStep:
    att1_db: float
    att2_db: float
    range_dbm: int
    reads: int
    requested_att1_db: float

    @property
    def clamped(self) -> bool:
        return self.att1_db != self.requested_att1_db


def plan_nonlin_sweep(ranges: Sequence[int] = RANGES, reads: int = READS_PER_SETTING,
                      clamp: bool = True) -> list[SweepStep]:
    """Acquisition schedule for the nonlinearity sweep.

    For each range ``r`` the att1 settings are ``base - (r + 10) - 3`` where
    ``base`` comes from :func:`base_attenuations`; each is visited with att2 at
    0 dB and 3 dB.  At -10 dBm this yields -3 and -2 dB, which no attenuator
    can apply; with ``clamp`` they are set to 0 dB and a warning is issued.
    """
    ranges = [check_range(r) for r in ranges]
    if not ranges:
        raise ValueError("at least one range setting is required")
    base = base_attenuations()
    steps = []
    n_clamped = 0
    for r in ranges:
        for a in base - (r + 10) - 3:
            a = float(a)
            applied = max(a, 0.0) if clamp else a
            n_clamped += applied != a
            for att2 in ATT2_STATES:
                steps.append(SweepStep(applied, att2, r, reads, a))
    if n_clamped:
        warnings.warn(f"{n_clamped} negative att1 settings clamped to 0 dB", stacklevel=2)
    return steps


# ---------------------------------------------------------------------------
# records and grouping


@dataclass(frozen=True)
class NonlinRecord:
    att1_db: float
    att2_db: float
    range_dbm: int
    reading_w: float
    wavelength_nm: float
    zero_w: float = 0.0

    def __post_init__(self):
        check_range(self.range_dbm)
        if self.att2_db not in ATT2_STATES:
            raise DataError(f"att2 setting must be 0 or 3 dB, got {self.att2_db!r}")
        if not self.net_w > 0:
            raise DataError(f"non-positive zero-corrected reading {self.net_w!r} W")

    @property
    def net_w(self) -> float:
        return self.reading_w - self.zero_w


@dataclass
class _Group:
    readings: list = field(default_factory=list)

    @property
    def mean(self):
        return float(np.mean(self.readings))

    @property
    def sem(self):
        n = len(self.readings)
        if n < 2:
            return math.nan
        return float(np.std(self.readings, ddof=1) / math.sqrt(n))


def _group(records: Iterable[NonlinRecord]):
    groups: dict = defaultdict(lambda: defaultdict(_Group))
    wavelengths = set()
    for rec in records:
        groups[rec.range_dbm][(rec.att1_db, rec.att2_db)].readings.append(rec.net_w)
        wavelengths.add(rec.wavelength_nm)
    if len(wavelengths) > 1:
        raise DataError(f"records mix wavelengths {sorted(wavelengths)}")
    if not groups:
        raise InsufficientDataError("no nonlinearity records")
    return groups, wavelengths.pop()


@dataclass
class _RangeData:
    """Paired means for one range, in full-scale units."""

    range_dbm: int
    u: np.ndarray          # att2 = 0 dB
    u_tau: np.ndarray      # att2 = 3 dB
    se: np.ndarray
    se_tau: np.ndarray
    att1: np.ndarray

    @property
    def n(self):
        return self.u.size


def _paired(range_dbm, groups) -> _RangeData:
    fs = full_scale_w(range_dbm)
    att1s = sorted({a for (a, _) in groups})
    rows = []
    for a in att1s:
        g0, g3 = groups.get((a, 0.0)), groups.get((a, 3.0))
        if g0 is None or g3 is None:
            raise InsufficientDataError(
                f"range {range_dbm} dBm, att1 {a} dB: both att2 states are required")
        rows.append((a, g0.mean / fs, g3.mean / fs, g0.sem / fs, g3.sem / fs))
    arr = np.array(rows, dtype=float)
    se, se_tau = arr[:, 3], arr[:, 4]
    # Settings with a single read (or identical reads) borrow the range's typical
    # relative standard error.
    rel = np.concatenate([se / arr[:, 1], se_tau / arr[:, 2]])
    rel = rel[np.isfinite(rel) & (rel > 0)]
    fallback = float(np.median(rel)) if rel.size else 1e-4
    se = np.where(np.isfinite(se) & (se > 0), se, fallback * arr[:, 1])
    se_tau = np.where(np.isfinite(se_tau) & (se_tau > 0), se_tau, fallback * arr[:, 2])
    return _RangeData(range_dbm, arr[:, 1], arr[:, 2], se, se_tau, arr[:, 0])


# ---------------------------------------------------------------------------
# polynomial helpers (full-scale units)


def _poly(u, c):
    """p(u) = u + sum c[k-2] u**k."""
    out = np.array(u, dtype=float, copy=True)
    for k, ck in enumerate(c, start=2):
        out = out + ck * np.asarray(u, dtype=float) ** k
    return out


def _dpoly(u, c):
    out = np.ones_like(np.asarray(u, dtype=float))
    for k, ck in enumerate(c, start=2):
        out = out + k * ck * np.asarray(u, dtype=float) ** (k - 1)
    return out


class _Layout:
    """Parameter vector layout: [tau, c_2^(r1)..c_N^(r1), c_2^(r2) ...]."""

    def __init__(self, orders: dict[int, int]):
        self.orders = dict(orders)
        self.slices = {}
        i = 1
        for r in sorted(self.orders, reverse=True):
            n = self.orders[r] - 1
            self.slices[r] = slice(i, i + n)
            i += n
        self.size = i

    def names(self):
        out = ["tau"]
        for r in sorted(self.orders, reverse=True):
            out += [f"b{k}@{r}" for k in range(2, self.orders[r] + 1)]
        return out


def _weights(d: _RangeData, tau0: float):
    return np.sqrt(d.se_tau ** 2 + (tau0 * d.se) ** 2)


def _residuals(theta, layout, data, weights):
    tau = theta[0]
    res = []
    for r, d in data.items():
        c = theta[layout.slices[r]]
        res.append((_poly(d.u_tau, c) - tau * _poly(d.u, c)) / weights[r])
    return np.concatenate(res)


def _jacobian(theta, layout, data, weights):
    tau = theta[0]
    n_rows = sum(d.n for d in data.values())
    J = np.zeros((n_rows, layout.size))
    row = 0
    for r, d in data.items():
        c = theta[layout.slices[r]]
        w = weights[r]
        sl = slice(row, row + d.n)
        J[sl, 0] = -_poly(d.u, c) / w
        for j, k in enumerate(range(2, layout.orders[r] + 1)):
            J[sl, layout.slices[r].start + j] = (d.u_tau ** k - tau * d.u ** k) / w
        row += d.n
    return J


@dataclass
class _FitResult:
    theta: np.ndarray
    cov: np.ndarray
    chisq: float
    dof: int
    nfev: int

    @property
    def redchi(self):
        return self.chisq / self.dof if self.dof > 0 else math.inf


def _solve(data: dict[int, _RangeData], orders: dict[int, int], max_nfev=200) -> _FitResult:
    layout = _Layout(orders)
    tau0 = float(np.median(np.concatenate([d.u_tau / d.u for d in data.values()])))
    weights = {r: _weights(d, tau0) for r, d in data.items()}
    theta0 = np.zeros(layout.size)
    theta0[0] = tau0
    sol = least_squares(_residuals, theta0, jac=_jacobian, args=(layout, data, weights),
                        method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise FitFailure("nonlinearity fit did not converge",
                         {"status": int(sol.status), "message": sol.message,
                          "nfev": int(sol.nfev), "orders": dict(orders)})
    n_res = sol.fun.size
    dof = n_res - layout.size
    chisq = float(sol.fun @ sol.fun)
    J = sol.jac
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise FitFailure("singular normal matrix", {"orders": dict(orders)}) from exc
    # Scale by reduced chi-square, as common NLLS front ends do by default.
    if dof > 0:
        cov = cov * (chisq / dof)
    return _FitResult(sol.x, cov, chisq, dof, int(sol.nfev))


def _max_order(d: _RangeData) -> int:
    distinct = np.unique(d.att1).size
    return max(1, min(MAX_ORDER, distinct - 2))


def select_orders(data: dict[int, _RangeData], max_order: int = MAX_ORDER) -> dict[int, dict[int, float]]:
    """Reduced chi-square of single-range fits for each candidate order."""
    table = {}
    for r, d in data.items():
        table[r] = {}
        for n in range(1, min(max_order, _max_order(d)) + 1):
            if d.n - n <= 0:
                break
            try:
                fit = _solve({r: d}, {r: n})
            except FitFailure:
                continue
            table[r][n] = fit.redchi
    return table


SELECTION_RULES = ("redchi", "ftest")


def pick_order(table: dict[int, float], n_points: int, rule: str = "redchi", alpha: float = 0.01) -> int:
    """Choose a polynomial order from a reduced chi-square table.

    ``"redchi"`` takes the minimum.  ``"ftest"`` starts at order 1 and moves
    up only while the extra coefficient lowers chi-square significantly
    (nested-model F-test at level ``alpha``).
    """
    if not table:
        raise FitFailure("no candidate order converged")
    if rule == "redchi":
        return min(table, key=table.get)
    if rule != "ftest":
        raise ValueError(f"unknown selection rule {rule!r}; use one of {SELECTION_RULES}")
    orders = sorted(table)
    n = orders[0]
    for m in orders[1:]:
        if m != n + 1:
            break
        nu_n, nu_m = n_points - n, n_points - m
        chi_n, chi_m = table[n] * nu_n, table[m] * nu_m
        if nu_m <= 0 or chi_m <= 0:
            break
        F = (chi_n - chi_m) / (chi_m / nu_m)
        if stats.f.sf(F, 1, nu_m) >= alpha:
            break
        n = m
    return n


# ---------------------------------------------------------------------------
# model


@dataclass
class RangeFactor:
    """Range-discontinuity factor between ``range_dbm`` and ``range_dbm + 10``."""

    value: float
    grad: np.ndarray        # d(value)/d(theta), for the fit-covariance part
    scatter_se: float       # standard error of the mean ratio from the repeated reads
    n_overlap: int


@dataclass
class NonlinModel:
    wavelength_nm: float
    orders: dict
    theta: np.ndarray
    cov: np.ndarray
    span: dict                      # range -> (min W, max W) of fitted readings
    redchi: float
    order_table: dict = field(default_factory=dict)
    rf: dict = field(default_factory=dict)
    source_digest: str | None = None
    _uparams: list | None = field(default=None, repr=False, compare=False)
    _urf: dict = field(default_factory=dict, repr=False, compare=False)

    # -- parameters ------------------------------------------------------
    @property
    def layout(self) -> _Layout:
        return _Layout(self.orders)

    @property
    def ranges(self):
        return sorted(self.orders, reverse=True)

    @property
    def tau(self) -> float:
        return float(self.theta[0])

    @property
    def tau_sigma(self) -> float:
        return float(math.sqrt(self.cov[0, 0]))

    def normalized_coeffs(self, r) -> np.ndarray:
        return np.asarray(self.theta[self.layout.slices[check_range(r)]])

    def coeffs(self, r) -> dict[int, float]:
        """Polynomial coefficients ``b_k`` in watts**(1-k)."""
        fs = full_scale_w(r)
        return {k: float(c) / fs ** (k - 1)
                for k, c in enumerate(self.normalized_coeffs(r), start=2)}

    def coeff_sigmas(self, r) -> dict[int, float]:
        fs = full_scale_w(r)
        sl = self.layout.slices[check_range(r)]
        sig = np.sqrt(np.diag(self.cov))[sl]
        return {k: float(s) / fs ** (k - 1) for k, s in enumerate(sig, start=2)}

    def uncertain_params(self) -> list[UncertainValue]:
        """Fit parameters as correlated uncertain values (created once per model)."""
        if self._uparams is None:
            self._uparams = unc.correlated(self.theta, self.cov, label="CF_NL:fit")
        return self._uparams

    # -- evaluation -------------------------------------------------------
    def _require(self, r):
        r = check_range(r)
        if r not in self.orders:
            raise DataError(f"model has no fit for range {r} dBm")
        return r

    def check_domain(self, r, v) -> None:
        lo, hi = self.span[r]
        x = unc.value_of(v)
        if x > 2.0 * hi or x < 0.5 * lo:
            raise OutOfDomainError(
                f"reading {x:.4g} W is beyond twice the fitted span "
                f"[{lo:.4g}, {hi:.4g}] W of range {r} dBm")
        if x > hi or x < lo:
            warnings.warn(f"extrapolating range {r} dBm fit to {x:.4g} W", stacklevel=3)

    def poly(self, r, v, uncertain: bool = True):
        """Linearised power ``P_r(v)`` in watts."""
        r = self._require(r)
        fs = full_scale_w(r)
        if not uncertain:
            return fs * float(_poly(unc.value_of(v) / fs, self.normalized_coeffs(r)))
        u = v / fs
        params = self.uncertain_params()[self.layout.slices[r]]
        out = u
        for k, ck in enumerate(params, start=2):
            out = out + ck * u ** k
        if not isinstance(out, UncertainValue):
            out = UncertainValue(out)
        return out * fs

    def range_factor(self, r) -> UncertainValue:
        r = self._require(r)
        if r == -10:
            return UncertainValue(1.0)
        if r not in self.rf:
            raise DataError(f"range factor for {r} dBm not available; run range_discontinuity")
        if r not in self._urf:
            f = self.rf[r]
            params = self.uncertain_params()
            out = UncertainValue(f.value)
            for g, p in zip(f.grad, params):
                if g != 0.0:
                    out = out + g * (p - p.value)
            out = out + unc.lift(0.0, f.scatter_se, label="CF_NL:range")
            self._urf[r] = out
        return self._urf[r]

    def range_chain(self, r) -> UncertainValue:
        """Product of range factors from ``r`` up to -20 dBm."""
        r = self._require(r)
        out = UncertainValue(1.0)
        rr = r
        while rr < -10:
            out = out * self.range_factor(rr)
            rr += 10
        return out

    def linearize(self, r, v, check: bool = True) -> UncertainValue:
        """Corrected power ``v / CF_NL(r, v)``; ``v`` may itself be uncertain."""
        r = self._require(r)
        if check:
            self.check_domain(r, v)
        return self.poly(r, v) / self.range_chain(r)

    def correction(self, r, v, check: bool = True) -> UncertainValue:
        """``CF_NL(r, v) = v / P_r(v) * prod RF``; divide readings by it."""
        v = unc.value_of(v)
        return v / self.linearize(r, v, check=check)

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": "NonlinModel",
            "wavelength_nm": self.wavelength_nm,
            "coefficient_units": "full-scale: P_r(V)/FS_r = u + sum_k c_k u**k, u = V/FS_r, FS_r = 10**(r/10) mW",
            "orders": {str(r): n for r, n in self.orders.items()},
            "param_names": self.layout.names(),
            "theta": [float(x) for x in self.theta],
            "covariance": [[float(x) for x in row] for row in self.cov],
            "tau": {"value": self.tau, "sigma": self.tau_sigma},
            "coefficients_w": {str(r): {str(k): v for k, v in self.coeffs(r).items()} for r in self.ranges},
            "span_w": {str(r): list(map(float, s)) for r, s in self.span.items()},
            "redchi": self.redchi,
            "order_selection": {str(r): {str(n): float(x) for n, x in t.items()}
                                for r, t in self.order_table.items()},
            "range_factors": {str(r): {"value": f.value, "grad": [float(g) for g in f.grad],
                                       "scatter_se": f.scatter_se, "n_overlap": f.n_overlap,
                                       "sigma": self.range_factor(r).sigma}
                              for r, f in self.rf.items()},
            "source_digest": self.source_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NonlinModel":
        if d.get("kind") != "NonlinModel":
            raise DataError("document is not a NonlinModel")
        rf = {int(r): RangeFactor(float(f["value"]), np.asarray(f["grad"], float),
                                  float(f["scatter_se"]), int(f["n_overlap"]))
              for r, f in d.get("range_factors", {}).items()}
        return cls(
            wavelength_nm=float(d["wavelength_nm"]),
            orders={int(r): int(n) for r, n in d["orders"].items()},
            theta=np.asarray(d["theta"], float),
            cov=np.asarray(d["covariance"], float),
            span={int(r): tuple(s) for r, s in d["span_w"].items()},
            redchi=float(d["redchi"]),
            order_table={int(r): {int(n): x for n, x in t.items()}
                         for r, t in d.get("order_selection", {}).items()},
            rf=rf,
            source_digest=d.get("source_digest"),
        )


# ---------------------------------------------------------------------------
# public operations


def fit_nonlinearity(records: Iterable[NonlinRecord], orders: dict[int, int] | None = None,
                     max_order: int = MAX_ORDER, selection: str = "redchi") -> NonlinModel:
    """Joint fit of per-range polynomials and the shared 3 dB step ``tau``.

    Orders are chosen per range by minimising the reduced chi-square of a
    single-range fit over ``1..max_order`` unless given explicitly.  The
    residual ``P_r(V_tau) - tau P_r(V)`` is weighted by the standard error of
    the repeated reads at each setting.
    """
    records = list(records)
    groups, wavelength = _group(records)
    data = {}
    for r in sorted(groups, reverse=True):
        d = _paired(r, groups[r])
        if np.unique(d.att1).size < 2:
            raise InsufficientDataError(f"range {r} dBm has fewer than 2 distinct att1 settings")
        data[r] = d

    table = {}
    if orders is None:
        table = select_orders(data, max_order)
        orders = {}
        for r, t in table.items():
            if not t:
                raise FitFailure(f"no candidate order converged for range {r} dBm")
            orders[r] = pick_order(t, data[r].n, selection)
    else:
        orders = {check_range(r): int(n) for r, n in orders.items()}
        for r, n in orders.items():
            if n + 1 > np.unique(data[r].att1).size:
                raise InsufficientDataError(
                    f"order {n} at range {r} dBm needs at least {n + 1} distinct settings")

    fit = _solve(data, orders)
    tau = float(fit.theta[0])
    if not TAU_BOUNDS[0] < tau < TAU_BOUNDS[1]:
        raise FitFailure(f"fitted tau {tau:.4f} outside sanity bounds {TAU_BOUNDS}",
                         {"tau": tau, "orders": orders})
    span = {}
    for r in data:
        vals = [x for g in groups[r].values() for x in g.readings]
        span[r] = (float(min(vals)), float(max(vals)))
    return NonlinModel(wavelength, orders, fit.theta, fit.cov, span, fit.redchi, table)


def range_discontinuity(model: NonlinModel, records: Iterable[NonlinRecord],
                        weighted: bool = False) -> NonlinModel:
    """Populate the range-discontinuity factors of ``model``.

    ``RF(r)`` is the mean, over att1/att2 settings recorded at both ``r`` and
    ``r + 10``, of ``P_r(V_r) / P_{r+10}(V_{r+10})``.  Its uncertainty combines
    the standard error of that mean with the fit covariance.  ``RF(-10) = 1``.
    """
    groups, _ = _group(records)
    layout = model.layout
    rf = {}
    for r in model.ranges:
        if r == -10 or (r + 10) not in model.orders:
            continue
        lo, hi = groups.get(r, {}), groups.get(r + 10, {})
        common = sorted(set(lo) & set(hi))
        if not common:
            raise MissingOverlapError(f"no overlapping settings between {r} and {r + 10} dBm")
        fs_lo, fs_hi = full_scale_w(r), full_scale_w(r + 10)
        c_lo, c_hi = model.normalized_coeffs(r), model.normalized_coeffs(r + 10)
        ratios, grads, var = [], [], []
        for key in common:
            u_lo, u_hi = lo[key].mean / fs_lo, hi[key].mean / fs_hi
            a = fs_lo * float(_poly(u_lo, c_lo))
            b = fs_hi * float(_poly(u_hi, c_hi))
            g = np.zeros(layout.size)
            for j, k in enumerate(range(2, model.orders[r] + 1)):
                g[layout.slices[r].start + j] = fs_lo * u_lo ** k / b
            for j, k in enumerate(range(2, model.orders[r + 10] + 1)):
                g[layout.slices[r + 10].start + j] = -a * fs_hi * u_hi ** k / b ** 2
            ratios.append(a / b)
            grads.append(g)
            s_lo = lo[key].sem / lo[key].mean if len(lo[key].readings) > 1 else 0.0
            s_hi = hi[key].sem / hi[key].mean if len(hi[key].readings) > 1 else 0.0
            var.append((a / b) ** 2 * (s_lo ** 2 + s_hi ** 2))
        ratios = np.array(ratios)
        grads = np.array(grads)
        n = ratios.size
        if weighted and all(v > 0 for v in var):
            w = 1.0 / np.asarray(var)
            w = w / w.sum()
        else:
            w = np.full(n, 1.0 / n)
        value = float(w @ ratios)
        grad = w @ grads
        # Standard error from the repeated reads behind each ratio (about 9 n
        # degrees of freedom); the scatter of the n ratios alone has n - 1 and
        # would understate the tails.  It stays as a fallback for single reads.
        var = np.asarray(var)
        if np.all(var > 0):
            scatter = float(math.sqrt(np.sum(w ** 2 * var)))
        elif n > 1:
            scatter = float(math.sqrt(np.sum(w ** 2 * (ratios - value) ** 2) * n / (n - 1)))
        else:
            scatter = 0.0
        rf[r] = RangeFactor(value, grad, scatter, n)
    model.rf = rf
    model._urf = {}
    return model


def calibrate_nonlinearity(records: Iterable[NonlinRecord], **kwargs) -> NonlinModel:
    """:func:`fit_nonlinearity` followed by :func:`range_discontinuity`."""
    records = list(records)
    weighted = kwargs.pop("weighted", False)
    model = fit_nonlinearity(records, **kwargs)
    return range_discontinuity(model, records, weighted=weighted)


def nonlin_correction(model: NonlinModel, r: int, v: float) -> UncertainValue:
    return model.correction(r, v)


def load_nonlin_records(path) -> list[NonlinRecord]:
    """Read a nonlinearity sweep file (one row per reading)."""
    from . import io as sio

    rows = sio.read_csv(path, required=("wavelength_nm", "range_dbm", "att1_db", "att2_db", "reading_w"),
                        numeric=("wavelength_nm", "range_dbm", "att1_db", "att2_db", "reading_w", "zero_w"))
    out = []
    for row in rows:
        try:
            out.append(NonlinRecord(row["att1_db"], row["att2_db"], int(row["range_dbm"]),
                                    row["reading_w"], row["wavelength_nm"], row.get("zero_w", 0.0)))
        except (DataError, ValueError) as exc:
            raise DataError(str(exc), path=path, line=row["_line"]) from None
    if not out:
        raise DataError("no readings", path=path)
    return out
