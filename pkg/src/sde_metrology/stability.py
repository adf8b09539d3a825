"""Source stability from a uniformly sampled power log."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import io as sio
from . import kernels
from .errors import DataError, InvalidTauError

# relative jitter tolerated in the sampling interval of a recorded log
SAMPLING_JITTER = 0.05


@dataclass
class StabilitySeries:
    readings: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.readings = np.asarray(self.readings, dtype=float)
        if self.readings.ndim != 1 or self.readings.size < 2:
            raise DataError("a stability series needs at least two readings")
        if not np.all(np.isfinite(self.readings)):
            raise DataError("stability series contains non-finite readings")
        if not self.sample_rate_hz > 0:
            raise DataError("sample rate must be positive")
        if self.readings.mean() == 0:
            raise DataError("stability series has zero mean power")

    @property
    def span_s(self) -> float:
        return self.readings.size / self.sample_rate_hz

    @property
    def fractional(self) -> np.ndarray:
        return self.readings / self.readings.mean() - 1.0


def load_stability(path) -> StabilitySeries:
    rows = sio.read_csv(path, required=("timestamp_s", "power_w"), numeric=("timestamp_s", "power_w"))
    t = np.array([r["timestamp_s"] for r in rows])
    p = np.array([r["power_w"] for r in rows])
    if t.size < 2:
        raise DataError("need at least two samples", path=path)
    dt = np.diff(t)
    step = float(np.median(dt))
    if step <= 0:
        raise DataError("timestamps must increase", path=path)
    bad = np.flatnonzero(np.abs(dt - step) > SAMPLING_JITTER * step)
    if bad.size:
        raise DataError(f"non-uniform sampling (interval {dt[bad[0]]:.4g} s vs {step:.4g} s)",
                        path=path, line=rows[bad[0] + 1]["_line"])
    return StabilitySeries(p, 1.0 / step)


def allan_deviation(series: StabilitySeries, taus: Sequence[float]) -> list[tuple[float, float]]:
    """Overlapping Allan deviation of ``y = reading / mean - 1``.

    Each requested ``tau`` is rounded to a whole number ``m`` of samples and
    the returned pairs carry the realised ``m / rate``.  ``tau`` must satisfy
    ``2 / rate <= tau <= span / 3``.
    """
    rate = series.sample_rate_hz
    span = series.span_s
    y = series.fractional
    dt = 1.0 / rate
    # phase samples x_0 .. x_N
    x = np.concatenate([[0.0], np.cumsum(y) * dt])
    out = []
    for tau in taus:
        tau = float(tau)
        if not (math.isfinite(tau) and 2.0 / rate - 1e-12 <= tau <= span / 3.0 + 1e-12):
            raise InvalidTauError(
                f"tau {tau:g} s outside [{2.0 / rate:.4g}, {span / 3.0:.4g}] s for this series")
        m = max(2, int(round(tau * rate)))
        t = m * dt
        s, n = kernels.oavar_sum(x, m)
        if n <= 0:
            raise InvalidTauError(f"tau {tau:g} s leaves no overlapping differences")
        out.append((t, math.sqrt(s / (2.0 * t * t * n))))
    return out


def default_taus(series: StabilitySeries, per_decade: int = 5) -> list[float]:
    lo = 2.0 / series.sample_rate_hz
    hi = series.span_s / 3.0
    if hi < lo:
        return []
    n = max(1, int(math.floor(per_decade * math.log10(hi / lo))) + 1)
    taus = lo * 10.0 ** (np.arange(n) / per_decade)
    ms = sorted({int(round(t * series.sample_rate_hz)) for t in taus})
    return [m / series.sample_rate_hz for m in ms if m / series.sample_rate_hz <= hi]


def loglog_slope(points: Sequence[tuple[float, float]]) -> float:
    t = np.log10([p[0] for p in points])
    a = np.log10([p[1] for p in points])
    return float(np.polyfit(t, a, 1)[0])
