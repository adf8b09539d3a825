"""Polarization sensitivity from a waveplate-angle grid.

Count rates at every grid point are dark-subtracted and divided by the
classical-level transmission of the polarization optics at the same angles
(CPM over MPM reading, normalised to the grid maximum).  Dark counts recorded
at each grid point (``dark_N`` columns) are used where present, otherwise a
session-wide dark rate.  PS is the ratio of
the largest to the smallest corrected rate on the raw grid, with no
interpolation or smoothing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import io as sio
from . import uncertainty as unc
from .errors import DataError, DegenerateGridError, IncompleteGridError
from .sde import CountRecord, count_rate, load_counts
from .uncertainty import UncertainValue

GRID_SHAPE = (21, 21)


@dataclass(frozen=True)
class PolGridRecord:
    qwp_deg: float
    hwp_deg: float
    counts: tuple
    cpm_w: float
    mpm_w: float
    gate_s: float = 1.0
    dark_counts: tuple = ()

    def __post_init__(self):
        if not self.counts:
            raise DataError(f"grid point ({self.qwp_deg}, {self.hwp_deg}) has no counts")
        if any(c < 0 for c in self.counts) or any(c < 0 for c in self.dark_counts):
            raise DataError("counts must be non-negative")
        if not (self.cpm_w > 0 and self.mpm_w > 0):
            raise DataError(f"grid point ({self.qwp_deg}, {self.hwp_deg}): transmission readings must be positive")

    def rate(self) -> UncertainValue:
        return count_rate([CountRecord("maxpol", 0.0, i, int(c), self.gate_s)
                           for i, c in enumerate(self.counts)], label="counts:grid")

    def dark_rate(self) -> UncertainValue | None:
        if not self.dark_counts:
            return None
        return count_rate([CountRecord("dark", 0.0, i, int(c), self.gate_s)
                           for i, c in enumerate(self.dark_counts)], label="counts:dark")


@dataclass
class CorrectedPoint:
    qwp_deg: float
    hwp_deg: float
    transmission: float
    raw_rate: UncertainValue
    rate: UncertainValue


def load_polscan(path) -> list[PolGridRecord]:
    rows = sio.read_csv(path, required=("qwp_deg", "hwp_deg", "cpm_w", "mpm_w"))
    if not rows:
        raise DataError("empty grid", path=path)
    def numbered(prefix):
        return sorted((c for c in rows[0] if c.startswith(prefix) and c[len(prefix):].isdigit()),
                      key=lambda c: int(c[len(prefix):]))

    count_cols, dark_cols = numbered("counts_"), numbered("dark_")
    if not count_cols:
        raise DataError("grid file has no counts_N columns", path=path)
    out = []
    for row in rows:
        try:
            counts = tuple(int(row[c]) for c in count_cols)
            darks = tuple(int(row[c]) for c in dark_cols)
            out.append(PolGridRecord(float(row["qwp_deg"]), float(row["hwp_deg"]), counts,
                                     float(row["cpm_w"]), float(row["mpm_w"]), dark_counts=darks))
        except (ValueError, DataError) as exc:
            raise DataError(str(exc), path=path, line=row["_line"]) from None
    return out


def dark_rate_from_file(path) -> UncertainValue:
    recs = load_counts(path)
    return count_rate(recs, label="counts:dark")


def check_complete(grid: Sequence[PolGridRecord], shape: tuple | None = GRID_SHAPE):
    qs = sorted({g.qwp_deg for g in grid})
    hs = sorted({g.hwp_deg for g in grid})
    have = {(g.qwp_deg, g.hwp_deg) for g in grid}
    if len(have) != len(grid):
        raise IncompleteGridError("grid has duplicate points")
    missing = [(q, h) for q in qs for h in hs if (q, h) not in have]
    if missing:
        show = ", ".join(f"({q:g}, {h:g})" for q, h in missing[:5])
        raise IncompleteGridError(f"{len(missing)} grid points missing: {show}")
    if shape is not None and (len(qs), len(hs)) != tuple(shape):
        raise IncompleteGridError(f"grid is {len(qs)}x{len(hs)}, expected {shape[0]}x{shape[1]}")


def transmission_correct(grid: Sequence[PolGridRecord], dark_rate=0.0,
                         shape: tuple | None = GRID_SHAPE) -> list[CorrectedPoint]:
    """Dark-subtract and divide by the normalised transmission at each point.

    Points carrying their own dark counts use them; ``dark_rate`` covers the rest.
    """
    check_complete(grid, shape)
    t = np.array([g.cpm_w / g.mpm_w for g in grid])
    t = t / t.max()
    out = []
    for g, tg in zip(grid, t):
        own = g.dark_rate()
        raw = g.rate() - (own if own is not None else dark_rate)
        out.append(CorrectedPoint(g.qwp_deg, g.hwp_deg, float(tg), raw, raw / float(tg)))
    return out


def polarization_sensitivity(points: Sequence) -> UncertainValue:
    """``max / min`` over the grid; accepts corrected points or plain values."""
    vals = [p.rate if isinstance(p, CorrectedPoint) else p for p in points]
    if not vals:
        raise DegenerateGridError("empty grid")
    v = np.array([unc.value_of(x) for x in vals])
    lo, hi = int(np.argmin(v)), int(np.argmax(v))
    if not v[lo] > 0:
        raise DegenerateGridError(f"non-positive minimum corrected rate {v[lo]!r}")
    ps = vals[hi] / vals[lo]
    return ps if isinstance(ps, UncertainValue) else UncertainValue(ps)
