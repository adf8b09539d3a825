"""First-order uncertainty propagation with correlation tracking.

An :class:`UncertainValue` carries a value and its linear sensitivities to a
set of independent, unit-variance base variables.  Each base variable is
created by :func:`lift` (or :func:`correlated` for fit parameters, which are
expressed through the Cholesky factor of their covariance), so storing the
sensitivity already multiplied by the base sigma makes the standard
uncertainty the plain quadrature sum of the stored coefficients.

Because sensitivities are keyed by base variable, terms that share a base
variable combine before squaring; ``x - x`` is exactly ``0 +/- 0``.

Base variables carry a free-form label (``"CF_CPM"``, ``"counts"`` ...) so that
a result can be broken down into an error budget with :meth:`UncertainValue.budget`.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "UncertainValue",
    "lift",
    "constant",
    "correlated",
    "from_samples",
    "umean",
    "log",
    "exp",
    "sqrt",
    "value_of",
    "sigma_of",
    "covariance",
    "correlation",
]

# itertools.count.__next__ is atomic under the GIL, so id allocation is race-free.
_next_id = itertools.count(1).__next__

Key = tuple  # (int id, str label)


def _merge(a: Mapping, ca: float, b: Mapping, cb: float) -> dict:
    out = {k: ca * v for k, v in a.items()} if ca != 1.0 else dict(a)
    for k, v in b.items():
        if k in out:
            out[k] += cb * v
        else:
            out[k] = cb * v
    return out


def _scale(a: Mapping, c: float) -> dict:
    return {k: c * v for k, v in a.items()}


class UncertainValue:
    """Immutable scalar with first-order uncertainty.

    Parameters
    ----------
    value : float
        Best estimate.
    sensitivities : mapping, optional
        ``{(id, label): coefficient}`` where the coefficient is the partial
        derivative with respect to a unit-variance base variable.
    """

    __slots__ = ("_value", "_sens", "_sigma")

    def __init__(self, value, sensitivities=None):
        self._value = float(value)
        self._sens = dict(sensitivities) if sensitivities else {}
        self._sigma = None

    # -- accessors ------------------------------------------------------
    @property
    def value(self) -> float:
        return self._value

    @property
    def sensitivities(self) -> dict:
        return dict(self._sens)

    @property
    def sigma(self) -> float:
        if self._sigma is None:
            if not self._sens:
                s = 0.0
            else:
                s = math.sqrt(math.fsum(c * c for c in self._sens.values()))
            self._sigma = s
        return self._sigma

    @property
    def relative_sigma(self) -> float:
        if self._value == 0.0:
            return math.inf if self.sigma > 0 else 0.0
        return self.sigma / abs(self._value)

    def budget(self, relative: bool = True) -> dict[str, float]:
        """Quadrature contribution of each base-variable label.

        Contributions under the same label are summed (linearly) before
        squaring, so correlated pieces of one source cancel or reinforce
        as they do in the total.
        """
        grouped: dict[str, float] = defaultdict(float)
        for (_, label), c in self._sens.items():
            grouped[label] += c * c
        scale = abs(self._value) if (relative and self._value != 0.0) else 1.0
        return {k: math.sqrt(v) / scale for k, v in sorted(grouped.items())}

    def __repr__(self):
        return f"UncertainValue({self._value!r}, sigma={self.sigma!r})"

    def __str__(self):
        return f"{self._value:.6g} +/- {self.sigma:.2g}"

    def __float__(self):
        return self._value

    # -- arithmetic -----------------------------------------------------
    def __neg__(self):
        return UncertainValue(-self._value, _scale(self._sens, -1.0))

    def __pos__(self):
        return self

    def __abs__(self):
        return -self if self._value < 0 else self

    def __add__(self, other):
        if isinstance(other, UncertainValue):
            return UncertainValue(self._value + other._value,
                                  _merge(self._sens, 1.0, other._sens, 1.0))
        if _is_real(other):
            return UncertainValue(self._value + other, self._sens)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, UncertainValue):
            return UncertainValue(self._value - other._value,
                                  _merge(self._sens, 1.0, other._sens, -1.0))
        if _is_real(other):
            return UncertainValue(self._value - other, self._sens)
        return NotImplemented

    def __rsub__(self, other):
        if _is_real(other):
            return UncertainValue(other - self._value, _scale(self._sens, -1.0))
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, UncertainValue):
            return UncertainValue(self._value * other._value,
                                  _merge(self._sens, other._value, other._sens, self._value))
        if _is_real(other):
            return UncertainValue(self._value * other, _scale(self._sens, float(other)))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, UncertainValue):
            d = other._value
            if d == 0.0:
                raise DomainError("/", "division by an uncertain value equal to zero")
            q = self._value / d
            return UncertainValue(q, _merge(self._sens, 1.0 / d, other._sens, -q / d))
        if _is_real(other):
            if other == 0:
                raise DomainError("/", "division by zero")
            return UncertainValue(self._value / other, _scale(self._sens, 1.0 / other))
        return NotImplemented

    def __rtruediv__(self, other):
        if _is_real(other):
            d = self._value
            if d == 0.0:
                raise DomainError("/", "division by an uncertain value equal to zero")
            q = other / d
            return UncertainValue(q, _scale(self._sens, -q / d))
        return NotImplemented

    def __pow__(self, other):
        x = self._value
        if isinstance(other, UncertainValue):
            if x <= 0.0:
                raise DomainError("pow", f"uncertain exponent needs a positive base, got {x!r}")
            v = x ** other._value
            return UncertainValue(v, _merge(self._sens, other._value * x ** (other._value - 1.0),
                                            other._sens, v * math.log(x)))
        if _is_real(other):
            p = float(other)
            if x == 0.0 and p < 1.0:
                raise DomainError("pow", f"derivative of 0**{p!r} is undefined")
            if x < 0.0 and not float(p).is_integer():
                raise DomainError("pow", f"negative base {x!r} with non-integer exponent")
            v = x ** p
            d = p * x ** (p - 1.0) if p != 0.0 else 0.0
            return UncertainValue(v, _scale(self._sens, d))
        return NotImplemented

    def __rpow__(self, other):
        if _is_real(other):
            if other <= 0:
                raise DomainError("pow", f"uncertain exponent needs a positive base, got {other!r}")
            v = other ** self._value
            return UncertainValue(v, _scale(self._sens, v * math.log(other)))
        return NotImplemented

    # Ordering uses the best estimate only; equality is deliberately identity-based.
    def __lt__(self, other):
        return self._value < value_of(other)

    def __le__(self, other):
        return self._value <= value_of(other)

    def __gt__(self, other):
        return self._value > value_of(other)

    def __ge__(self, other):
        return self._value >= value_of(other)

    __hash__ = object.__hash__


def _is_real(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool)


def value_of(x) -> float:
    return x.value if isinstance(x, UncertainValue) else float(x)


def sigma_of(x) -> float:
    return x.sigma if isinstance(x, UncertainValue) else 0.0


def lift(value: float, sigma: float, label: str = "input") -> UncertainValue:
    """Make a new independent uncertain input.

    >>> lift(1.0, 0.0).sigma
    0.0
    """
    sigma = float(sigma)
    if not sigma >= 0.0:
        raise ValueError(f"sigma must be non-negative, got {sigma!r}")
    if sigma == 0.0:
        return UncertainValue(value)
    return UncertainValue(value, {(_next_id(), label): sigma})


def constant(value: float) -> UncertainValue:
    return UncertainValue(value)


def correlated(values: Sequence[float], cov, label: str = "fit") -> list[UncertainValue]:
    """Uncertain values sharing a covariance matrix.

    Each value is written as ``mean + L z`` with ``L`` a Cholesky factor of
    ``cov`` and ``z`` fresh unit-variance base variables, so correlations
    survive through later arithmetic.  Positive semi-definite matrices fall
    back to a symmetric eigen-factorisation.
    """
    values = np.asarray(values, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = values.size
    if cov.shape != (n, n):
        raise ValueError(f"covariance shape {cov.shape} does not match {n} values")
    if n == 0:
        return []
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (cov + cov.T))
        if np.any(w < -1e-12 * max(1.0, np.max(np.abs(w)))):
            raise ValueError("covariance matrix is not positive semi-definite")
        L = V * np.sqrt(np.clip(w, 0.0, None))
    keys = [(_next_id(), label) for _ in range(L.shape[1])]
    out = []
    for i in range(n):
        sens = {keys[j]: float(L[i, j]) for j in range(L.shape[1]) if L[i, j] != 0.0}
        out.append(UncertainValue(values[i], sens))
    return out


def from_samples(samples: Iterable[float], label: str = "samples") -> UncertainValue:
    """Mean of repeated readings with its standard error as uncertainty."""
    a = np.asarray(list(samples), dtype=float)
    if a.size == 0:
        raise ValueError("no samples")
    sem = float(np.std(a, ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
    return lift(float(np.mean(a)), sem, label)


def umean(values: Sequence) -> UncertainValue:
    """Arithmetic mean that keeps sensitivities (no added scatter term)."""
    if len(values) == 0:
        raise ValueError("mean of empty sequence")
    total = values[0]
    for v in values[1:]:
        total = total + v
    if not isinstance(total, UncertainValue):
        total = UncertainValue(total)
    return total / len(values)


def log(x):
    if isinstance(x, UncertainValue):
        if x.value <= 0.0:
            raise DomainError("log", f"argument must be positive, got {x.value!r}")
        return UncertainValue(math.log(x.value), _scale(x._sens, 1.0 / x.value))
    if x <= 0:
        raise DomainError("log", f"argument must be positive, got {x!r}")
    return math.log(x)


def exp(x):
    if isinstance(x, UncertainValue):
        v = math.exp(x.value)
        return UncertainValue(v, _scale(x._sens, v))
    return math.exp(x)


def sqrt(x):
    if isinstance(x, UncertainValue):
        if x.value <= 0.0:
            if x.value == 0.0 and x.sigma == 0.0:
                return UncertainValue(0.0)
            raise DomainError("sqrt", f"argument must be positive, got {x.value!r}")
        return x ** 0.5
    return math.sqrt(x)


def covariance(a, b) -> float:
    if not (isinstance(a, UncertainValue) and isinstance(b, UncertainValue)):
        return 0.0
    small, large = (a._sens, b._sens) if len(a._sens) <= len(b._sens) else (b._sens, a._sens)
    return math.fsum(c * large[k] for k, c in small.items() if k in large)


def correlation(a, b) -> float:
    sa, sb = sigma_of(a), sigma_of(b)
    if sa == 0.0 or sb == 0.0:
        return 0.0
    return covariance(a, b) / (sa * sb)
