"""Tail-ratio curves ``P(W >= z) / P(Y >= z)`` and scaling-exponent fits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats

from .limit_laws import DriftFunction, LimitLaw

CW_CRITICAL = "cw-critical"
MD_NONCRITICAL = "md-noncritical"
MD_CRITICAL = "md-critical"
GENERIC = "generic-2.1"


def _power(n: int, e: Fraction) -> float:
    """``n ** e``; exact when ``n`` is a power of two and the result is representable."""
    n = int(n)
    if n > 0 and n & (n - 1) == 0:
        return 2.0 ** float((n.bit_length() - 1) * e)
    return float(n) ** float(e)


@dataclass(frozen=True)
class RangeSpec:
    """Admissible ``z``-range ``[0, n**exponent]`` and the polynomial error weight ``1 + z**error_power``."""

    theorem: str
    exponent: Fraction
    error_power: float
    rate: Fraction  # error decays like n**(-rate) at fixed z

    @classmethod
    def cw_critical(cls, k: int) -> "RangeSpec":
        return cls(CW_CRITICAL, Fraction(1, k * (2 * k + 2)), 2 * k + 2, Fraction(1, k))

    @classmethod
    def md_noncritical(cls) -> "RangeSpec":
        return cls(MD_NONCRITICAL, Fraction(1, 6), 3, Fraction(1, 2))

    @classmethod
    def md_critical(cls) -> "RangeSpec":
        return cls(MD_CRITICAL, Fraction(1, 20), 5, Fraction(1, 4))

    @classmethod
    def generic(cls, exponent, error_power: float = 0.0, rate=0) -> "RangeSpec":
        return cls(GENERIC, Fraction(exponent).limit_denominator(10**6), error_power,
                   Fraction(rate).limit_denominator(10**6))

    def z_max(self, n: int) -> float:
        return _power(n, self.exponent)

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "exponent": str(self.exponent),
                "error_power": self.error_power, "rate": str(self.rate)}


def snap_to_midpoints(z: np.ndarray, atoms: np.ndarray, z_max: float) -> np.ndarray:
    """Move each ``z`` to the midpoint of the lattice cell ``[w_i, w_{i+1})`` holding it.

    Midpoints that leave ``[0, z_max]`` are replaced by the neighbouring
    midpoint inside; duplicates are removed.
    """
    w = np.unique(np.asarray(atoms, dtype=float))
    if w.size < 2:
        return np.asarray(z, dtype=float)
    mids = 0.5 * (w[:-1] + w[1:])
    inside = mids[(mids >= 0) & (mids <= z_max)]
    if inside.size == 0:
        raise ValueError("no lattice midpoint lies inside [0, z_max]")
    i = np.searchsorted(w, z, side="right") - 1
    i = np.clip(i, 0, len(mids) - 1)
    out = mids[i]
    out = np.where(out > z_max, inside[-1], out)
    out = np.where(out < 0, inside[0], out)
    return np.unique(out)


@dataclass
class RatioCurve:
    n: int
    z_values: np.ndarray
    empirical_tail: np.ndarray
    limit_tail: np.ndarray
    z_max: float
    range_spec: RangeSpec | None = None

    @property
    def zero_mask(self) -> np.ndarray:
        return self.empirical_tail == 0.0

    @property
    def ratio(self) -> np.ndarray:
        return self.empirical_tail / self.limit_tail

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(self.ratio - 1.0)

    @property
    def max_abs_err(self) -> float:
        """Largest ``|ratio - 1|`` over points with a positive empirical tail."""
        keep = ~self.zero_mask
        return float(self.abs_err[keep].max()) if keep.any() else math.nan

    def normalized_max_err(self, power: float | None = None) -> float:
        """``max |ratio - 1| / (1 + z**power)``, the error measured in the theorem's own units."""
        if power is None:
            if self.range_spec is None:
                raise ValueError("no error power given")
            power = self.range_spec.error_power
        keep = ~self.zero_mask
        weighted = self.abs_err / (1.0 + self.z_values**power)
        return float(weighted[keep].max()) if keep.any() else math.nan

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["z", "empirical", "limit", "ratio", "abs_err"])
            for row in zip(self.z_values, self.empirical_tail, self.limit_tail,
                           self.ratio, self.abs_err):
                wr.writerow([repr(float(v)) for v in row])


def ratio_curve(empirical_tail: Callable[[float], float], law: LimitLaw, range_spec: RangeSpec,
                n: int, grid_size: int = 50, atoms=None) -> RatioCurve:
    """Tail ratio on a uniform grid over ``[0, z_max(n)]``.

    With ``atoms`` (the lattice of W-values) each grid point is moved to a
    cell midpoint so the step-function tail is never read on an atom.
    """
    if grid_size < 20:
        raise ValueError("grid_size must be >= 20")
    z_max = range_spec.z_max(n)
    if not z_max > 0:
        raise ValueError(f"z_max({n}) = {z_max} is not positive")
    z = np.linspace(0.0, z_max, grid_size)
    if atoms is not None:
        z = snap_to_midpoints(z, atoms, z_max)
    emp = np.array([float(empirical_tail(float(v))) for v in z])
    if np.any(np.diff(emp) > 1e-12 * np.maximum(emp[:-1], 1e-300)):
        raise ValueError("empirical tail is not nonincreasing in z")
    lim = np.asarray(law.tail(z), dtype=float)
    return RatioCurve(n=int(n), z_values=z, empirical_tail=emp, limit_tail=lim,
                      z_max=z_max, range_spec=range_spec)


@dataclass
class ScalingFit:
    points: list[tuple[int, float]]
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared,
                "points": [[int(n), float(e)] for n, e in self.points]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def fit_exponent(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Ordinary least squares of ``log err`` on ``log n``."""
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(not e > 0 for _, e in pts):
        raise ValueError("errors must be positive")
    x = np.log([n for n, _ in pts])
    y = np.log([e for _, e in pts])
    res = stats.linregress(x, y)
    return ScalingFit(points=[(int(n), e) for n, e in pts], slope=float(res.slope),
                      intercept=float(res.intercept), r_squared=float(res.rvalue**2))


def is_nonincreasing(values: Sequence[float], inversions: int = 1, tol: float = 0.10) -> bool:
    """Nonincreasing, allowing up to ``inversions`` rises of at most ``tol`` relative."""
    rises = 0
    for a, b in zip(values, values[1:]):
        if b > a:
            if b > a * (1 + tol):
                return False
            rises += 1
    return rises <= inversions


# ---------------------------------------------------------------------------
# range condition of the general moderate-deviation theorem


def range_sum(drift: DriftFunction, z: float, delta: float, delta1: float, delta2: float,
              tau1: float, tau2: float) -> float:
    g = float(drift(z))
    return delta * z * g**2 + delta1 * z * g ** (tau1 + 1) + delta2 * z * g**tau2


def theorem2_range_check(drift: DriftFunction, z: float, delta: float, delta1: float,
                         delta2: float, tau1: float, tau2: float) -> tuple[bool, float]:
    """Whether ``delta z g^2 + delta1 z g^(tau1+1) + delta2 z g^tau2 <= 1``, and ``1 - sum``."""
    if z < 0:
        raise ValueError("z must be >= 0")
    total = range_sum(drift, z, delta, delta1, delta2, tau1, tau2)
    return total <= 1.0, 1.0 - total


def range_boundary(drift: DriftFunction, delta: float, delta1: float = 0.0, delta2: float = 0.0,
                   tau1: float = 0.0, tau2: float = 0.0, z_hi: float = 1e6) -> float:
    """Largest admissible ``z``: the root of ``range_sum = 1``."""
    f = lambda z: range_sum(drift, z, delta, delta1, delta2, tau1, tau2) - 1.0
    hi = 1.0
    while f(hi) < 0:
        hi *= 2
        if hi > z_hi:
            raise ValueError("range condition holds on the whole search interval")
    return optimize.brentq(f, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
