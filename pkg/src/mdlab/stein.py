"""Stein equation ``f'(w) - f(w) g(w) = 1(w <= z) - F(z)`` for a limit law.

The bounded solution is

    f_z(w) = F(w) (1 - F(z)) / p(w)   for w <= z
    f_z(w) = F(z) (1 - F(w)) / p(w)   for w >  z

Both Mills-type ratios come from the law's scaled integrals, so evaluation is
safe far into either tail.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import BoundViolation
from .limit_laws import LimitLaw


@dataclass(frozen=True)
class SteinSolution:
    law: LimitLaw
    z: float

    @property
    def F_z(self) -> float:
        return float(self.law.cdf(self.z))

    @property
    def tail_z(self) -> float:
        return float(self.law.tail(self.z))

    def _eval1(self, w: float) -> float:
        if w <= self.z:
            return float(self.law.mills_lower(w)) * self.tail_z
        return self.F_z * float(self.law.mills_upper(w))

    def __call__(self, w):
        arr = np.asarray(w, dtype=float)
        out = np.array([self._eval1(float(v)) for v in arr.ravel()]).reshape(arr.shape)
        return out[()] if out.ndim == 0 else out

    def derivative(self, w):
        """``f_z'`` read off the Stein equation itself."""
        w = np.asarray(w, dtype=float)
        out = self(w) * self.law.g(w) + (w <= self.z).astype(float) - self.F_z
        return out[()] if np.ndim(out) == 0 else out


def stein_solution(law: LimitLaw, z: float, w):
    return SteinSolution(law, float(z))(w)


def stein_residual(law: LimitLaw, z: float, w_grid, h: float = 1e-4) -> float:
    """Max of ``|f_z'(w) - f_z(w) g(w) - (1(w<=z) - F(z))|`` with a central-difference ``f_z'``.

    The grid must stay ``2h`` away from ``z`` where ``f_z'`` jumps.
    """
    if h > 1e-4:
        raise ValueError(f"difference step must be <= 1e-4, got {h}")
    w = np.asarray(w_grid, dtype=float)
    if np.any(np.abs(w - z) < 2 * h):
        bad = w[np.abs(w - z) < 2 * h][0]
        raise ValueError(f"grid point {bad} lies inside the excluded band ({z - 2*h}, {z + 2*h})")
    sol = SteinSolution(law, float(z))
    fd = (sol(w + h) - sol(w - h)) / (2 * h)
    res = fd - sol(w) * law.g(w) - ((w <= z).astype(float) - sol.F_z)
    return float(np.max(np.abs(res)))


@dataclass(frozen=True)
class BoundsReport:
    law: str
    z: float
    worst_w: float
    slack: float
    worst_bound: str
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


def solution_bounds_check(law: LimitLaw, z: float, w_grid) -> BoundsReport:
    """Check the three families of bounds on ``f_z`` for ``z >= 0``.

    * ``|f_z g| <= 1 - F(z)`` (w <= 0), ``<= F(z)`` (w > 0)
    * ``f_z <= (1 - F(z))/c1`` (w <= 0), ``<= F(z)/c1`` (w > 0)
    * ``|f_z'| <= 2(1 - F(z))`` (w < 0), ``<= 1`` (0 < w < z), ``<= 2F(z)`` (w > z)

    The derivative bound is only checked on open intervals; ``w = 0`` and
    ``w = z`` are skipped for it.
    """
    if z < 0:
        raise ValueError("bounds are stated for z >= 0")
    sol = SteinSolution(law, float(z))
    Fz, Tz = sol.F_z, sol.tail_z
    w = np.asarray(w_grid, dtype=float)
    f = sol(w)
    g = law.g(w)
    fp = f * g + (w <= z).astype(float) - Fz

    checks = []
    left = w <= 0
    checks.append(("|f g|", np.abs(f * g), np.where(left, Tz, Fz), np.ones_like(w, bool)))
    checks.append(("f", f, np.where(left, Tz, Fz) / law.c1, np.ones_like(w, bool)))
    fp_bound = np.where(w < 0, 2 * Tz, np.where(w < z, 1.0, 2 * Fz))
    checks.append(("|f'|", np.abs(fp), fp_bound, (w != 0) & (w != z)))

    worst = (math.inf, math.nan, "")
    for name, lhs, rhs, mask in checks:
        slack = np.where(mask, rhs - lhs, np.inf)
        i = int(np.argmin(slack))
        if slack[i] < 0:
            raise BoundViolation(
                f"{name} bound fails at w={w[i]} (z={z}): {lhs[i]} > {rhs[i]}")
        if slack[i] < worst[0]:
            worst = (float(slack[i]), float(w[i]), name)
    return BoundsReport(law=repr(law.drift), z=float(z), worst_w=worst[1], slack=worst[0],
                        worst_bound=worst[2], n_points=int(w.size))


def log_zeta(law: LimitLaw, w, s):
    """``log zeta(w, s)``: ``G(w) - G(w - s)`` (w > s), ``G(w)`` (0 <= w <= s), 0 (w < 0)."""
    w, s = np.broadcast_arrays(np.asarray(w, dtype=float), np.asarray(s, dtype=float))
    if np.any(s < 0):
        raise ValueError("s must be nonnegative")
    Gw = law.G(w)
    out = np.where(w > s, Gw - law.G(w - s), np.where(w >= 0, Gw, 0.0))
    return out[()] if out.ndim == 0 else out


def zeta(law: LimitLaw, w, s):
    return np.exp(log_zeta(law, w, s))


def tilt(law: LimitLaw, w, s):
    """``f(w, s) = zeta(w, s) - 1`` for ``w >= 0`` and 0 for ``w <= 0``."""
    w = np.asarray(w, dtype=float)
    out = np.where(w > 0, np.expm1(log_zeta(law, w, s)), 0.0)
    return out[()] if out.ndim == 0 else out


def tilt_ds(law: LimitLaw, w, s):
    """Closed-form ``d f(w, s) / ds = exp(G(w) - G(w - s)) g(w - s) 1(0 < s <= w)``."""
    w, s = np.broadcast_arrays(np.asarray(w, dtype=float), np.asarray(s, dtype=float))
    inside = (s > 0) & (s <= w)
    val = np.exp(law.G(w) - law.G(w - s)) * law.g(w - s)
    out = np.where(inside, val, 0.0)
    return out[()] if out.ndim == 0 else out


def tilt_dw(law: LimitLaw, w, s):
    """Closed-form ``d f(w, s) / dw``."""
    w, s = np.broadcast_arrays(np.asarray(w, dtype=float), np.asarray(s, dtype=float))
    upper = np.exp(law.G(w) - law.G(w - s)) * (law.g(w) - law.g(w - s))
    middle = np.exp(law.G(w)) * law.g(w)
    out = np.where(w > s, upper, np.where(w >= 0, middle, 0.0))
    return out[()] if out.ndim == 0 else out
