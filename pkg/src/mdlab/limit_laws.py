"""Drift functions and the symmetric limit laws with density c1 * exp(-G(y)).

A drift ``g`` defines ``G(y) = int_0^y g(t) dt`` and a law ``Y`` with density
``p(y) = c1 exp(-G(y))``.  All tail and Mills-ratio computations are done on
the *scaled* integrals

    U(z) = int_z^inf exp(G(z) - G(y)) dy = (1 - F(z)) / p(z)
    L(z) = int_-inf^z exp(G(z) - G(y)) dy = F(z) / p(z)

so that nothing underflows in the far tails.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import BoundViolation, QuadratureError

# exp(-40) ~ 4e-18: tail mass beyond the truncation radius is below double
# precision relative to the bulk.
TAIL_LOG_CUTOFF = 40.0
_EPSREL = 1e-13
_QUAD_LIMIT = 200

MONOMIAL = "scaled-odd-monomial"
USER = "user-supplied"


def _quad(f: Callable[[float], float], a: float, b: float) -> float:
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=_EPSREL, limit=_QUAD_LIMIT)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {exc}") from exc
    return val


@dataclass(frozen=True)
class DriftFunction:
    """The drift ``g`` of a limit law.

    ``kind == "scaled-odd-monomial"`` means ``g(y) = a sgn(y) |y|**p``.
    User-supplied drifts carry their own callables; ``G`` is then obtained by
    quadrature.
    """

    kind: str = MONOMIAL
    a: float = 1.0
    p: float = 1.0
    func: Callable[[float], float] | None = field(default=None, compare=False, repr=False)
    deriv_func: Callable[[float], float] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind == MONOMIAL:
            if not self.a > 0:
                raise ValueError(f"monomial drift needs a > 0, got {self.a}")
            if not self.p >= 1:
                raise ValueError(f"monomial drift needs p >= 1, got {self.p}")
        elif self.kind == USER:
            if self.func is None or self.deriv_func is None:
                raise ValueError("user-supplied drift needs both func and deriv_func")
        else:
            raise ValueError(f"unknown drift kind {self.kind!r}")

    @classmethod
    def monomial(cls, a: float, p: float) -> "DriftFunction":
        return cls(MONOMIAL, float(a), float(p))

    @classmethod
    def user(cls, func, deriv_func) -> "DriftFunction":
        return cls(USER, float("nan"), float("nan"), func, deriv_func)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == MONOMIAL:
            out = self.a * np.sign(y) * np.abs(y) ** self.p
        else:
            out = np.vectorize(self.func, otypes=[float])(y)
        return out[()] if out.ndim == 0 else out

    def deriv(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == MONOMIAL:
            if self.p == 1:
                out = np.full_like(y, self.a)
            else:
                # g'(0) = 0 for p > 1
                out = self.a * self.p * np.abs(y) ** (self.p - 1)
        else:
            out = np.vectorize(self.deriv_func, otypes=[float])(y)
        return out[()] if out.ndim == 0 else out

    def integral(self, y):
        """``G(y) = int_0^y g``; closed form ``a |y|^(p+1) / (p+1)`` for monomials."""
        y = np.asarray(y, dtype=float)
        if self.kind == MONOMIAL:
            out = self.a * np.abs(y) ** (self.p + 1) / (self.p + 1)
        else:
            out = np.vectorize(lambda t: _quad(self.func, 0.0, t), otypes=[float])(y)
        return out[()] if out.ndim == 0 else out


def _level_radius(G: Callable[[float], float], level: float, side: int, y_max: float = 1e6) -> float:
    """Point ``y`` on the given side (+1/-1) of 0 with ``G(y) = level``."""
    hi = 1.0
    while G(side * hi) < level:
        hi *= 2.0
        if hi > y_max:
            name = "right" if side > 0 else "left"
            raise QuadratureError(
                f"G does not grow on the {name} side (G({side * y_max:g}) < {level}); "
                "exp(-G) is not integrable there"
            )
    return side * optimize.brentq(lambda t: G(side * t) - level, 0.0, hi, xtol=1e-14, rtol=1e-15)


def normalizing_constant(G: Callable[[float], float], radius: float | None = None) -> float:
    """``c1`` such that ``c1 * exp(-G)`` integrates to one.

    The integral runs over ``[-R, R]`` with ``G(+-R) = 40`` unless ``radius``
    is given.
    """
    if radius is None:
        lo = _level_radius(G, TAIL_LOG_CUTOFF, -1)
        hi = _level_radius(G, TAIL_LOG_CUTOFF, +1)
    else:
        lo, hi = -radius, radius
    f = lambda y: math.exp(-G(y))
    total = _quad(f, lo, 0.0) + _quad(f, 0.0, hi)
    if not np.isfinite(total) or total <= 0:
        raise QuadratureError(f"normalizing integral is {total}")
    return 1.0 / total


class LimitLaw:
    """Symmetric law with density ``c1 exp(-G(y))`` for an odd drift ``g``.

    Immutable after construction; every evaluation method is a pure function
    of the stored fields.
    """

    def __init__(self, drift: DriftFunction, c1: float | None = None,
                 truncation_radius: float | None = None):
        self.drift = drift
        if truncation_radius is None:
            truncation_radius = self._radius(TAIL_LOG_CUTOFF)
        self.truncation_radius = float(truncation_radius)
        if c1 is None:
            c1 = normalizing_constant(self._G, self.truncation_radius)
        self.c1 = float(c1)

    # -- constructors ---------------------------------------------------
    @classmethod
    def monomial(cls, a: float, p: float) -> "LimitLaw":
        return cls(DriftFunction.monomial(a, p))

    @classmethod
    def gaussian(cls, variance: float = 1.0) -> "LimitLaw":
        return cls.monomial(1.0 / variance, 1.0)

    @classmethod
    def quartic(cls, scale: float) -> "LimitLaw":
        """Density proportional to ``exp(-scale * y**4)``."""
        return cls.monomial(4.0 * scale, 3.0)

    @classmethod
    def w4_12(cls) -> "LimitLaw":
        """The W(4, 12) law, density proportional to ``exp(-y**4 / 12)``."""
        return cls.monomial(1.0 / 3.0, 3.0)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        if self.drift.kind != MONOMIAL:
            raise TypeError("only monomial-drift laws serialize")
        return {
            "kind": self.drift.kind,
            "a": self.drift.a,
            "p": self.drift.p,
            "c1": self.c1,
            "truncation_radius": self.truncation_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LimitLaw":
        if d["kind"] != MONOMIAL:
            raise ValueError(f"cannot restore drift kind {d['kind']!r}")
        return cls(DriftFunction.monomial(d["a"], d["p"]), c1=d["c1"],
                   truncation_radius=d["truncation_radius"])

    def __repr__(self) -> str:
        return f"LimitLaw({self.drift!r}, c1={self.c1!r})"

    # -- internals ------------------------------------------------------
    def _G(self, y: float) -> float:
        return float(self.drift.integral(y))

    def _radius(self, level: float, side: int = 1) -> float:
        d = self.drift
        if d.kind == MONOMIAL:
            return side * ((d.p + 1) * level / d.a) ** (1.0 / (d.p + 1))
        return _level_radius(self._G, level, side)

    def _scaled_upper(self, z: float) -> float:
        """``U(z) = (1 - F(z)) / p(z)``."""
        Gz = self._G(z)
        hi = self._radius(Gz + TAIL_LOG_CUTOFF, +1)
        f = lambda y: math.exp(Gz - self._G(y))
        if z >= 0:
            return _quad(f, z, hi)
        return _quad(f, z, 0.0) + _quad(f, 0.0, hi)

    def _scaled_lower(self, z: float) -> float:
        """``L(z) = F(z) / p(z)``."""
        Gz = self._G(z)
        lo = self._radius(Gz + TAIL_LOG_CUTOFF, -1)
        f = lambda y: math.exp(Gz - self._G(y))
        if z <= 0:
            return _quad(f, lo, z)
        return _quad(f, lo, 0.0) + _quad(f, 0.0, z)

    @staticmethod
    def _map(fn, y):
        arr = np.asarray(y, dtype=float)
        out = np.array([fn(float(v)) for v in arr.ravel()], dtype=float).reshape(arr.shape)
        return out[()] if out.ndim == 0 else out

    # -- public evaluation ----------------------------------------------
    def G(self, y):
        return self.drift.integral(y)

    def g(self, y):
        return self.drift(y)

    def log_density(self, y):
        return math.log(self.c1) - self.drift.integral(y)

    def density(self, y):
        return self.c1 * np.exp(-self.drift.integral(y))

    def _cdf1(self, y: float) -> float:
        if y <= 0:
            return self.c1 * math.exp(-self._G(y)) * self._scaled_lower(y)
        return 1.0 - self._tail1(y)

    def _tail1(self, z: float) -> float:
        if z >= 0:
            return self.c1 * math.exp(-self._G(z)) * self._scaled_upper(z)
        return 1.0 - self._cdf1(z)

    def cdf(self, y):
        return self._map(self._cdf1, y)

    def tail(self, z):
        """``P(Y >= z)``; direct quadrature for ``z >= 0``."""
        return self._map(self._tail1, z)

    def log_tail(self, z):
        def one(t):
            if t >= 0:
                return math.log(self.c1) - self._G(t) + math.log(self._scaled_upper(t))
            return math.log(self._tail1(t))
        return self._map(one, z)

    def log_cdf(self, y):
        def one(t):
            if t <= 0:
                return math.log(self.c1) - self._G(t) + math.log(self._scaled_lower(t))
            return math.log(self._cdf1(t))
        return self._map(one, y)

    def mills_upper(self, w):
        """``(1 - F(w)) / p(w)``."""
        def one(t):
            if t >= 0:
                return self._scaled_upper(t)
            return self._tail1(t) / (self.c1 * math.exp(-self._G(t)))
        return self._map(one, w)

    def mills_lower(self, w):
        """``F(w) / p(w)``."""
        def one(t):
            if t <= 0:
                return self._scaled_lower(t)
            return self._cdf1(t) / (self.c1 * math.exp(-self._G(t)))
        return self._map(one, w)

    @cached_property
    def cdf_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Monotone ``(y, F(y))`` table on ``[-R, R]``.

        Built by 16-point Gauss-Legendre on each cell and a cumulative sum.
        """
        R = self.truncation_radius
        y = np.linspace(-R, R, 1601)
        nodes, wts = np.polynomial.legendre.leggauss(16)
        left, right = y[:-1], y[1:]
        half = 0.5 * (right - left)
        pts = (0.5 * (left + right))[:, None] + half[:, None] * nodes[None, :]
        dens = self.c1 * np.exp(-self.drift.integral(pts))
        cell = half * (dens @ wts)
        F = np.concatenate([[0.0], np.cumsum(cell)])
        F /= F[-1]
        return y, F

    def _quantile1(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile needs q in (0, 1), got {q}")
        if q == 0.5:
            return 0.0
        if q > 0.5:
            return -self._quantile1(1.0 - q)
        y_tab, F_tab = self.cdf_grid
        i = int(np.searchsorted(F_tab, q))
        if i <= 0:
            y = y_tab[0]
        elif i >= len(F_tab):
            y = y_tab[-1]
        else:
            f0, f1 = F_tab[i - 1], F_tab[i]
            y = y_tab[i - 1] + (q - f0) / (f1 - f0) * (y_tab[i] - y_tab[i - 1])
        y = min(y, 0.0)
        # Newton on log F: d/dy log F = 1 / L(y); well behaved in the left tail.
        log_q = math.log(q)
        for it in range(50):
            L = self._scaled_lower(y)
            logF = math.log(self.c1) - self._G(y) + math.log(L)
            step = (logF - log_q) * L
            y = min(y - step, 0.0)
            if it >= 1 and abs(step) <= 1e-13 * max(1.0, abs(y)):
                break
        return y

    def quantile(self, q):
        return self._map(self._quantile1, q)


@dataclass(frozen=True)
class ConditionReport:
    monotone_ok: bool
    sign_ok: bool
    c2_est: float
    c3_est: float
    grid: dict
    c2_raw: float = float("nan")
    c3_raw: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.monotone_ok and self.sign_ok

    def to_dict(self) -> dict:
        return {
            "monotone_ok": self.monotone_ok,
            "sign_ok": self.sign_ok,
            "c2_est": self.c2_est,
            "c3_est": self.c3_est,
            "c2_raw": self.c2_raw,
            "c3_raw": self.c3_raw,
            "grid": dict(self.grid),
        }


def check_conditions(g: DriftFunction, radius: float = 10.0, num: int = 1001) -> ConditionReport:
    """Grid check of the four drift conditions.

    ``c2_est`` and ``c3_est`` are the grid suprema of
    ``|g(x+y)| / (|g(x)| + |g(y)| + 1)`` and ``|g'(y)| (1+|y|) / (1+|g(y)|)``,
    floored at 1 (any larger constant also satisfies the condition).
    """
    if radius < 10 or num < 1000:
        raise ValueError("condition grid must cover [-R, R] with R >= 10 and >= 1000 points")
    y = np.linspace(-radius, radius, num)
    gy = np.asarray(g(y), dtype=float)
    g0 = float(g(0.0))
    monotone_ok = bool(g0 == 0.0 and np.all(np.diff(gy) >= 0))
    nz = y != 0
    sign_ok = bool(np.all(y[nz] * gy[nz] > 0))

    gsum = np.asarray(g(y[:, None] + y[None, :]), dtype=float)
    c2_raw = float(np.max(np.abs(gsum) / (np.abs(gy)[:, None] + np.abs(gy)[None, :] + 1.0)))
    dg = np.asarray(g.deriv(y), dtype=float)
    c3_raw = float(np.max(np.abs(dg) * (1 + np.abs(y)) / (1 + np.abs(gy))))
    return ConditionReport(
        monotone_ok=monotone_ok,
        sign_ok=sign_ok,
        c2_est=max(1.0, c2_raw),
        c3_est=max(1.0, c3_raw),
        grid={"lo": -radius, "hi": radius, "num": num},
        c2_raw=c2_raw,
        c3_raw=c3_raw,
    )


@dataclass(frozen=True)
class MillsReport:
    min_slack: float
    worst_w: float
    n_points: int


def mills_bounds_check(law: LimitLaw, w_grid, c3: float | None = None) -> MillsReport:
    """Check the Mills-ratio sandwich at every grid point.

    For ``w > 0``:  ``1/(max(1,c3)(1+g(w))) <= (1-F(w))/p(w) <= min(1/g(w), 1/c1)``.
    For ``w < 0``:  ``F(w)/p(w) <= min(1/|g(w)|, 1/c1)``.

    Raises ``BoundViolation`` naming the first failing point.
    """
    if c3 is None:
        c3 = check_conditions(law.drift).c3_est
    c3 = max(1.0, c3)
    w_grid = np.asarray(w_grid, dtype=float)
    best = (math.inf, math.nan)
    for w in w_grid:
        if w == 0:
            continue
        gw = float(law.g(w))
        if w > 0:
            r = float(law.mills_upper(w))
            lower = 1.0 / (c3 * (1.0 + gw))
            upper = min(1.0 / gw, 1.0 / law.c1)
            slack = min(r - lower, upper - r)
            if not (lower < r < upper):
                raise BoundViolation(
                    f"Mills sandwich fails at w={w}: {lower} < {r} < {upper} is false")
        else:
            r = float(law.mills_lower(w))
            upper = min(1.0 / abs(gw), 1.0 / law.c1)
            slack = upper - r
            if not r < upper:
                raise BoundViolation(f"left Mills bound fails at w={w}: {r} >= {upper}")
        if slack < best[0]:
            best = (slack, float(w))
    return MillsReport(min_slack=best[0], worst_w=best[1], n_points=int(w_grid.size))
