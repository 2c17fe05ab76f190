"""Imitative monomer-dimer mean-field model on the complete graph K_n.

A configuration is described by its monomer set; with ``M`` monomers the
remaining ``n - M`` vertices carry a perfect matching, of which there are
``(n - M - 1)!!``.  The Gibbs weight of a monomer set is
``(n-M-1)!! exp(n (J m**2 + b m))`` with ``m = M/n`` and
``b = log(n)/2 + h - J``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import AmbiguousMaximizer, StateSpaceOverflow

SQRT2 = math.sqrt(2.0)
CRITICAL_TOL = 1e-9
MAX_EXACT_N = 10**6

NONCRITICAL = "noncritical"
CRITICAL = "critical"


def critical_constants() -> tuple[float, float, float]:
    """``(J_c, h_c, m_c)`` in closed form."""
    J_c = 1.0 / (4.0 * (3.0 - 2.0 * SQRT2))
    h_c = 0.5 * math.log(2.0 * SQRT2 - 2.0) - 0.25
    m_c = 2.0 - SQRT2
    return J_c, h_c, m_c


def monomer_map(x):
    """``g(x) = (sqrt(e^{4x} + 4 e^{2x}) - e^{2x}) / 2``, in the cancellation-free form ``2 / (1 + sqrt(1 + 4 e^{-2x}))``."""
    x = np.asarray(x, dtype=float)
    out = 2.0 / (1.0 + np.sqrt(1.0 + 4.0 * np.exp(-2.0 * x)))
    return out[()] if out.ndim == 0 else out


def tau(x, J: float, h: float):
    return (2.0 * np.asarray(x, dtype=float) - 1.0) * J + h


def H(x, J: float, h: float):
    """Variational function ``-J x^2 - (1 - g(tau(x)) + log(1 - g(tau(x)))) / 2``."""
    gt = monomer_map(tau(x, J, h))
    if np.any(gt >= 1.0):
        raise ValueError("g(tau(x)) >= 1: logarithm argument is nonpositive")
    return -J * np.asarray(x, dtype=float) ** 2 - 0.5 * (1.0 - gt + np.log1p(-gt))


def fixed_point_gap(x, J: float, h: float):
    """``g(tau(x)) - x``; equals ``H'(x) / (2J)``."""
    return monomer_map(tau(x, J, h)) - np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Richardson-extrapolated central differences

_STENCILS = {
    1: (np.array([-1, 1]), np.array([-0.5, 0.5]), 1),
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0]), 2),
    3: (np.array([-2, -1, 1, 2]), np.array([-0.5, 1.0, -1.0, 0.5]), 3),
    4: (np.array([-2, -1, 0, 1, 2]), np.array([1.0, -4.0, 6.0, -4.0, 1.0]), 4),
}
# initial steps balance truncation against rounding (error ~ eps / h^order)
_H0 = {1: 2e-2, 2: 4e-2, 3: 6e-2, 4: 8e-2}


def richardson_derivative(f: Callable[[np.ndarray], np.ndarray], x: float, order: int,
                          h0: float | None = None, levels: int = 5) -> float:
    """``order``-th derivative of ``f`` at ``x``, central differences plus a Richardson tableau.

    The central stencils have even error expansions, so each column of the
    tableau eliminates one power of ``h**2``.  The tableau entry with the
    smallest change against its neighbour is returned.
    """
    offs, coef, p = _STENCILS[order]
    h = _H0[order] if h0 is None else h0
    rows = []
    for i in range(levels):
        hi = h / 2**i
        vals = np.asarray(f(x + offs * hi), dtype=float)
        rows.append([float(coef @ vals) / hi**p])
    best, best_err = rows[0][0], math.inf
    for i in range(1, levels):
        for j in range(1, i + 1):
            fac = 4.0**j
            rows[i].append((fac * rows[i][j - 1] - rows[i - 1][j - 1]) / (fac - 1.0))
            err = abs(rows[i][j] - rows[i][j - 1])
            if err < best_err:
                best, best_err = rows[i][j], err
    return best


def H_and_derivs(J: float, h: float, x: float, order: int = 4) -> list[float]:
    """``[H(x), H'(x), ..., H^(order)(x)]`` with derivatives by Richardson differences."""
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie in (0, 1)")
    if order > 4:
        raise ValueError("order must be <= 4")
    f = lambda t: H(t, J, h)
    out = [float(f(x))]
    for k in range(1, order + 1):
        h0 = min(_H0[k], 0.45 * min(x, 1.0 - x) / 2)
        out.append(richardson_derivative(f, x, k, h0=h0))
    return out


# ---------------------------------------------------------------------------
# stationary point


@dataclass(frozen=True)
class MDStationary:
    J: float
    h: float
    phase: str
    m0: float
    lam: float  # lambda_0 (noncritical variance) or lambda_c (quartic coefficient)

    def to_dict(self) -> dict:
        return {"J": self.J, "h": self.h, "phase": self.phase, "m0": self.m0, "lambda": self.lam}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def is_critical(J: float, h: float) -> bool:
    J_c, h_c, _ = critical_constants()
    return abs(J - J_c) <= CRITICAL_TOL and abs(h - h_c) <= CRITICAL_TOL


def solve_m0(J: float, h: float, scan_points: int = 100_000, eps: float = 1e-9) -> MDStationary:
    """Maximizer ``m0`` of ``H`` and its variance / quartic constant.

    Bisection on ``g(tau(m)) - m`` (proportional to ``H'``) over
    ``(eps, 1 - eps)`` followed by Newton polish.  If the scan finds more than
    one sign change the point may lie on the coexistence curve and
    ``AmbiguousMaximizer`` is raised rather than picking a root.
    """
    if J < 0:
        raise ValueError("J must be >= 0")
    J_c, h_c, m_c = critical_constants()
    if is_critical(J, h):
        d4 = H_and_derivs(J, h, m_c, order=4)[4]
        return MDStationary(J=J, h=h, phase=CRITICAL, m0=m_c, lam=-d4)

    grid = np.linspace(eps, 1.0 - eps, scan_points)
    vals = fixed_point_gap(grid, J, h)
    sgn = np.sign(vals)
    changes = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    if len(changes) != 1:
        raise AmbiguousMaximizer(
            f"(J, h) = ({J}, {h}): {len(changes)} sign changes of H' on the scan grid")
    lo, hi = grid[changes[0]], grid[changes[0] + 1]
    flo = vals[changes[0]]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = float(fixed_point_gap(mid, J, h))
        if fm == 0.0:
            lo = hi = mid
            break
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= 4e-16:
            break
    m = float(0.5 * (lo + hi))
    for _ in range(3):
        gt = float(monomer_map(tau(m, J, h)))
        dg = 2.0 * gt * (1.0 - gt) / (2.0 - gt)  # g'(t) expressed through g(t)
        denom = 2.0 * J * dg - 1.0
        step = (gt - m) / denom
        if not (lo - 1e-12 <= m - step <= hi + 1e-12):
            break
        m -= step
    if J > 0:
        d2 = H_and_derivs(J, h, m, order=2)[2]
        lam0 = float(-1.0 / d2 - 1.0 / (2.0 * J))
    else:
        # J -> 0 limit of -1/H'' - 1/(2J) = g'/(1 - 2 J g'); H is flat at J = 0
        gt = float(monomer_map(tau(m, J, h)))
        lam0 = 2.0 * gt * (1.0 - gt) / (2.0 - gt)
    return MDStationary(J=J, h=h, phase=NONCRITICAL, m0=m, lam=lam0)


# ---------------------------------------------------------------------------
# exact magnetization law


def matchings_log_count(m):
    """log of the number of perfect matchings of K_m: ``log (m-1)!!`` (``-inf`` for odd m)."""
    m = np.asarray(m)
    mf = m.astype(float)
    even = (m % 2 == 0) & (m >= 0)
    with np.errstate(invalid="ignore"):
        val = gammaln(mf + 1) - (mf / 2) * math.log(2.0) - gammaln(mf / 2 + 1)
    out = np.where(even, val, -np.inf)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class MDParams:
    J: float
    h: float
    n: int

    def __post_init__(self):
        if self.J < 0:
            raise ValueError("J must be >= 0")
        if self.n < 2:
            raise ValueError("n must be >= 2")

    @property
    def b(self) -> float:
        return math.log(self.n) / 2.0 + self.h - self.J


def _log_config_weight(params: MDParams, j):
    """Log Gibbs weight of a single monomer set of size ``j`` (matchings included)."""
    n = params.n
    j = np.asarray(j)
    m = j / n
    return matchings_log_count(n - j) + n * (params.J * m**2 + params.b * m)


@dataclass
class MDMagnetizationDist:
    """Law of the monomer count; only atoms with ``n - j`` even are stored."""

    n: int
    j: np.ndarray
    log_pmf: np.ndarray

    @property
    def pmf(self) -> np.ndarray:
        return np.exp(self.log_pmf)

    def w_values(self, stationary: MDStationary) -> np.ndarray:
        expo = 0.25 if stationary.phase == CRITICAL else 0.5
        return self.n**expo * (self.j / self.n - stationary.m0)

    def to_csv(self, path, stationary: MDStationary) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["j", "w_value", "log_prob"])
            for j, w, lp in zip(self.j, self.w_values(stationary), self.log_pmf):
                wr.writerow([int(j), repr(float(w)), repr(float(lp))])

    @classmethod
    def from_csv(cls, path, n: int) -> "MDMagnetizationDist":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(n=n, j=np.array([int(r["j"]) for r in rows], dtype=np.int64),
                   log_pmf=np.array([float(r["log_prob"]) for r in rows]))


def exact_magnetization_dist(params: MDParams) -> MDMagnetizationDist:
    """Exact law of the monomer count ``M``.

    ``log P(M = j) = log C(n, j) + log (n-j-1)!! + n (J (j/n)^2 + b j/n) - log Z``.
    """
    n = params.n
    if n > MAX_EXACT_N:
        raise StateSpaceOverflow(f"n={n}: exact enumeration is limited to n <= {MAX_EXACT_N}")
    j = np.arange(n + 1)
    lp = gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1) + _log_config_weight(params, j)
    keep = np.isfinite(lp)
    j, lp = j[keep], lp[keep]
    lp = lp - logsumexp(lp)
    return MDMagnetizationDist(n=n, j=j, log_pmf=lp)


def tail_prob(dist: MDMagnetizationDist, stationary: MDStationary, z: float) -> float:
    """``P(n^a (m - m0) >= z)`` with ``a = 1/2`` (noncritical) or ``1/4`` (critical)."""
    if z < 0:
        raise ValueError("tail_prob needs z >= 0")
    w = dist.w_values(stationary)
    mask = w >= z - 1e-12 * max(1.0, abs(z))
    if not mask.any():
        return 0.0
    return float(np.exp(min(0.0, logsumexp(dist.log_pmf[mask]))))


# ---------------------------------------------------------------------------
# exchangeable pair


def L_drifts(J: float, h: float, x):
    """``(L1(x), L2(x))``, the leading conditional mean and second moment of ``M - M'``."""
    x = np.asarray(x, dtype=float)
    e = np.exp(2.0 * tau(x, J, h))
    den = (1.0 - x) + e
    L1 = 2.0 * (1.0 - x) * (x**2 - (1.0 - x) * e) / den
    L2 = 4.0 * (1.0 - x) * (x**2 + (1.0 - x) * e) / den
    if L1.ndim == 0:
        return float(L1), float(L2)
    return L1, L2


def pair_moments(params: MDParams, M) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``E(M - M' | M)`` and ``E((M - M')^2 | M)`` for the random-edge pair.

    An unordered pair ``{u, v}`` is chosen uniformly and ``(sigma_u, sigma_v)``
    is redrawn from its conditional Gibbs law; the new monomer count is
    ``M_rest + s + t``.
    """
    n = params.n
    M = np.asarray(M, dtype=float)
    pairs = n * (n - 1.0)
    kinds = [
        (2, M * (M - 1) / pairs),
        (0, (n - M) * (n - M - 1) / pairs),
        (1, 2 * M * (n - M) / pairs),
    ]
    first = np.zeros_like(M)
    second = np.zeros_like(M)
    adds = np.array([0, 1, 1, 2])
    for removed, prob in kinds:
        rest = M - removed
        new = rest[..., None] + adds
        valid = (new >= 0) & (new <= n) & (rest[..., None] >= 0)
        lw = np.where(valid, _log_config_weight(params, np.clip(new, 0, n).astype(np.int64)), -np.inf)
        norm = logsumexp(lw, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore"):
            p = np.where(np.isfinite(norm), np.exp(lw - norm), 0.0)
        diff = M[..., None] - new
        first = first + prob * np.sum(p * diff, axis=-1)
        second = second + prob * np.sum(p * diff**2, axis=-1)
    return first, second
