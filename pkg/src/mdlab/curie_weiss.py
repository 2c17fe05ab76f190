"""General Curie-Weiss model CW(rho) at the critical inverse temperature beta = 1.

The joint law of the spins is proportional to
``exp(S_n**2 / (2 n)) * prod rho(x_i)`` with ``S_n = x_1 + ... + x_n``; the
observable is ``W = n**(-1 + 1/(2k)) * S_n``.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ConditionError, StateSpaceOverflow
from .limit_laws import DriftFunction, LimitLaw

log = logging.getLogger(__name__)

CUMULANT_TOL = 1e-10
DEFAULT_MAX_STATES = 10**7


def _infer_lattice_step(points: np.ndarray) -> float | None:
    nz = np.abs(points[points != 0])
    if nz.size == 0:
        return None
    base = float(nz.min())
    denom = 1
    for r in nz / base:
        frac = Fraction(float(r)).limit_denominator(1000)
        if abs(float(frac) - r) > 1e-9:
            return None
        denom = denom * frac.denominator // math.gcd(denom, frac.denominator)
    return base / denom


@dataclass(frozen=True)
class RhoMeasure:
    """Finite-support symmetric single-spin measure with unit variance."""

    points: np.ndarray
    weights: np.ndarray
    lattice_step: float | None = None
    labels: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if pts.shape != wts.shape or pts.ndim != 1:
            raise ValueError("points and weights must be 1-D arrays of the same length")
        if np.any(wts <= 0):
            raise ValueError("weights must be positive")
        order = np.argsort(pts)
        pts, wts = pts[order], wts[order]
        if not np.allclose(pts, -pts[::-1], rtol=0, atol=1e-12) or \
                not np.allclose(wts, wts[::-1], rtol=0, atol=1e-14):
            raise ConditionError("rho must be symmetric about 0")
        if abs(wts.sum() - 1) > 1e-14:
            raise ConditionError(f"weights sum to {wts.sum()!r}, not 1")
        if abs(np.dot(wts, pts**2) - 1) > 1e-12:
            raise ConditionError(f"second moment is {np.dot(wts, pts**2)!r}, not 1")
        step = self.lattice_step
        if step is None:
            step = _infer_lattice_step(pts)
        labels = None
        if step is not None:
            labels = np.rint(pts / step).astype(np.int64)
            if np.max(np.abs(labels * step - pts)) > 1e-9 * max(1.0, np.abs(pts).max()):
                raise ConditionError(f"points are not multiples of lattice step {step}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        object.__setattr__(self, "lattice_step", step)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def rademacher(cls) -> "RhoMeasure":
        return cls(np.array([-1.0, 1.0]), np.array([0.5, 0.5]), lattice_step=1.0)

    @classmethod
    def three_point(cls) -> "RhoMeasure":
        """``(1/6) d_{sqrt3} + (2/3) d_0 + (1/6) d_{-sqrt3}``."""
        r = math.sqrt(3.0)
        return cls(np.array([-r, 0.0, r]), np.array([1 / 6, 2 / 3, 1 / 6]), lattice_step=r)

    @classmethod
    def from_unnormalized(cls, points, weights, lattice_step=None) -> "RhoMeasure":
        """Normalize weights to one and rescale points to unit variance."""
        pts = np.asarray(points, dtype=float)
        wts = np.asarray(weights, dtype=float)
        wts = wts / wts.sum()
        scale = math.sqrt(float(np.dot(wts, pts**2)))
        step = None if lattice_step is None else lattice_step / scale
        return cls(pts / scale, wts, lattice_step=step)

    @property
    def L(self) -> float:
        return float(np.abs(self.points).max())

    @property
    def is_lattice(self) -> bool:
        return self.labels is not None

    def key(self) -> dict:
        return {"points": [float(x) for x in self.points],
                "weights": [float(w) for w in self.weights]}


def moments(rho: RhoMeasure, max_order: int) -> np.ndarray:
    """Raw moments ``m_0 .. m_max_order``."""
    return np.array([np.dot(rho.weights, rho.points**i) for i in range(max_order + 1)])


def cumulants_from_moments(m: np.ndarray) -> np.ndarray:
    """``kappa_0 .. kappa_N`` (``kappa_0 = 0``) from raw moments ``m_0 = 1 .. m_N``.

    ``kappa_n = m_n - sum_{j=1}^{n-1} C(n-1, j-1) kappa_j m_{n-j}``.
    """
    N = len(m) - 1
    kappa = np.zeros(N + 1)
    for n in range(1, N + 1):
        acc = m[n]
        for j in range(1, n):
            acc -= math.comb(n - 1, j - 1) * kappa[j] * m[n - j]
        kappa[n] = acc
    return kappa


@dataclass(frozen=True)
class CWAnalysis:
    rho: RhoMeasure
    cumulants: np.ndarray
    k: int
    h2k: float

    @property
    def drift_scale(self) -> float:
        """``h^(2k)(0) / (2k-1)!``; the CW drift is ``g(w) = drift_scale * w**(2k-1)``."""
        return self.h2k / math.factorial(2 * self.k - 1)

    def lam(self, n: int) -> float:
        return n ** (-2.0 + 1.0 / self.k)

    def w_scale(self, n: int) -> float:
        return n ** (-1.0 + 1.0 / (2 * self.k))

    @property
    def tau1(self) -> float:
        return 2.0 / (2 * self.k - 1)

    @property
    def tau2(self) -> float:
        return 1.0 + 2.0 / (2 * self.k - 1)

    def drift(self) -> DriftFunction:
        return DriftFunction.monomial(self.drift_scale, 2 * self.k - 1)

    def limit_law(self) -> LimitLaw:
        return LimitLaw(self.drift())


def analyze_rho(rho: RhoMeasure, max_order: int = 12) -> CWAnalysis:
    """Cumulant analysis: find the order ``k`` and ``h^(2k)(0) = -kappa_2k``."""
    if max_order < 4 or max_order % 2:
        raise ValueError("max_order must be even and >= 4")
    kappa = cumulants_from_moments(moments(rho, max_order))
    if abs(kappa[2] - 1) > 1e-12:
        raise ConditionError(f"kappa_2 = {kappa[2]!r}; rho is not normalized")
    for k in range(2, max_order // 2 + 1):
        odd = kappa[2 * k - 1]
        if abs(odd) > CUMULANT_TOL:
            raise ConditionError(f"kappa_{2 * k - 1} = {odd:g} is nonzero")
        even = kappa[2 * k]
        if -even > CUMULANT_TOL:
            return CWAnalysis(rho=rho, cumulants=kappa, k=k, h2k=float(-even))
        if even > CUMULANT_TOL:
            raise ConditionError(
                f"first nonvanishing derivative h^({2 * k})(0) = {-even:g} is negative")
    raise ConditionError(f"no valid k <= {max_order // 2}: cumulants vanish through order {max_order}")


def _log_mgf(rho: RhoMeasure, s):
    s = np.asarray(s, dtype=float)
    return logsumexp(np.log(rho.weights) + np.multiply.outer(s, rho.points), axis=-1)


def h_eval(rho: RhoMeasure, s):
    """``h(s) = s**2/2 - log E exp(s xi)``."""
    s = np.asarray(s, dtype=float)
    out = s**2 / 2 - _log_mgf(rho, s)
    return out[()] if np.ndim(out) == 0 else out


def h_prime(rho: RhoMeasure, s):
    """``h'(s) = s - psi_inf(s)``."""
    s = np.asarray(s, dtype=float)
    out = s - psi_phi(rho, math.inf, s)[0]
    return out[()] if np.ndim(out) == 0 else out


def condition_ii_holds(rho: RhoMeasure, num: int = 20001, s_min: float = 0.05) -> bool:
    """Grid check that ``h'(s) = 0`` only at ``s = 0``.

    For ``|s| > L`` we have ``s h'(s) > 0`` automatically since ``|psi| <= L``,
    so the scan covers ``s_min <= |s| <= L + 1``.  Near the origin
    ``h'(s) ~ h2k s**(2k-1) / (2k-1)!`` drowns in the rounding of
    ``s - psi(s)``; there the sign comes from ``h2k > 0`` (``analyze_rho``).
    """
    s = np.linspace(-(rho.L + 1), rho.L + 1, num)
    s = s[np.abs(s) >= s_min]
    return bool(np.all(s * h_prime(rho, s) > 0))


def psi_phi(rho: RhoMeasure, n, s):
    """Tilted first and second moments ``(psi_n(s), phi_n(s))``; ``n = inf`` drops the ``xi**2/(2n)`` term."""
    s = np.asarray(s, dtype=float)
    quad = 0.0 if math.isinf(n) else rho.points**2 / (2.0 * n)
    logits = np.log(rho.weights) + quad + np.multiply.outer(s, rho.points)
    probs = np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))
    psi = probs @ rho.points
    phi = probs @ rho.points**2
    if psi.ndim == 0:
        return float(psi), float(phi)
    return psi, phi


@dataclass
class MagnetizationDist:
    """Exact law of ``S_n`` on its lattice, stored as log-probabilities."""

    n: int
    k: int
    step: float
    labels: np.ndarray  # S_n = step * labels, ascending
    log_pmf: np.ndarray

    @property
    def s_values(self) -> np.ndarray:
        return self.step * self.labels

    @property
    def w_values(self) -> np.ndarray:
        return self.s_values * self.n ** (-1.0 + 1.0 / (2 * self.k))

    @property
    def pmf(self) -> np.ndarray:
        return np.exp(self.log_pmf)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["s_value", "w_value", "log_prob"])
            for s, w, lp in zip(self.s_values, self.w_values, self.log_pmf):
                wr.writerow([repr(float(s)), repr(float(w)), repr(float(lp))])

    @classmethod
    def from_csv(cls, path, n: int, k: int, step: float) -> "MagnetizationDist":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        s = np.array([float(r["s_value"]) for r in rows])
        lp = np.array([float(r["log_prob"]) for r in rows])
        return cls(n=n, k=k, step=step, labels=np.rint(s / step).astype(np.int64), log_pmf=lp)


def cache_key(rho: RhoMeasure, n: int) -> str:
    payload = json.dumps({"rho": rho.key(), "n": int(n), "beta": 1.0}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _lattice_sum_logpmf(labels: np.ndarray, log_w: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Log-space DP for the law of a sum of ``n`` iid lattice draws (no tilt)."""
    lo, hi = int(labels.min()), int(labels.max())
    width = hi - lo
    shifts = labels - lo
    lp = np.full(n * width + 1, -np.inf)
    lp[0] = 0.0
    for t in range(n):
        cur = t * width + 1
        new = np.full(cur + width, -np.inf)
        for sh, lw in zip(shifts, log_w):
            seg = new[sh:sh + cur]
            np.logaddexp(seg, lp[:cur] + lw, out=seg)
        lp[:cur + width] = new
    return n * lo + np.arange(n * width + 1), lp


def exact_magnetization_dist(rho: RhoMeasure, n: int, k: int | None = None,
                             max_states: int = DEFAULT_MAX_STATES) -> MagnetizationDist:
    """Exact law of ``S_n`` under CW(rho) at beta = 1.

    DP convolution over the sum lattice in log-space, then reweighting each
    atom by ``exp(s**2 / (2n))`` and log-sum-exp normalization.
    """
    if not rho.is_lattice:
        raise ConditionError("exact enumeration needs lattice-valued rho")
    if n < 1:
        raise ValueError("n must be >= 1")
    width = int(rho.labels.max() - rho.labels.min())
    if n * width + 1 > max_states:
        raise StateSpaceOverflow(f"n={n}: {n * width + 1} lattice states exceed budget {max_states}")
    if k is None:
        k = analyze_rho(rho).k
    labels, lp = _lattice_sum_logpmf(rho.labels, np.log(rho.weights), n)
    keep = np.isfinite(lp)
    labels, lp = labels[keep], lp[keep]
    s = rho.lattice_step * labels
    lp = lp + s**2 / (2.0 * n)
    lp -= logsumexp(lp)
    return MagnetizationDist(n=n, k=k, step=rho.lattice_step, labels=labels, log_pmf=lp)


def _tail_from_atoms(w: np.ndarray, log_pmf: np.ndarray, z: float) -> float:
    mask = w >= z - 1e-12 * max(1.0, abs(z))
    if not mask.any():
        return 0.0
    return float(np.exp(min(0.0, logsumexp(log_pmf[mask]))))


def tail_prob(dist: MagnetizationDist, k: int, z: float) -> float:
    """``P(W >= z)`` with ``W = n**(-1 + 1/(2k)) S_n``, atom at ``z`` included."""
    if z < 0:
        raise ValueError("tail_prob needs z >= 0")
    w = dist.s_values * dist.n ** (-1.0 + 1.0 / (2 * k))
    return _tail_from_atoms(w, dist.log_pmf, z)


# ---------------------------------------------------------------------------
# exchangeable-pair diagnostics


def _compositions(n: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``n``."""
    if parts == 1:
        return np.array([[n]], dtype=np.int64)
    if parts == 2:
        a = np.arange(n + 1, dtype=np.int64)
        return np.stack([a, n - a], axis=1)
    rows = []
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(n + parts - 2 - prev)
        rows.append(row)
    return np.array(rows, dtype=np.int64)


def _type_statistics(rho: RhoMeasure, n: int, counts: np.ndarray):
    """Per-configuration conditional moments; they depend on counts only.

    Returns ``(S, A, B, Q)`` with
    ``A = E(X_I - X_I' | X)``, ``B = E((X_I - X_I')**2 | X)`` and
    ``Q = n^{-1} sum_i (X_i**2 - E(X_i**2 | rest))``.
    """
    x = rho.points
    S = counts @ x
    A = S / n
    B = np.zeros_like(S)
    Q = np.zeros_like(S)
    for j, xj in enumerate(x):
        psi, phi = psi_phi(rho, n, (S - xj) / n)
        cj = counts[:, j] / n
        A = A - cj * psi
        B = B + cj * (xj**2 - 2 * xj * psi + phi)
        Q = Q + cj * (xj**2 - phi)
    return S, A, B, Q


@dataclass
class PairDiagnostics:
    n: int
    k: int
    delta: float
    max_step: float
    delta1: float
    delta2: float
    drift_envelope_constant: float
    tau1: float
    tau2: float
    k1_dev: np.ndarray  # rows (W, |E(D^2|W)/(2 lam) - 1|)
    drift_rows: np.ndarray  # rows (W, E(D|W)/lam, g(W))
    k2_rows: np.ndarray  # rows (s, E[K2 zeta]/E[zeta], delta1 (1 + g(s)^tau1))
    n_bins: int = 0
    dropped_bins: int = 0


def pair_diagnostics(analysis: CWAnalysis, n: int, samples=None,
                     s_values=(0.25, 0.5, 1.0, 2.0), min_atom_mass: float = 1e-12,
                     min_bin_count: int = 100, n_bins: int = 40,
                     max_types: int = 5_000_000, seed: int = 0) -> PairDiagnostics:
    """Diagnostics of the random-index exchangeable pair ``(W, W')``.

    With ``samples=None`` the conditional expectations given ``W`` are exact:
    every count vector ("type") is enumerated with its Gibbs weight and each
    lattice atom of ``W`` is its own bin (atoms lighter than ``min_atom_mass``
    are skipped).  Otherwise ``samples`` is a ``GlauberRun`` recorded with
    ``record_counts=True`` and equal-count bins of at least
    ``min_bin_count`` samples are used.
    """
    from .stein import zeta  # local import keeps module import graph flat

    rho = analysis.rho
    k = analysis.k
    scale = analysis.w_scale(n)
    lam = analysis.lam(n)
    drift = analysis.drift()
    law_for_zeta = _ZetaLaw(drift)

    if samples is None:
        parts = len(rho.points)
        if math.comb(n + parts - 1, parts - 1) > max_types:
            raise StateSpaceOverflow(f"n={n}: too many count vectors for exact pair diagnostics")
        counts = _compositions(n, parts)
        logp = (gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
                + counts @ np.log(rho.weights))
        S, A, B, Q = _type_statistics(rho, n, counts)
        logp = logp + S**2 / (2.0 * n)
        logp -= logsumexp(logp)
        prob = np.exp(logp)
        labels = np.rint(S / rho.lattice_step).astype(np.int64) if rho.is_lattice else S
        uniq, inv = np.unique(labels, return_inverse=True)
        mass = np.bincount(inv, weights=prob)
        keep = mass > min_atom_mass
        with np.errstate(invalid="ignore", divide="ignore"):
            EA = np.bincount(inv, weights=prob * A) / mass
            EB = np.bincount(inv, weights=prob * B) / mass
        W_atoms = (uniq * rho.lattice_step if rho.is_lattice else uniq) * scale
        W_bins, EA, EB = W_atoms[keep], EA[keep], EB[keep]
        W_all = S * scale
        weight = prob
        K2 = 0.5 * np.abs(Q)
        max_step = 2 * rho.L * scale
        used, dropped = int(keep.sum()), int((~keep).sum())
    else:
        counts = np.asarray(samples.counts)
        S, A, B, Q = _type_statistics(rho, n, counts)
        W_all = S * scale
        weight = np.full(len(S), 1.0 / len(S))
        K2 = 0.5 * np.abs(Q)
        nb = max(1, min(n_bins, len(S) // min_bin_count))
        order = np.argsort(W_all, kind="stable")
        chunks = np.array_split(order, nb)
        W_bins, EA, EB = [], [], []
        dropped = 0
        for c in chunks:
            if len(c) < min_bin_count:
                dropped += 1
                log.warning("dropping bin with %d < %d samples", len(c), min_bin_count)
                continue
            W_bins.append(W_all[c].mean())
            EA.append(A[c].mean())
            EB.append(B[c].mean())
        W_bins, EA, EB = map(np.asarray, (W_bins, EA, EB))
        used = len(W_bins)
        # one simulated pair move per sample for the observed step size
        rng = np.random.default_rng(seed)
        steps = []
        for row, s in zip(counts, S):
            j = rng.choice(len(rho.points), p=row / n)
            psi_probs = site_conditional(rho, n, s - rho.points[j])
            psi_probs = psi_probs / psi_probs.sum()
            v = rng.choice(len(rho.points), p=psi_probs)
            steps.append(abs(rho.points[j] - rho.points[v]) * scale)
        max_step = float(max(steps)) if steps else 0.0

    g_bins = drift(W_bins)
    mean_drift = scale * EA / lam
    resid = np.abs(mean_drift - g_bins)
    dev = np.abs(0.5 * EB - 1.0)  # scale**2 == lam
    delta1 = float(np.max(dev / (1 + np.abs(g_bins) ** analysis.tau1))) if used else math.nan
    delta2 = float(np.max(resid / (1 + np.abs(g_bins) ** analysis.tau2))) if used else math.nan
    env = n ** (-1.0 / k) * (np.abs(W_bins) ** (2 * k + 1) + 1)
    drift_c = float(np.max(resid / env)) if used else math.nan

    k2_rows = []
    for s in s_values:
        z = zeta(law_for_zeta, W_all, s)
        ratio = float(np.sum(weight * K2 * z) / np.sum(weight * z))
        k2_rows.append((s, ratio, delta1 * (1 + float(drift(s)) ** analysis.tau1)))

    return PairDiagnostics(
        n=n, k=k, delta=2 * rho.L * scale, max_step=float(max_step),
        delta1=delta1, delta2=delta2, drift_envelope_constant=drift_c,
        tau1=analysis.tau1, tau2=analysis.tau2,
        k1_dev=np.column_stack([W_bins, dev]),
        drift_rows=np.column_stack([W_bins, mean_drift, g_bins]),
        k2_rows=np.array(k2_rows), n_bins=used, dropped_bins=dropped,
    )


class _ZetaLaw:
    """Just enough of a law (``G`` and ``g``) for the zeta helpers, without a normalizing constant."""

    def __init__(self, drift: DriftFunction):
        self.drift = drift

    def G(self, y):
        return self.drift.integral(y)

    def g(self, y):
        return self.drift(y)


def site_conditional(rho: RhoMeasure, n: int, s_rest):
    """Heat-bath law of one spin given the sum ``s_rest`` of the others.

    ``P(X_i = x | rest) ~ rho(x) exp(x**2/(2n) + x s_rest / n)``; vectorized
    over ``s_rest`` (last axis indexes the support).
    """
    s_rest = np.asarray(s_rest, dtype=float)
    logits = np.log(rho.weights) + rho.points**2 / (2.0 * n) + np.multiply.outer(s_rest, rho.points) / n
    return np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))
