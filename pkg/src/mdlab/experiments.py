"""End-to-end pipelines: exact law -> tail-ratio curve -> scaling fit."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import curie_weiss as cw
from . import monomer_dimer as md
from .limit_laws import LimitLaw
from .verify import RangeSpec, RatioCurve, ScalingFit, fit_exponent, ratio_curve


class AtomTail:
    """Atom-inclusive ``P(W >= z)`` from lattice atoms via a suffix log-sum-exp table."""

    def __init__(self, w: np.ndarray, log_pmf: np.ndarray):
        order = np.argsort(w, kind="stable")
        self.w = np.asarray(w, dtype=float)[order]
        lp = np.asarray(log_pmf, dtype=float)[order]
        self.log_suffix = np.logaddexp.accumulate(lp[::-1])[::-1]

    def __call__(self, z: float) -> float:
        i = np.searchsorted(self.w, z - 1e-12 * max(1.0, abs(z)), side="left")
        if i >= len(self.w):
            return 0.0
        return float(np.exp(min(0.0, self.log_suffix[i])))


def md_limit_law(stationary: md.MDStationary) -> LimitLaw:
    if stationary.phase == md.CRITICAL:
        return LimitLaw.monomial(stationary.lam / 6.0, 3)
    return LimitLaw.gaussian(stationary.lam)


def cw_ratio_curve(rho: cw.RhoMeasure, n: int, grid_size: int = 50,
                   analysis: cw.CWAnalysis | None = None,
                   dist: cw.MagnetizationDist | None = None,
                   law: LimitLaw | None = None) -> RatioCurve:
    analysis = analysis or cw.analyze_rho(rho)
    dist = dist or cw.exact_magnetization_dist(rho, n, k=analysis.k)
    law = law or analysis.limit_law()
    w = dist.w_values
    return ratio_curve(AtomTail(w, dist.log_pmf), law, RangeSpec.cw_critical(analysis.k), n,
                       grid_size=grid_size, atoms=w)


def md_ratio_curve(J: float, h: float, n: int, grid_size: int = 50,
                   stationary: md.MDStationary | None = None,
                   dist: md.MDMagnetizationDist | None = None,
                   law: LimitLaw | None = None) -> RatioCurve:
    stationary = stationary or md.solve_m0(J, h)
    dist = dist or md.exact_magnetization_dist(md.MDParams(J, h, n))
    law = law or md_limit_law(stationary)
    spec = RangeSpec.md_critical() if stationary.phase == md.CRITICAL else RangeSpec.md_noncritical()
    w = dist.w_values(stationary)
    return ratio_curve(AtomTail(w, dist.log_pmf), law, spec, n,
                       grid_size=grid_size, atoms=w)


def scaling_fit(curves: Sequence[RatioCurve], normalized: bool = False) -> ScalingFit:
    errs = [c.normalized_max_err() if normalized else c.max_abs_err for c in curves]
    return fit_exponent([(c.n, e) for c, e in zip(curves, errs)])
