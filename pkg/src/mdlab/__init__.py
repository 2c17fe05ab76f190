"""Moderate-deviation verification lab for nonnormal limit laws and mean-field spin models."""

from .errors import (AmbiguousMaximizer, BoundViolation, ConditionError, QuadratureError,
                     StateSpaceOverflow)
from .limit_laws import ConditionReport, DriftFunction, LimitLaw, check_conditions, mills_bounds_check
from .stein import SteinSolution, solution_bounds_check, stein_residual, stein_solution, tilt, zeta
from .verify import RangeSpec, RatioCurve, ScalingFit, fit_exponent, ratio_curve, theorem2_range_check

__version__ = "0.1.0"

__all__ = [
    "AmbiguousMaximizer", "BoundViolation", "ConditionError", "QuadratureError", "StateSpaceOverflow",
    "ConditionReport", "DriftFunction", "LimitLaw", "check_conditions", "mills_bounds_check",
    "SteinSolution", "solution_bounds_check", "stein_residual", "stein_solution", "tilt", "zeta",
    "RangeSpec", "RatioCurve", "ScalingFit", "fit_exponent", "ratio_curve", "theorem2_range_check",
]
