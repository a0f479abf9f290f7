"""Adaptive P1 finite elements for 2D elliptic problems with recovery-based error estimators."""
from .adapt import (AdaptiveConfig, AdaptiveResult, ConvergenceRecord, RateFit, adaptive_solve, fit_geometric,
                    fit_rate, mark_E, mark_R)
from .estimate import Estimate, effectivity, improved_indicator, oscillation, residual_indicator, zz_indicator
from .fem import CoefficientField, FEFunction, energy_error, solve, solve_cg
from .mesh import Mesh, build_mesh, is_conforming, min_angle, refine, uniform_refine
from .problems import REGISTRY, ProblemSpec, get_problem
from .recovery import RecoveredGradient, recover

__all__ = [
    "AdaptiveConfig", "AdaptiveResult", "CoefficientField", "ConvergenceRecord", "Estimate", "FEFunction", "Mesh",
    "ProblemSpec", "REGISTRY", "RateFit", "RecoveredGradient", "adaptive_solve", "build_mesh", "effectivity",
    "energy_error", "fit_geometric", "fit_rate", "get_problem", "improved_indicator", "is_conforming", "mark_E",
    "mark_R", "min_angle", "oscillation", "recover", "refine", "residual_indicator", "solve", "solve_cg",
    "uniform_refine", "zz_indicator",
]
