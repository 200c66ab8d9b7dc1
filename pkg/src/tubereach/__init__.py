"""Guaranteed polytopic underapproximations of stochastic reach sets for
linear time-varying Gaussian systems, with open-loop controller synthesis
and cross-threshold interpolation."""

from .geometry import (DirectionSet, HPolytope, VPolytope, box_polytope,
                       minkowski_interpolate, spread_directions)
from .sysmodel import (GaussianDisturbance, StochasticLTVSystem, TargetTube,
                       concat_matrices, state_mean_cov)
from .gaussian import (MvnBox, PwaQuantile, build_pwa_quantile,
                       genz_mvn_probability, normal_cdf, normal_quantile)
from .chance import (AnchorResult, LineSearchResult, build_risk_lp,
                     solve_anchor_cheby, solve_anchor_xmax, solve_line_search)
from .lpsolve import LinearProgram, LpSolution, simplex_solve, solve_lp

__version__ = "0.1.0"

__all__ = [
    "DirectionSet", "HPolytope", "VPolytope", "box_polytope",
    "minkowski_interpolate", "spread_directions",
    "GaussianDisturbance", "StochasticLTVSystem", "TargetTube",
    "concat_matrices", "state_mean_cov",
    "MvnBox", "PwaQuantile", "build_pwa_quantile", "genz_mvn_probability",
    "normal_cdf", "normal_quantile",
    "AnchorResult", "LineSearchResult", "build_risk_lp",
    "solve_anchor_cheby", "solve_anchor_xmax", "solve_line_search",
    "LinearProgram", "LpSolution", "simplex_solve", "solve_lp",
    "__version__",
]
