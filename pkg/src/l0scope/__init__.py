"""Solve, enumerate and certify l0-composite minimization problems.

    f(x) = f1(x) + weight * ||G x||_0 + delta_X(x)

with convex quadratic f1, linear G and X either R^N or a box, plus the
rank-regularized counterpart where criticality no longer implies local
minimality.
"""
from .certify import (
    CriticalityCertificate,
    certify_critical,
    support_stability_radius,
    verify_theorem_crlo,
)
from .io import load_problem, parse_problem
from .landscape import (
    EnumerateOptions,
    LandscapeReport,
    enumerate_landscape,
    verify_local_by_sampling,
)
from .problem import (
    ConstraintSet,
    LinearMap,
    ProblemInstance,
    QuadraticTerm,
    Support,
    evaluate,
    gradient_f1,
    least_squares_problem,
    support_of,
)
from .rank import (
    RankProblem,
    certify_critical_rank,
    contrast_report,
    refute_local_min_rank,
)
from .solvers import prox_l0, solve_iht, solve_pd
from .subproblem import SolverOptions, nullspace_of, solve_subproblem

__version__ = "0.1.0"
