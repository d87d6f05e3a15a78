"""Quasi-optimal Crouzeix-Raviart discretization of the Poisson problem with
H^-1 sources, hierarchical a posteriori error estimators and adaptive
newest-vertex-bisection refinement on the unit square."""
from .driver import RunConfig, dorfler_mark, run
from .estimator import (
    EstimatorReport,
    combine,
    estimate,
    eta_cr,
    eta_crtilde,
    exact_error,
    ncf_avg,
    ncf_jump,
    patch_residual_norm,
    surrogate_osc,
)
from .fe_spaces import ConformingFunction, CrFunction, interpolate_cr
from .mesh import Mesh, MeshError, RefinementError, refine, uniform_refine, unit_square_initial
from .problem import ExactSolution, SourceTerm, apply, benchmark
from .solver import SolverError, assemble, solve, solve_problem
from .transfer import average_acr, smooth_ecr

__version__ = "0.1.0"
