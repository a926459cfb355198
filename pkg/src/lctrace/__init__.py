"""Trust-region method with adaptive contraction for nonconvex objectives over polyhedra."""

from .lc_trace import ConstantsLedger, SolverConfig, finalize_ledger, run_first_order
from .problem import Estimates, ObjectiveModel, Polyhedron, ProblemInstance, load_instance
from .second_order import SecondOrderConfig, reduction_check, run_second_order
from .stationarity import chi, is_approx_stationary, psi
from .subproblem import QuadraticModel, SubproblemSolution, solve_qk, solve_qk_lambda

__version__ = "0.1.0"

__all__ = [
    "ConstantsLedger",
    "Estimates",
    "ObjectiveModel",
    "Polyhedron",
    "ProblemInstance",
    "QuadraticModel",
    "SecondOrderConfig",
    "SolverConfig",
    "SubproblemSolution",
    "chi",
    "finalize_ledger",
    "is_approx_stationary",
    "load_instance",
    "psi",
    "reduction_check",
    "run_first_order",
    "run_second_order",
    "solve_qk",
    "solve_qk_lambda",
]
