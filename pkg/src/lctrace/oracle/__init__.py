"""Independent oracles and budget evaluators used to verify the solver."""

from .budgets import ComplexityBudget, evaluate_budgets
from .derivatives import finite_difference_check
from .grid import BACKEND, GridResult, GridTooLarge, grid_minimize, grid_minimize_quadratic
from .scaling import scaling_fit

__all__ = [
    "BACKEND",
    "ComplexityBudget",
    "GridResult",
    "GridTooLarge",
    "evaluate_budgets",
    "finite_difference_check",
    "grid_minimize",
    "grid_minimize_quadratic",
    "scaling_fit",
]
