"""Embedded conic optimizer: interior-point SOCP engine, operator-splitting
fallback, and branch-and-bound over the tap-encoding binaries."""

from .bnb import BnbNode, branch_and_bound, branching_rule
from .settings import SolverSettings
from .socp import (
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    UNBOUNDED,
    NumericalError,
    SocpResult,
    solve_socp,
    solve_standard_form,
    standardize,
)
from .splitting import solve_standard_form_splitting

__all__ = [
    "BnbNode", "branch_and_bound", "branching_rule",
    "SolverSettings",
    "INFEASIBLE", "ITERATION_LIMIT", "OPTIMAL", "UNBOUNDED",
    "NumericalError", "SocpResult", "solve_socp", "solve_standard_form",
    "standardize", "solve_standard_form_splitting",
]
