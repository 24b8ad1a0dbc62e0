"""Mixed-integer solve contract with interchangeable backends.

``backend`` is ``"highs"`` (default, HiGHS plus cone cuts), ``"bnb"`` (the
bundled reference branch-and-bound) or ``"external:<command>"``.
"""
from __future__ import annotations

from ..qcqp.problem import QcqpProblem
from .base import (FEASIBLE, INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, Limits, SolveResult,
                   SolverError)
from .bnb import branch_and_bound
from .highs import lp_relax_with_cone_cuts, solve_highs
from .mps import export_problem, import_solution, solve_external, write_solution


def solve(problem: QcqpProblem, limits: Limits = Limits(), backend: str = "highs",
          pool: list | None = None) -> SolveResult:
    """``pool`` is an optional cone-cut pool reused across calls (default backend only)."""
    if backend in ("highs", "internal"):
        return solve_highs(problem, limits, pool)
    if backend == "bnb":
        return branch_and_bound(problem, limits)
    if backend.startswith("external:"):
        return solve_external(problem, backend.split(":", 1)[1], limits)
    raise SolverError(f"unknown solver backend {backend!r}")


__all__ = [
    "FEASIBLE", "INFEASIBLE", "ITERATION_LIMIT", "OPTIMAL", "UNBOUNDED", "Limits", "SolveResult",
    "SolverError", "branch_and_bound", "export_problem", "import_solution", "lp_relax_with_cone_cuts",
    "solve", "solve_external", "solve_highs", "write_solution",
]
