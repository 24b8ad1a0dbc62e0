from __future__ import annotations

from dataclasses import dataclass, field

OPTIMAL, FEASIBLE, INFEASIBLE, ITERATION_LIMIT, UNBOUNDED = (
    "optimal", "feasible", "infeasible", "iteration-limit", "unbounded")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Limits:
    time_limit: float = 60.0
    node_limit: int = 100_000
    gap_tol: float = 1e-6
    int_tol: float = 1e-6
    cone_tol: float = 1e-6
    max_cut_rounds: int = 200


@dataclass
class SolveResult:
    status: str
    assignment: dict[str, float]
    objective: float
    bound: float
    nodes: int = 0
    wall_time: float = 0.0
    cut_rounds: int = 0
    trace: list[dict] = field(default_factory=list)
    message: str = ""

    @property
    def gap(self) -> float:
        if self.status in (INFEASIBLE, UNBOUNDED):
            return float("inf")
        return max(0.0, (self.objective - self.bound) / max(1.0, abs(self.objective)))

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)
