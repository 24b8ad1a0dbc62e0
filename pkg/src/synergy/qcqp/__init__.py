from .problem import (BINARY, CONTINUOUS, EQ, GE, INF, INTEGER, LE, BilinearTerm, Cone, Coupling,
                      Handles, IntegerProduct, ProblemError, QcqpProblem, Row, Variable, Violation,
                      check_feasibility, evaluate_objective, var_name)

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "INF", "INTEGER", "LE", "BilinearTerm", "Cone", "Coupling",
    "Handles", "IntegerProduct", "ProblemError", "QcqpProblem", "Row", "Variable", "Violation",
    "check_feasibility", "evaluate_objective", "var_name",
]


def assemble_centralized(scenario, vartheta=None):
    """See :func:`synergy.qcqp.assemble.assemble_centralized`."""
    from .assemble import assemble_centralized as _impl

    return _impl(scenario, vartheta)


__all__.append("assemble_centralized")
