"""Reference branch-and-bound: best-bound node selection, most-fractional branching.

Node relaxations are LPs with the shared cone-cut pool; the pool only holds
supporting hyperplanes so it is valid at every node.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

from ..qcqp.problem import QcqpProblem
from .base import FEASIBLE, INFEASIBLE, ITERATION_LIMIT, OPTIMAL, Limits, SolveResult
from .highs import _max_violation, lp_relax_with_cone_cuts


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    fixings: tuple  # ((var, lb, ub), ...)


def _node_problem_bounds(problem: QcqpProblem, fixings) -> dict[str, tuple[float, float]]:
    out: dict[str, tuple[float, float]] = {}
    for var, lo, hi in fixings:
        plo, phi = out.get(var, (problem.variables[var].lb, problem.variables[var].ub))
        out[var] = (max(plo, lo), min(phi, hi))
    return out


def _solve_node(problem: QcqpProblem, fixings, cuts, limits):
    bounds = _node_problem_bounds(problem, fixings)
    saved = {}
    for var, (lo, hi) in bounds.items():
        if lo > hi:
            return math.inf, {}, cuts
        v = problem.variables[var]
        saved[var] = (v.lb, v.ub)
        v.lb, v.ub = lo, hi
    try:
        bound, x, cuts, _ = lp_relax_with_cone_cuts(problem, limits, cuts)
    finally:
        for var, (lo, hi) in saved.items():
            problem.variables[var].lb, problem.variables[var].ub = lo, hi
    return bound, x, cuts


def branch_and_bound(problem: QcqpProblem, limits: Limits = Limits()) -> SolveResult:
    t0 = time.monotonic()
    int_vars = [n for n in problem.ordered_variables() if problem.variables[n].is_integer]
    order = {n: i for i, n in enumerate(int_vars)}
    cuts: list = []
    incumbent, inc_obj = None, math.inf
    seq = 0
    nodes = 0
    trace: list[dict] = []
    root_bound, x, cuts = _solve_node(problem, (), cuts, limits)
    if math.isinf(root_bound):
        return SolveResult(INFEASIBLE, {}, math.inf, math.inf, 1, time.monotonic() - t0)
    heap = [(_Node(root_bound, seq, ()), x)]
    global_bound = root_bound
    status = OPTIMAL
    while heap:
        node, x = heapq.heappop(heap)
        global_bound = node.bound
        if incumbent is not None and inc_obj - global_bound <= limits.gap_tol * max(1.0, abs(inc_obj)):
            global_bound = min(global_bound, inc_obj)
            break
        nodes += 1
        if nodes > limits.node_limit or time.monotonic() - t0 > limits.time_limit:
            status = FEASIBLE if incumbent is not None else ITERATION_LIMIT
            heapq.heappush(heap, (node, x))
            break
        # most fractional, ties to the lowest canonical index
        frac = [(abs(x[n] - math.floor(x[n]) - 0.5), order[n], n) for n in int_vars
                if abs(x[n] - round(x[n])) > limits.int_tol]
        if not frac:
            if node.bound < inc_obj:
                incumbent, inc_obj = x, node.bound
            trace.append({"node": nodes, "bound": node.bound, "incumbent": inc_obj})
            continue
        _, _, var = min(frac)
        val = x[var]
        for lo, hi in ((-math.inf, math.floor(val)), (math.ceil(val), math.inf)):
            child = node.fixings + ((var, lo, hi),)
            b, cx, cuts = _solve_node(problem, child, cuts, limits)
            if math.isinf(b) or (incumbent is not None
                                 and b >= inc_obj - limits.gap_tol * max(1.0, abs(inc_obj))):
                continue
            seq += 1
            heapq.heappush(heap, (_Node(b, seq, child), cx))
        trace.append({"node": nodes, "bound": node.bound, "incumbent": inc_obj})
    else:
        global_bound = inc_obj
    if incumbent is None:
        st = INFEASIBLE if status == OPTIMAL else ITERATION_LIMIT
        return SolveResult(st, {}, math.inf, global_bound, nodes, time.monotonic() - t0, trace=trace)
    if heap and status == OPTIMAL:
        global_bound = min(global_bound, heap[0][0].bound)
    # snap integers
    x = dict(incumbent)
    for n in int_vars:
        x[n] = float(round(x[n]))
    msg = f"max cone violation {_max_violation(problem, x):.2e}" if problem.cones else ""
    return SolveResult(status, x, inc_obj, min(global_bound, inc_obj), nodes,
                       time.monotonic() - t0, trace=trace, message=msg)

