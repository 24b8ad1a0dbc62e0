"""Default backend: HiGHS (through scipy) with an outer-approximation loop for cones."""
from __future__ import annotations

import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from ..qcqp.problem import QcqpProblem
from .base import FEASIBLE, INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, Limits, SolveResult
from .linear import Cut, MatrixForm, cone_cut, cone_violations, to_matrix


def _run(mf: MatrixForm, integer: bool, time_limit: float, gap: float,
         lb: np.ndarray | None = None, ub: np.ndarray | None = None):
    cons = [LinearConstraint(mf.A, mf.row_lo, mf.row_hi)] if mf.A.shape[0] else []
    opts = {"time_limit": max(time_limit, 1e-3), "mip_rel_gap": gap, "presolve": True}
    return milp(
        mf.c, constraints=cons,
        integrality=mf.integrality if integer else np.zeros_like(mf.integrality),
        bounds=Bounds(mf.lb if lb is None else lb, mf.ub if ub is None else ub),
        options=opts,
    )


def _new_cuts(problem: QcqpProblem, x: dict[str, float], tol: float) -> list[Cut]:
    out = []
    for name, res in sorted(cone_violations(problem, x).items()):
        if res > tol:
            cut = cone_cut(problem.cones[name], x)
            if cut is not None:
                out.append(cut)
    return out


def _repeats(new: list[Cut], pool: list[Cut]) -> bool:
    # the LP returned a point already cut off up to solver tolerance
    tail = pool[-len(new):] if len(pool) >= len(new) else []
    return bool(tail) and all(a.coefs == b.coefs for a, b in zip(new, tail))


def _max_violation(problem: QcqpProblem, x: dict[str, float]) -> float:
    v = cone_violations(problem, x)
    return max(v.values(), default=0.0)


def lp_relax_with_cone_cuts(problem: QcqpProblem, limits: Limits = Limits(),
                            cuts: list[Cut] | None = None,
                            fixed: dict[str, float] | None = None) -> tuple[float, dict[str, float], list[Cut], int]:
    """Continuous relaxation with cone cuts added until violations fall below tolerance.

    Returns (bound, assignment, cut pool, rounds). ``fixed`` pins variables
    (used to polish a mixed-integer point with its integers held).
    """
    cuts = list(cuts or [])
    deadline = time.monotonic() + limits.time_limit
    x: dict[str, float] = {}
    bound = -np.inf
    for rounds in range(limits.max_cut_rounds + 1):
        mf = to_matrix(problem, cuts)
        lb, ub = mf.lb.copy(), mf.ub.copy()
        for n, v in (fixed or {}).items():
            lb[mf.index[n]] = ub[mf.index[n]] = v
        res = _run(mf, False, deadline - time.monotonic(), limits.gap_tol, lb, ub)
        if res.status == 2:
            return np.inf, {}, cuts, rounds
        if res.status == 3:
            raise ValueError("LP relaxation is unbounded")
        if res.x is None:
            break
        x = mf.assignment(res.x)
        bound = float(res.fun) + problem.objective_constant
        new = _new_cuts(problem, x, limits.cone_tol)
        if not new or time.monotonic() > deadline or _repeats(new, cuts):
            return bound, x, cuts, rounds
        cuts.extend(new)
    return bound, x, cuts, limits.max_cut_rounds


def solve_highs(problem: QcqpProblem, limits: Limits = Limits(), pool: list[Cut] | None = None) -> SolveResult:
    """Solve with cone cuts. ``pool`` carries valid cuts between calls on the same cones;
    it is extended in place with the cuts generated here."""
    t0 = time.monotonic()
    deadline = t0 + limits.time_limit
    cuts: list[Cut] = list(pool or [])
    rounds = 0
    if problem.cones:
        _, _, cuts, rounds = lp_relax_with_cone_cuts(problem, limits, cuts)
    has_int = any(v.is_integer for v in problem.variables.values())
    best_x: dict[str, float] | None = None
    best_obj = np.inf
    bound = -np.inf
    nodes = 0
    status = ITERATION_LIMIT
    trace = []
    while rounds <= limits.max_cut_rounds:
        mf = to_matrix(problem, cuts)
        res = _run(mf, has_int, deadline - time.monotonic(), limits.gap_tol)
        nodes += int(getattr(res, "mip_node_count", 0) or 0)
        if res.status == 2:
            return SolveResult(INFEASIBLE, {}, np.inf, np.inf, nodes, time.monotonic() - t0, rounds,
                               message=res.message)
        if res.status == 3:
            return SolveResult(UNBOUNDED, {}, -np.inf, -np.inf, nodes, time.monotonic() - t0, rounds,
                               message=res.message)
        if res.x is None:
            break
        x = mf.assignment(res.x)
        obj = float(res.fun) + problem.objective_constant
        dual = getattr(res, "mip_dual_bound", None)
        bound = max(bound, (float(dual) + problem.objective_constant) if dual is not None and has_int else obj)
        viol = _max_violation(problem, x)
        trace.append({"round": rounds, "objective": obj, "bound": bound, "cone_violation": viol})
        if viol <= limits.cone_tol:
            best_x, best_obj = x, obj
            status = OPTIMAL if res.status == 0 else FEASIBLE
            break
        new = _new_cuts(problem, x, limits.cone_tol)
        if has_int:
            # polish with integers held to get a cone-feasible incumbent
            fixed = {n: round(x[n]) for n in mf.names if problem.variables[n].is_integer}
            pb, px, cuts, r2 = lp_relax_with_cone_cuts(problem, limits, cuts + new, fixed)
            rounds += r2
            if px and _max_violation(problem, px) <= limits.cone_tol and pb < best_obj:
                best_x, best_obj = px, pb
        else:
            cuts.extend(new)
        rounds += 1
        if best_x is not None and best_obj - bound <= limits.gap_tol * max(1.0, abs(best_obj)):
            status = OPTIMAL
            break
        if time.monotonic() > deadline:
            status = FEASIBLE if best_x is not None else ITERATION_LIMIT
            break
    if pool is not None:
        pool[:] = cuts
    if best_x is None:
        return SolveResult(ITERATION_LIMIT, {}, np.inf, bound, nodes, time.monotonic() - t0, rounds,
                           trace, "no cone-feasible point found")
    if status == ITERATION_LIMIT:
        status = FEASIBLE
    return SolveResult(status, best_x, best_obj, min(bound, best_obj), nodes,
                       time.monotonic() - t0, rounds, trace)
