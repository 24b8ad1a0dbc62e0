"""MPS export with a cone/quadratic sidecar, and the external-solver file bridge.

Sidecar grammar, one record per line::

    CONE <name> <P> <Q|-> <l> <v>      # P^2 + Q^2 <= l * v
    QUAD <name> <x> <y> <coef>          # coef * x * y added to the objective
    OBJCONST <value>

Solution files hold ``NAME VALUE`` per line; lines starting with ``#`` are ignored.
"""
from __future__ import annotations

import math
import shlex
import subprocess
import tempfile
import time
from pathlib import Path
from typing import Mapping

from ..qcqp.problem import EQ, GE, LE, QcqpProblem, evaluate_objective
from .base import FEASIBLE, INFEASIBLE, Limits, SolveResult, SolverError

OBJ_ROW = "COST"
_SENSE = {LE: "L", GE: "G", EQ: "E"}


def _line(*fields: str) -> str:
    # aligned like fixed MPS, but wide enough for canonical names
    return "    " + "  ".join(f"{f:<24}" for f in fields).rstrip()


def _num(x: float) -> str:
    return repr(float(x))


def export_problem(problem: QcqpProblem, path: str | Path) -> tuple[Path, Path]:
    """Write ``path`` (MPS) and ``path + '.cones'`` (sidecar); return both paths."""
    path = Path(path)
    names = problem.ordered_variables()
    rows = problem.ordered_rows()
    by_var: dict[str, list[tuple[str, float]]] = {n: [] for n in names}
    for v, c in sorted(problem.objective.items()):
        if c != 0.0:
            by_var[v].append((OBJ_ROW, c))
    for rn in rows:
        for v, c in sorted(problem.rows[rn].coefs.items()):
            by_var[v].append((rn, c))
    out = [f"NAME          {problem.name}", "ROWS", f" N  {OBJ_ROW}"]
    out += [f" {_SENSE[problem.rows[rn].sense]}  {rn}" for rn in rows]
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for n in names:
        is_int = problem.variables[n].is_integer
        if is_int != in_int:
            tag = "'INTORG'" if is_int else "'INTEND'"
            out.append(_line(f"MARKER{marker:04d}", "'MARKER'", tag))
            marker += 1
            in_int = is_int
        entries = by_var[n] or [(OBJ_ROW, 0.0)]
        for rn, c in entries:
            out.append(_line(n, rn, _num(c)))
    if in_int:
        out.append(_line(f"MARKER{marker:04d}", "'MARKER'", "'INTEND'"))
    out.append("RHS")
    for rn in rows:
        rhs = problem.rows[rn].rhs
        if rhs != 0.0:
            out.append(_line("RHS", rn, _num(rhs)))
    out.append("BOUNDS")
    for n in names:
        v = problem.variables[n]
        if v.kind == "B" and v.lb == 0.0 and v.ub == 1.0:
            out.append(" BV " + _line("BND", n).strip())
            continue
        if v.lb == v.ub:
            out.append(" FX " + _line("BND", n, _num(v.lb)).strip())
            continue
        if math.isinf(v.lb) and math.isinf(v.ub):
            out.append(" FR " + _line("BND", n).strip())
            continue
        if math.isinf(v.lb):
            out.append(" MI " + _line("BND", n).strip())
        elif v.lb != 0.0 or v.kind == "I":
            out.append(" LO " + _line("BND", n, _num(v.lb)).strip())
        if not math.isinf(v.ub):
            out.append(" UP " + _line("BND", n, _num(v.ub)).strip())
        elif v.kind == "I":
            out.append(" PL " + _line("BND", n).strip())
    out.append("ENDATA")
    path.write_text("\n".join(out) + "\n")

    side = Path(str(path) + ".cones")
    lines = [f"CONE {c.name} {c.a} {c.b or '-'} {c.c} {c.d}" for _, c in sorted(problem.cones.items())]
    lines += [f"QUAD {t.name} {t.x} {t.y} {_num(t.coef)}"
              for _, t in sorted(problem.bilinear.items()) if not t.relaxed]
    lines.append(f"OBJCONST {_num(problem.objective_constant)}")
    side.write_text("\n".join(lines) + "\n")
    return path, side


def write_solution(x: Mapping[str, float], path: str | Path) -> None:
    Path(path).write_text("".join(f"{n} {_num(v)}\n" for n, v in x.items()))


def import_solution(path: str | Path, problem: QcqpProblem) -> dict[str, float]:
    """Read ``NAME VALUE`` lines and map them onto the problem's variables.

    Every variable must appear exactly once and no unknown names are allowed.
    """
    x: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolverError(f"{path}:{lineno}: expected 'NAME VALUE'")
        name, val = parts
        if name not in problem.variables:
            raise SolverError(f"{path}:{lineno}: unknown variable {name!r}")
        if name in x:
            raise SolverError(f"{path}:{lineno}: duplicate variable {name!r}")
        x[name] = float(val)
    missing = sorted(set(problem.variables) - set(x))
    if missing:
        raise SolverError(f"solution misses {len(missing)} variables, e.g. {missing[0]!r}")
    return x


def solve_external(problem: QcqpProblem, command: str, limits: Limits = Limits()) -> SolveResult:
    """Run ``<command> <mps> <sidecar> <solution>`` and import the solution file."""
    t0 = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="synergy-ext-") as tmp:
        mps, side = export_problem(problem, Path(tmp) / "problem.mps")
        sol = Path(tmp) / "solution.txt"
        argv = shlex.split(command) + [str(mps), str(side), str(sol)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=limits.time_limit)
        except subprocess.TimeoutExpired:
            raise SolverError(f"external solver timed out after {limits.time_limit}s") from None
        if proc.returncode != 0 or not sol.exists():
            if "infeasible" in (proc.stdout + proc.stderr).lower():
                return SolveResult(INFEASIBLE, {}, math.inf, math.inf, wall_time=time.monotonic() - t0)
            raise SolverError(f"external solver failed ({proc.returncode}): {proc.stderr.strip()[:500]}")
        x = import_solution(sol, problem)
    obj = evaluate_objective(problem, x)
    return SolveResult(FEASIBLE, x, obj, -math.inf, wall_time=time.monotonic() - t0,
                       message="bound not reported by external solver")
