"""Matrix form of a linearized problem plus outer-approximation cuts for cones."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import sparse

from ..qcqp.problem import EQ, GE, LE, Cone, QcqpProblem


@dataclass
class Cut:
    cone: str
    coefs: dict[str, float]  # sum(coefs * x) <= 0


def cone_cut(cone: Cone, x: Mapping[str, float]) -> Cut | None:
    """Supporting hyperplane of the cone through the ray nearest in angle to ``x``.

    Uses ``||(2a, 2b, c - d)|| <= c + d`` linearized at ``x``; returns None at
    the apex where the gradient is undefined.
    """
    a0 = x[cone.a]
    b0 = x[cone.b] if cone.b else 0.0
    c0, d0 = x[cone.c], x[cone.d]
    n0 = math.sqrt(4 * a0 * a0 + 4 * b0 * b0 + (c0 - d0) ** 2)
    if n0 == 0.0:
        return None
    coefs: dict[str, float] = {}

    def put(v, c):
        coefs[v] = coefs.get(v, 0.0) + c

    put(cone.a, 4 * a0 / n0)
    if cone.b:
        put(cone.b, 4 * b0 / n0)
    put(cone.c, (c0 - d0) / n0 - 1.0)
    put(cone.d, -(c0 - d0) / n0 - 1.0)
    return Cut(cone.name, coefs)


def cone_violations(problem: QcqpProblem, x: Mapping[str, float]) -> dict[str, float]:
    return {n: c.residual(x) for n, c in problem.cones.items()}


@dataclass
class MatrixForm:
    names: list[str]
    index: dict[str, int]
    c: np.ndarray
    A: sparse.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    row_names: list[str] = field(default_factory=list)

    def assignment(self, values: np.ndarray) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, values)}

    def vector(self, x: Mapping[str, float]) -> np.ndarray:
        return np.array([x[n] for n in self.names], dtype=float)


def to_matrix(problem: QcqpProblem, cuts: list[Cut] = ()) -> MatrixForm:
    if not problem.is_linearized():
        raise ValueError("problem still holds unrelaxed products; apply the reformulation first")
    names = problem.ordered_variables()
    index = {n: i for i, n in enumerate(names)}
    c = np.zeros(len(names))
    for v, coef in problem.objective.items():
        c[index[v]] += coef
    rows_i, cols, vals, lo, hi, rnames = [], [], [], [], [], []
    r = 0
    for rn in problem.ordered_rows():
        row = problem.rows[rn]
        for v, coef in row.coefs.items():
            rows_i.append(r)
            cols.append(index[v])
            vals.append(coef)
        lo.append(row.rhs if row.sense in (GE, EQ) else -np.inf)
        hi.append(row.rhs if row.sense in (LE, EQ) else np.inf)
        rnames.append(rn)
        r += 1
    for k, cut in enumerate(cuts):
        for v, coef in cut.coefs.items():
            rows_i.append(r)
            cols.append(index[v])
            vals.append(coef)
        lo.append(-np.inf)
        hi.append(0.0)
        rnames.append(f"cut.{k}.{cut.cone}")
        r += 1
    A = sparse.csr_matrix((vals, (rows_i, cols)), shape=(r, len(names)))
    var = [problem.variables[n] for n in names]
    return MatrixForm(
        names=names, index=index, c=c, A=A, row_lo=np.array(lo, dtype=float),
        row_hi=np.array(hi, dtype=float),
        lb=np.array([v.lb for v in var], dtype=float), ub=np.array([v.ub for v in var], dtype=float),
        integrality=np.array([1 if v.is_integer else 0 for v in var], dtype=np.uint8),
        row_names=rnames,
    )
