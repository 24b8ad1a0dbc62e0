"""Solver-agnostic mixed-integer problem with rotated cones and product registries."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping

INF = math.inf

CONTINUOUS, BINARY, INTEGER = "C", "B", "I"
LE, GE, EQ = "<=", ">=", "=="


class ProblemError(ValueError):
    pass


@dataclass
class Variable:
    name: str
    kind: str
    lb: float
    ub: float
    owner: str
    key: tuple

    @property
    def is_integer(self) -> bool:
        return self.kind in (BINARY, INTEGER)


@dataclass
class Row:
    """Linear row ``sum(coefs[v] * v) <sense> rhs``."""

    name: str
    coefs: dict[str, float]
    sense: str
    rhs: float
    family: str
    owner: str | None

    def activity(self, x: Mapping[str, float]) -> float:
        return sum(c * x[v] for v, c in self.coefs.items())

    def violation(self, x: Mapping[str, float]) -> float:
        lhs = self.activity(x)
        if self.sense == LE:
            return max(0.0, lhs - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class Cone:
    """Rotated cone ``a^2 + b^2 <= c * d`` with c, d >= 0. ``b`` may be absent."""

    name: str
    a: str
    b: str | None
    c: str
    d: str
    family: str
    owner: str

    def variables(self) -> tuple[str, ...]:
        return tuple(v for v in (self.a, self.b, self.c, self.d) if v is not None)

    def residual(self, x: Mapping[str, float]) -> float:
        """(a^2 + b^2 - c*d) / max(1, c*d); positive means violated."""
        a = x[self.a]
        b = x[self.b] if self.b else 0.0
        cd = x[self.c] * x[self.d]
        return (a * a + b * b - cd) / max(1.0, cd)


@dataclass
class BilinearTerm:
    """``coef * x * y`` in the objective; ``x`` is the variable that gets discretized."""

    name: str
    x: str
    y: str
    coef: float
    owner: str
    precision: int | None = None
    relaxed: bool = False


@dataclass
class IntegerProduct:
    """``w = mu * n`` with mu in [0, 1] and integer n in [0, M]."""

    name: str
    mu: str
    n: str
    w: str
    M: int
    owner: str
    reformulated: bool = False


@dataclass
class Coupling:
    """Equality ``up == down`` between variables held by two different agents.

    ``family`` is "p" for energy and "d" for data couplings.
    """

    name: str
    family: str
    tau: int
    symbol: str
    up_agent: str
    up_var: str
    down_agent: str
    down_var: str


@dataclass
class QcqpProblem:
    name: str = "problem"
    variables: dict[str, Variable] = field(default_factory=dict)
    rows: dict[str, Row] = field(default_factory=dict)
    cones: dict[str, Cone] = field(default_factory=dict)
    objective: dict[str, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    bilinear: dict[str, BilinearTerm] = field(default_factory=dict)
    int_products: dict[str, IntegerProduct] = field(default_factory=dict)
    couplings: dict[str, Coupling] = field(default_factory=dict)

    # -- construction ------------------------------------------------------
    def add_var(self, key: tuple, owner: str, lb: float = 0.0, ub: float = INF,
                kind: str = CONTINUOUS) -> str:
        name = var_name(key)
        if name in self.variables:
            raise ProblemError(f"duplicate variable {name}")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub + 1e-12:
            raise ProblemError(f"variable {name}: lb {lb} > ub {ub}")
        self.variables[name] = Variable(name, kind, float(lb), float(ub), owner, key)
        return name

    def add_row(self, name: str, coefs: Mapping[str, float], sense: str, rhs: float,
                family: str, owner: str | None = None) -> str:
        if name in self.rows:
            raise ProblemError(f"duplicate row {name}")
        if sense not in (LE, GE, EQ):
            raise ProblemError(f"row {name}: bad sense {sense}")
        merged: dict[str, float] = {}
        for v, c in coefs.items():
            if v not in self.variables:
                raise ProblemError(f"row {name} references unknown variable {v}")
            merged[v] = merged.get(v, 0.0) + float(c)
        merged = {v: c for v, c in merged.items() if c != 0.0}
        if owner is None and family not in COUPLING_FAMILIES:
            owners = {self.variables[v].owner for v in merged}
            owner = owners.pop() if len(owners) == 1 else None
        self.rows[name] = Row(name, merged, sense, float(rhs), family, owner)
        return name

    def add_cone(self, name: str, a: str, b: str | None, c: str, d: str,
                 family: str, owner: str) -> str:
        for v in (a, b, c, d):
            if v is not None and v not in self.variables:
                raise ProblemError(f"cone {name} references unknown variable {v}")
        self.cones[name] = Cone(name, a, b, c, d, family, owner)
        return name

    def add_objective(self, var: str, coef: float) -> None:
        if var not in self.variables:
            raise ProblemError(f"objective references unknown variable {var}")
        self.objective[var] = self.objective.get(var, 0.0) + float(coef)

    def add_bilinear(self, name: str, x: str, y: str, coef: float, owner: str,
                     precision: int | None = None) -> BilinearTerm:
        for v in (x, y):
            var = self.variables.get(v)
            if var is None:
                raise ProblemError(f"bilinear {name} references unknown variable {v}")
        if name in self.bilinear:
            raise ProblemError(f"duplicate bilinear term {name}")
        term = BilinearTerm(name, x, y, float(coef), owner, precision)
        self.bilinear[name] = term
        return term

    def add_int_product(self, name: str, mu: str, n: str, w: str, M: int, owner: str) -> IntegerProduct:
        term = IntegerProduct(name, mu, n, w, int(M), owner)
        self.int_products[name] = term
        return term

    def add_coupling(self, coupling: Coupling) -> None:
        self.couplings[coupling.name] = coupling
        self.add_row(f"couple.{coupling.name}", {coupling.up_var: 1.0, coupling.down_var: -1.0},
                     EQ, 0.0, family=f"coupling-{coupling.family}")

    # -- queries -----------------------------------------------------------
    def ordered_variables(self) -> list[str]:
        return sorted(self.variables, key=lambda n: _sort_key(self.variables[n].key))

    def ordered_rows(self) -> list[str]:
        return sorted(self.rows)

    def agents(self) -> list[str]:
        return sorted({v.owner for v in self.variables.values()})

    def census(self) -> dict[str, int]:
        fam: dict[str, int] = {}
        for r in self.rows.values():
            fam[r.family] = fam.get(r.family, 0) + 1
        out = {
            "variables": len(self.variables),
            "binaries": sum(v.kind == BINARY for v in self.variables.values()),
            "integers": sum(v.kind == INTEGER for v in self.variables.values()),
            "rows": len(self.rows),
            "cones": len(self.cones),
            "objective_quadratics": sum(not t.relaxed for t in self.bilinear.values()),
            "integer_products": sum(not t.reformulated for t in self.int_products.values()),
        }
        out.update({f"rows:{k}": v for k, v in sorted(fam.items())})
        return out

    def is_linearized(self) -> bool:
        return all(t.relaxed for t in self.bilinear.values()) and all(
            t.reformulated for t in self.int_products.values())

    def canonical_text(self) -> str:
        """Deterministic text serialization used for hashing and diffs."""
        out = [f"NAME {self.name}"]
        for n in self.ordered_variables():
            v = self.variables[n]
            out.append(f"VAR {n} {v.kind} {_fmt(v.lb)} {_fmt(v.ub)} {v.owner}")
        for n in self.ordered_rows():
            r = self.rows[n]
            terms = " ".join(f"{_fmt(r.coefs[v])}*{v}" for v in sorted(r.coefs))
            out.append(f"ROW {n} {r.family} {r.sense} {_fmt(r.rhs)} : {terms}")
        for n in sorted(self.cones):
            c = self.cones[n]
            out.append(f"CONE {n} {c.a} {c.b or '-'} {c.c} {c.d}")
        for v in sorted(self.objective):
            out.append(f"OBJ {v} {_fmt(self.objective[v])}")
        out.append(f"OBJCONST {_fmt(self.objective_constant)}")
        for n in sorted(self.bilinear):
            t = self.bilinear[n]
            if not t.relaxed:
                out.append(f"QUAD {n} {t.x} {t.y} {_fmt(t.coef)}")
        return "\n".join(out) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


COUPLING_FAMILIES = ("coupling-p", "coupling-d")


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def var_name(key: tuple) -> str:
    """Canonical name from (module, device, symbol, tau[, sub...])."""
    module, device, symbol, *rest = key
    name = f"{module}.{device}.{symbol}"
    for part in rest:
        if part is None:
            continue
        name += f".{part}"
    return name


def _sort_key(key: tuple) -> tuple:
    return tuple((0, p, "") if isinstance(p, (int, float)) else (1, 0, str(p)) for p in key)


def evaluate_objective(problem: QcqpProblem, x: Mapping[str, float], original: bool = False) -> float:
    """Objective value at ``x``.

    With ``original=True`` relaxed bilinear terms are evaluated as true
    products ``coef*x*y`` instead of their linear surrogates.
    """
    missing = [v for v in problem.objective if v not in x]
    if missing:
        raise ProblemError(f"assignment misses {len(missing)} objective variables, e.g. {missing[0]}")
    total = problem.objective_constant
    if original:
        surrogate = _surrogate_vars(problem)
        total += sum(c * x[v] for v, c in problem.objective.items() if v not in surrogate)
        for t in problem.bilinear.values():
            total += t.coef * x[t.x] * x[t.y]
        # the surrogate rows carry the linear part of the reformulation
        for t in problem.bilinear.values():
            if t.relaxed:
                total -= _relaxed_linear_correction(problem, t, x)
        return total
    total += sum(c * x[v] for v, c in problem.objective.items())
    for t in problem.bilinear.values():
        if not t.relaxed:
            total += t.coef * x[t.x] * x[t.y]
    return total


def _surrogate_vars(problem: QcqpProblem) -> set[str]:
    return {v for v in problem.objective if v.startswith("rnmdt.")}


def _relaxed_linear_correction(problem: QcqpProblem, t: BilinearTerm, x: Mapping[str, float]) -> float:
    # the relaxed form keeps coef*y*x_l as a plain objective entry on y
    xl = problem.variables[t.x].lb
    return t.coef * xl * x[t.y]


@dataclass
class Violation:
    kind: str
    name: str
    magnitude: float


def check_feasibility(problem: QcqpProblem, x: Mapping[str, float], tol: float = 1e-6) -> list[Violation]:
    """All bound, integrality, row and cone violations larger than ``tol``."""
    out: list[Violation] = []
    for n in problem.ordered_variables():
        v = problem.variables[n]
        if n not in x:
            raise ProblemError(f"assignment misses variable {n}")
        val = x[n]
        gap = max(v.lb - val, val - v.ub, 0.0)
        if gap > tol:
            out.append(Violation("bound", n, gap))
        if v.is_integer and abs(val - round(val)) > tol:
            out.append(Violation("integrality", n, abs(val - round(val))))
    for n in problem.ordered_rows():
        viol = problem.rows[n].violation(x)
        if viol > tol:
            out.append(Violation("row", n, viol))
    for n in sorted(problem.cones):
        res = problem.cones[n].residual(x)
        if res > tol:
            out.append(Violation("cone", n, res))
    return out



@dataclass
class Handles:
    """Names created by one builder call."""

    variables: list[str] = field(default_factory=list)
    rows: list[str] = field(default_factory=list)
    cones: list[str] = field(default_factory=list)
    # (device id, tau) -> (variable, sign on the bus balance, coupling symbol, agent)
    exports: dict[tuple[str, int], tuple[str, float, str, str]] = field(default_factory=dict)

    def extend(self, other: "Handles") -> "Handles":
        self.variables += other.variables
        self.rows += other.rows
        self.cones += other.cones
        self.exports.update(other.exports)
        return self
