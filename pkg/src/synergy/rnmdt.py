"""Radix-discretization relaxation of bilinear terms and exact integer products.

A product ``x*y`` with box-bounded factors is replaced by a linear expression
over binary digits of the normalized ``x`` plus a McCormick envelope on the
residual digit. Precision ``vartheta <= 0`` sets the number of digits; at
``vartheta = 0`` the construction is the plain McCormick envelope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .qcqp.problem import (BINARY, EQ, GE, LE, BilinearTerm, IntegerProduct, ProblemError,
                           QcqpProblem)


class RnmdtError(ProblemError):
    pass


@dataclass
class RnmdtArtifacts:
    term: BilinearTerm
    vartheta: int
    x_bounds: tuple[float, float]
    y_bounds: tuple[float, float]
    binaries: list[str] = field(default_factory=list)
    yhat: list[str] = field(default_factory=list)
    du: str = ""
    dw: str = ""
    rows: list[str] = field(default_factory=list)

    @property
    def digits(self) -> list[int]:
        return list(range(self.vartheta, 0))

    def error_bound(self) -> float:
        (xl, xu), (yl, yu) = self.x_bounds, self.y_bounds
        return (xu - xl) * (yu - yl) * 2.0 ** self.vartheta / 4.0


@dataclass
class IntegerEncoding:
    product: IntegerProduct
    k1: int
    k2: int
    coefficients: list[int]
    binaries: list[str] = field(default_factory=list)
    nhat: list[str] = field(default_factory=list)
    rows: list[str] = field(default_factory=list)

    @property
    def max_value(self) -> int:
        return sum(self.coefficients)


def _finite_bounds(problem: QcqpProblem, name: str) -> tuple[float, float]:
    v = problem.variables[name]
    if not (math.isfinite(v.lb) and math.isfinite(v.ub)):
        raise RnmdtError(f"variable {name} must be bounded to be discretized")
    return v.lb, v.ub


def relax_bilinear(problem: QcqpProblem, term: BilinearTerm, vartheta: int) -> RnmdtArtifacts:
    """Replace ``term.coef * x * y`` in the objective by its discretized relaxation."""
    if int(vartheta) != vartheta or vartheta > 0:
        raise RnmdtError(f"precision must be a non-positive integer, got {vartheta}")
    if term.relaxed:
        raise RnmdtError(f"term {term.name} already relaxed")
    vartheta = int(vartheta)
    xl, xu = _finite_bounds(problem, term.x)
    yl, yu = _finite_bounds(problem, term.y)
    art = RnmdtArtifacts(term, vartheta, (xl, xu), (yl, yu))
    owner, base, step = term.owner, term.name, 2.0 ** vartheta
    dx = xu - xl

    art.du = problem.add_var(("rnmdt", base, "du"), owner, 0.0, step)
    art.dw = problem.add_var(("rnmdt", base, "dw"), owner, min(0.0, yl * step), max(0.0, yu * step))
    expand = {term.x: 1.0, art.du: -dx}
    for e in art.digits:
        z = problem.add_var(("rnmdt", base, "z", e), owner, kind=BINARY)
        yh = problem.add_var(("rnmdt", base, "yhat", e), owner, min(0.0, yl), max(0.0, yu))
        art.binaries.append(z)
        art.yhat.append(yh)
        expand[z] = -dx * 2.0 ** e
        # yhat = y * z at binary z
        art.rows += [
            problem.add_row(f"{base}.yhat_lo.{e}", {yh: 1.0, z: -yl}, GE, 0.0, "rnmdt", owner),
            problem.add_row(f"{base}.yhat_hi.{e}", {yh: 1.0, z: -yu}, LE, 0.0, "rnmdt", owner),
            problem.add_row(f"{base}.rest_lo.{e}", {term.y: 1.0, yh: -1.0, z: yl}, GE, yl, "rnmdt", owner),
            problem.add_row(f"{base}.rest_hi.{e}", {term.y: 1.0, yh: -1.0, z: yu}, LE, yu, "rnmdt", owner),
        ]
    art.rows.append(problem.add_row(f"{base}.expand", expand, EQ, xl, "rnmdt", owner))
    # McCormick on dw = y * du over du in [0, step]
    art.rows += [
        problem.add_row(f"{base}.dw_a", {art.dw: 1.0, term.y: -step, art.du: -yu}, GE, -step * yu, "rnmdt", owner),
        problem.add_row(f"{base}.dw_b", {art.dw: 1.0, term.y: -step, art.du: -yl}, LE, -step * yl, "rnmdt", owner),
        problem.add_row(f"{base}.dw_c", {art.dw: 1.0, art.du: -yl}, GE, 0.0, "rnmdt", owner),
        problem.add_row(f"{base}.dw_d", {art.dw: 1.0, art.du: -yu}, LE, 0.0, "rnmdt", owner),
    ]
    c = term.coef
    if xl != 0.0:
        problem.add_objective(term.y, c * xl)
    for e, yh in zip(art.digits, art.yhat):
        problem.add_objective(yh, c * dx * 2.0 ** e)
    problem.add_objective(art.dw, c * dx)
    term.relaxed = True
    return art


def encoding_coefficients(M: int) -> tuple[int, int, list[int]]:
    """(k1, k2, digit weights) for integers in [0, M].

    Weights are 2^(e-1) for e < k2 and M - 2^(k2-1) + 1 for the last digit,
    so that the all-ones pattern encodes exactly M.
    """
    if int(M) != M or M < 1:
        raise RnmdtError("M must be an integer >= 1")
    k1 = int(math.floor(math.log2(M + 1)))
    k2 = int(math.ceil(math.log2(M + 1)))
    # guard floating log2 on exact powers of two
    while 2 ** k1 > M + 1:
        k1 -= 1
    while 2 ** k2 < M + 1:
        k2 += 1
    coefs = [2 ** (e - 1) for e in range(1, k2)] + [M - 2 ** (k2 - 1) + 1]
    return k1, k2, coefs


def reformulate_integer_product(problem: QcqpProblem, prod: IntegerProduct) -> IntegerEncoding:
    """Exact linear model of ``w = mu * n`` through a binary expansion of n."""
    if prod.reformulated:
        raise RnmdtError(f"product {prod.name} already reformulated")
    k1, k2, coefs = encoding_coefficients(prod.M)
    enc = IntegerEncoding(prod, k1, k2, coefs)
    owner, base = prod.owner, prod.name
    n_row = {prod.n: 1.0}
    w_row = {prod.w: 1.0}
    for e, coef in enumerate(coefs, start=1):
        z = problem.add_var(("rnmdt", base, "z", e), owner, kind=BINARY)
        nh = problem.add_var(("rnmdt", base, "nhat", e), owner, 0.0, 1.0)
        enc.binaries.append(z)
        enc.nhat.append(nh)
        n_row[z] = -float(coef)
        w_row[nh] = -float(coef)
        enc.rows += [
            problem.add_row(f"{base}.nhat_le_z.{e}", {nh: 1.0, z: -1.0}, LE, 0.0, "intprod", owner),
            problem.add_row(f"{base}.mu_ge_nhat.{e}", {prod.mu: 1.0, nh: -1.0}, GE, 0.0, "intprod", owner),
            problem.add_row(f"{base}.mu_nhat_gap.{e}", {prod.mu: 1.0, nh: -1.0, z: 1.0}, LE, 1.0,
                            "intprod", owner),
        ]
    enc.rows.append(problem.add_row(f"{base}.n_digits", n_row, EQ, 0.0, "intprod", owner))
    enc.rows.append(problem.add_row(f"{base}.w_digits", w_row, EQ, 0.0, "intprod", owner))
    prod.reformulated = True
    return enc


def encode_integer(n: int, coefs: list[int]) -> list[int]:
    """Greedy digit pattern for ``n`` under ``coefs`` (last digit first)."""
    if not 0 <= n <= sum(coefs):
        raise RnmdtError(f"{n} not encodable")
    last = coefs[-1]
    bits = [0] * len(coefs)
    rest = n
    if rest > sum(coefs[:-1]):
        bits[-1] = 1
        rest -= last
    for i in range(len(coefs) - 2, -1, -1):
        if rest >= coefs[i]:
            bits[i] = 1
            rest -= coefs[i]
    assert rest == 0
    return bits


def reconstruct_value(art: RnmdtArtifacts, x: Mapping[str, float]) -> tuple[float, float, float]:
    """(reconstructed x, surrogate product, |surrogate - x*y|)."""
    names = [art.du, art.dw, art.term.x, art.term.y, *art.binaries, *art.yhat]
    missing = [n for n in names if n not in x]
    if missing:
        raise RnmdtError(f"assignment incomplete, missing {missing[0]}")
    xl, dx = art.x_bounds[0], art.x_bounds[1] - art.x_bounds[0]
    frac = sum(2.0 ** e * x[z] for e, z in zip(art.digits, art.binaries)) + x[art.du]
    x_rec = xl + dx * frac
    y = x[art.term.y]
    est = y * xl + dx * (sum(2.0 ** e * x[h] for e, h in zip(art.digits, art.yhat)) + x[art.dw])
    return x_rec, est, abs(est - x[art.term.x] * y)


@dataclass
class Reformulation:
    vartheta: int
    bilinear: dict[str, RnmdtArtifacts]
    integer: dict[str, IntegerEncoding]


def apply_all(problem: QcqpProblem, vartheta: int) -> Reformulation:
    """Relax every registered bilinear term and encode every integer product, in place.

    A term's own ``precision`` overrides the global ``vartheta``.
    """
    out = Reformulation(vartheta, {}, {})
    for name in sorted(problem.bilinear):
        term = problem.bilinear[name]
        if not term.relaxed:
            prec = vartheta if term.precision is None else term.precision
            out.bilinear[name] = relax_bilinear(problem, term, prec)
    for name in sorted(problem.int_products):
        prod = problem.int_products[name]
        if not prod.reformulated:
            out.integer[name] = reformulate_integer_product(problem, prod)
    if not problem.is_linearized():
        raise RnmdtError("unregistered or unrelaxed product remains after reformulation")
    return out
