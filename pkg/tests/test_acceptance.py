"""Acceptance criteria 1-10 on toy problems and the bundled 6-bus fixture.

Each test records a one-line PASS/FAIL verdict in ``conftest.ACCEPTANCE``
before asserting; the lines are printed at the end of the pytest session.
"""
import csv
import math
import random
import time

from conftest import ACCEPTANCE
from synergy.datacenter import drift_bound, drift_constant
from synergy.decomposition import DATA, ENERGY, write_trace
from synergy.powerflow import socp_exactness_gap
from synergy.qcqp.problem import INTEGER, LE, QcqpProblem, check_feasibility
from synergy.rnmdt import encode_integer, relax_bilinear, reformulate_integer_product
from synergy.simnet import (LAGRANGIAN, SHARED, Message, privacy_audit, read_log, replay,
                            scalars_per_agent, verify_chain)
from synergy.solver import solve


def verdict(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


# -- 1 ---------------------------------------------------------------------------

def _product_problem(M):
    p = QcqpProblem("intprod")
    mu = p.add_var(("t", "a", "mu"), "a", 0.0, 1.0)
    n = p.add_var(("t", "a", "n"), "a", 0.0, M, INTEGER)
    w = p.add_var(("t", "a", "w"), "a", 0.0, M)
    enc = reformulate_integer_product(p, p.add_int_product("prod", mu, n, w, M, "a"))
    return p, mu, n, w, enc


def test_integer_product_exactness():
    t0 = time.perf_counter()
    worst = 0.0
    # exhaustive: every n, several mu, and w pushed both ways by the objective
    for M in (1, 3, 5, 7):
        p, mu, n, w, _ = _product_problem(M)
        for nv in range(M + 1):
            for m in (0.0, 0.25, 0.5, 0.8, 1.0):
                p.variables[mu].lb = p.variables[mu].ub = m
                p.variables[n].lb = p.variables[n].ub = nv
                for sign in (1.0, -1.0):
                    p.objective = {w: sign}
                    worst = max(worst, abs(solve(p).assignment[w] - m * nv))
    p, mu, n, w, enc = _product_problem(500)
    rng = random.Random(2024)
    for _ in range(100):
        nv, m = rng.randint(0, 500), rng.random()
        bits = encode_integer(nv, enc.coefficients)
        x = {mu: m, n: float(nv)}
        for z, h, b in zip(enc.binaries, enc.nhat, bits):
            x[z], x[h] = float(b), m * b
        x[w] = sum(c * x[h] for c, h in zip(enc.coefficients, enc.nhat))
        # at binary digits the rows pin nhat_e = mu * z_e, so w is determined
        assert check_feasibility(p, x, 1e-12) == []
        worst = max(worst, abs(x[w] - m * nv))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    verdict(1, ok, f"integer product: max error {worst:.2e} (tol 1e-12), {elapsed:.2f} s (limit 1 s)")
    assert worst <= 1e-12
    assert elapsed < 1.0


# -- 2 ---------------------------------------------------------------------------

def _grid_oracle(steps=400):
    best = math.inf
    for i in range(steps + 1):
        x = 10.0 * i / steps
        best = min(best, -x * (10.0 - x))  # y = 10 - x is optimal for fixed x
    return best


def test_rnmdt_tightening():
    t0 = time.perf_counter()
    oracle = _grid_oracle()
    bounds = []
    for th in (0, -2, -4, -8):
        p = QcqpProblem("toy")
        x = p.add_var(("t", "a", "x"), "a", 0.0, 10.0)
        y = p.add_var(("t", "a", "y"), "a", 0.0, 10.0)
        p.add_row("sum", {x: 1.0, y: 1.0}, LE, 10.0, "toy", "a")
        relax_bilinear(p, p.add_bilinear("xy", x, y, -1.0, "a"), th)
        bounds.append(solve(p).objective)
    elapsed = time.perf_counter() - t0
    monotone = all(b1 >= b0 - 1e-9 for b0, b1 in zip(bounds, bounds[1:]))
    close = abs(bounds[-1] - oracle) <= 0.1
    ok = oracle == -25.0 and monotone and close and elapsed < 30
    verdict(2, ok, f"RNMDT bounds {[round(b, 4) for b in bounds]} vs oracle {oracle}, {elapsed:.2f} s")
    assert oracle == -25.0
    assert monotone and close
    assert elapsed < 30


# -- 3 ---------------------------------------------------------------------------

def test_distributed_gap(centralized, distributed, fixture_scenario):
    _, cres = centralized
    _, res, _, elapsed = distributed
    gap = abs(res.objective - cres.objective) / abs(cres.objective)
    ok = (gap <= 0.01 and res.gamma_p <= 1e-2 and res.gamma_d <= 1e-2 and res.rounds <= 200
          and elapsed < 600)
    verdict(3, ok, f"gap {gap:.3%} (dist {res.objective:.2f}, cent {cres.objective:.2f}), "
                   f"gamma_p {res.gamma_p:.1e}, gamma_d {res.gamma_d:.1e}, {res.rounds} rounds, {elapsed:.0f} s")
    assert fixture_scenario.config.vartheta == -3 and fixture_scenario.horizon == 4
    assert gap <= 0.01
    assert res.gamma_p <= 1e-2 and res.gamma_d <= 1e-2
    assert res.rounds <= 200
    assert elapsed < 600


# -- 4 ---------------------------------------------------------------------------

def test_socp_exactness(centralized):
    model, res = centralized
    worst = socp_exactness_gap(model.problem, res.assignment)
    verdict(4, worst <= 1e-5, f"max relative cone residual {worst:.2e} (tol 1e-5)")
    assert worst <= 1e-5


# -- 5 ---------------------------------------------------------------------------

def test_drift_bound():
    rng = random.Random(5)
    worst = -math.inf
    for _ in range(10_000):
        in_cap, out_cap = rng.uniform(0.1, 20), rng.uniform(0.1, 20)
        B = drift_constant(in_cap, out_cap)
        H = rng.uniform(0, 50)
        inflow = rng.uniform(0, in_cap)
        out = rng.uniform(0, min(out_cap, H))
        share = rng.random()
        delta, bound = drift_bound(H, out * share, out * (1 - share), inflow, B)
        worst = max(worst, delta - bound)
    verdict(5, worst <= 1e-12, f"drift bound over 10^4 tuples: max(delta - bound) = {worst:.3g}")
    assert worst <= 1e-12


# -- 6 ---------------------------------------------------------------------------

def _read_trace(path):
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def test_dual_and_step_replay(distributed, fixture_scenario, tmp_path):
    model, res, log, _ = distributed
    cfg = fixture_scenario.config
    part = res.partition
    records = read_log(log)
    verify_chain(records)
    trace = _read_trace(write_trace(res.trace, tmp_path / "trace.csv"))
    K = res.rounds

    sent: dict[int, dict[tuple[str, str], float]] = {}
    flags: dict[int, dict[str, bool]] = {}
    for r in records:
        if r["kind"] == SHARED:
            sent.setdefault(r["k"], {}).update({(r["from"], s): v for s, v in zip(r["symbols"], r["values"])})
        elif r["kind"] == LAGRANGIAN:
            flags.setdefault(r["k"], {})[r["from"]] = r["flag"]

    # zeta: starts at zero, moves only in rounds whose logged flag is true
    zeta = {a: {ln.coupling: 0.0 for ln in part.links[a]} for a in part.agents}
    holds = 0
    for k in range(1, K + 1):
        xi = trace[k - 1]["xi"]
        for a in part.agents:
            if not flags[k][a]:
                holds += 1
                continue
            for ln in part.links[a]:
                m = sent[k][(a, ln.coupling)] - sent[k][(ln.neighbor_agent, ln.coupling)]
                zeta[a][ln.coupling] = zeta[a][ln.coupling] + xi * m
    zeta_ok = zeta == res.duals.zeta

    # xi and alpha from the residual column alone
    xi, step_ok = cfg.xi0, trace[0]["xi"] == cfg.xi0
    for k in range(1, K + 1):
        rr = 1.0 / math.sqrt(k)
        theta = 1.0 - 1.0 / k ** rr
        alpha = 1.0 - 1.0 / (cfg.c * k ** theta)
        g_prev, g_cur = trace[k - 1]["gamma_p"], trace[k]["gamma_p"]
        if g_cur > 1e-9 and g_prev > 1e-9:
            xi = alpha * xi * g_prev / g_cur
        step_ok &= trace[k]["xi"] == xi and trace[k]["alpha"] == alpha

    # eta: times w when every agent of the family passed, divided by w otherwise
    members = {f: [a for a in part.agents if any(ln.family == f for ln in part.links[a])] for f in (ENERGY, DATA)}
    eta = {ENERGY: cfg.eta_p, DATA: cfg.eta_d}
    eta_ok = True
    for k in range(1, K + 1):
        for f in (ENERGY, DATA):
            eta[f] = eta[f] * cfg.w if all(flags[k][a] for a in members[f]) else eta[f] / cfg.w
        eta_ok &= trace[k]["eta_p"] == eta[ENERGY] and trace[k]["eta_d"] == eta[DATA]

    # residuals recomputed from the log
    worst = 0.0
    for k in range(K + 1):
        shared = replay(records, k).shared
        gp = math.sqrt(sum((shared[(c.up_agent, n)] - shared[(c.down_agent, n)]) ** 2
                           for n, c in part.couplings.items()))
        worst = max(worst, abs(gp - trace[k]["gamma_p"]))

    ok = zeta_ok and step_ok and eta_ok and worst <= 1e-12
    verdict(6, ok, f"replay over {K} rounds: zeta {'exact' if zeta_ok else 'MISMATCH'} "
                   f"({holds} held agent-rounds), xi/alpha {'exact' if step_ok else 'MISMATCH'}, "
                   f"eta {'exact' if eta_ok else 'MISMATCH'}, gamma_p replay error {worst:.1e}")
    assert zeta_ok and step_ok and eta_ok
    assert worst <= 1e-12


# -- 7 ---------------------------------------------------------------------------

def test_admm_comparison(distributed, admm_equal_budget):
    _, res, _, _ = distributed
    _, admm = admm_equal_budget
    ok = admm.rounds <= res.rounds and res.gamma_p <= admm.gamma_p
    verdict(7, ok, f"final gamma_p surrogate {res.gamma_p:.2e} vs ADMM {admm.gamma_p:.2e} "
                   f"after {res.rounds}/{admm.rounds} rounds")
    assert admm.rounds <= res.rounds
    assert res.gamma_p <= admm.gamma_p


# -- 8 ---------------------------------------------------------------------------

def test_privacy_audit(distributed, admm_equal_budget):
    _, res, log, _ = distributed
    _, admm = admm_equal_budget
    clean = [privacy_audit(read_log(log)), privacy_audit(res.records), privacy_audit(admm.records)]
    tampered = list(res.records) + [Message(1, "ess:E1", "operator", SHARED, ("S_ess.E1.1",), (5.0,)).record()]
    bad = privacy_audit(tampered)
    ok = all(r.passed for r in clean) and not bad.passed and bad.offenders == [(1, "ess:E1", "S_ess.E1.1")]
    verdict(8, ok, f"audit: {sum(r.passed for r in clean)}/3 clean logs PASS, injected S_ess "
                   f"{'FAILs' if not bad.passed else 'PASSES'}")
    assert all(r.passed for r in clean)
    assert not bad.passed and bad.offenders == [(1, "ess:E1", "S_ess.E1.1")]


# -- 9 ---------------------------------------------------------------------------

C_MAX = 4


def test_communication_accounting(distributed):
    _, res, log, _ = distributed
    part = res.partition
    records = read_log(log)
    per = scalars_per_agent(records)
    over = [(k, a, n) for (k, a), n in per.items() if n > part.dimension(a) + 1]
    N = len(part.agents)
    d = max(part.dimension(a) for a in part.agents)
    K = res.rounds + 1
    total = sum(len(r["values"]) for r in records)
    C = total / (N * d * K)
    ok = not over and C <= C_MAX
    verdict(9, ok, f"max scalars per agent-round minus d_i = "
                   f"{max(n - part.dimension(a) for (k, a), n in per.items())} (limit 1), "
                   f"total {total} = {C:.2f} * N*d*K with N={N}, d={d}, K={K} (C limit {C_MAX})")
    assert not over
    assert C <= C_MAX


# -- 10 --------------------------------------------------------------------------

def _queue_errors(model, x):
    sc = model.scenario
    worst_cons, worst_bound = 0.0, 0.0
    for kind, centers in (("iot", sc.iot), ("fog", sc.fog)):
        handles = model.iot if kind == "iot" else model.fog
        for c in centers:
            v = handles[c.id]
            net = 0.0
            for t in range(sc.horizon):
                inflow = c.arrivals[t] if kind == "iot" else sum(x[cp] for cp in v[t]["inflow"])
                net += inflow - x[v[t]["Ucal"]] - x[v[t]["Utran"]]
                H = x[v[t]["H_next"]]
                worst_bound = max(worst_bound, -H, H - c.h_max)
            drift = x[v[sc.horizon - 1]["H_next"]] - x[v[0]["H"]]
            worst_cons = max(worst_cons, abs(drift - net))
    return worst_cons, worst_bound


QUEUE_TOL = 1e-6  # primal feasibility tolerance of the LP solves


def test_queue_conservation(centralized, distributed, admm_equal_budget):
    cmodel, cres = centralized
    dmodel, dres, _, _ = distributed
    amodel, ares = admm_equal_budget
    errs = [_queue_errors(m, x) for m, x in
            ((cmodel, cres.assignment), (dmodel, dres.assignment), (amodel, ares.assignment))]
    cons = max(e[0] for e in errs)
    bnd = max(e[1] for e in errs)
    ok = cons <= QUEUE_TOL and bnd <= QUEUE_TOL
    verdict(10, ok, f"queue conservation over 3 schedules: max |H_T - H_0 - net inflow| {cons:.1e}, "
                    f"max bound violation {max(bnd, 0.0):.1e} (tol {QUEUE_TOL:g})")
    assert cons <= QUEUE_TOL
    assert bnd <= QUEUE_TOL

