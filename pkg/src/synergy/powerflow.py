"""Branch-flow (Distflow) network model, storage, generators and nodal balance.

All network quantities are per-unit. Lines are oriented parent -> child. The
root bus is the substation: its squared voltage is fixed at 1.0 and it trades
with the upstream grid at the energy price. The root's reactive exchange is
unconstrained, so it carries no reactive balance row.
"""
from __future__ import annotations

from typing import Mapping

from .model import RadialTree, Scenario, validate_radial
from .qcqp.problem import BINARY, EQ, INF, LE, Coupling, Handles, ProblemError, QcqpProblem

OPERATOR = "operator"


def agent_of(kind: str, device_id: str) -> str:
    return f"{kind}:{device_id}"


def _line_key(i: int, j: int) -> str:
    return f"line{i}-{j}"


def build_distflow(scenario: Scenario, problem: QcqpProblem, tree: RadialTree | None = None) -> Handles:
    """Flow balance, voltage drop and one rotated cone per (line, tau)."""
    tree = tree or validate_radial(scenario)
    h = Handles()
    lines = {(ln.from_bus, ln.to_bus): ln for ln in scenario.lines}
    for t in range(scenario.horizon):
        for bus in scenario.buses:
            j = bus.id
            vlo, vhi = (1.0, 1.0) if j == tree.root else (bus.v_min, bus.v_max)
            h.variables.append(problem.add_var(("pf", f"bus{j}", "v", t), OPERATOR, vlo, vhi))
            if j != tree.root:
                h.variables.append(problem.add_var(("pf", f"bus{j}", "p", t), OPERATOR, bus.p_min, bus.p_max))
                h.variables.append(problem.add_var(("pf", f"bus{j}", "q", t), OPERATOR, bus.q_min, bus.q_max))
        for (i, j), ln in sorted(lines.items()):
            key = _line_key(i, j)
            h.variables.append(problem.add_var(("pf", key, "P", t), OPERATOR, -ln.p_max, ln.p_max))
            h.variables.append(problem.add_var(("pf", key, "Q", t), OPERATOR, -ln.q_max, ln.q_max))
            h.variables.append(problem.add_var(("pf", key, "l", t), OPERATOR, 0.0, ln.l_max))
            problem.add_objective(f"pf.{key}.l.{t}", ln.r)
        for bus in scenario.buses:
            j = bus.id
            if j == tree.root:
                continue
            i = tree.parent[j]
            up = _line_key(i, j)
            ln = lines[(i, j)]
            prow = {f"pf.{up}.P.{t}": -1.0, f"pf.{up}.l.{t}": ln.r, f"pf.bus{j}.p.{t}": -1.0}
            qrow = {f"pf.{up}.Q.{t}": -1.0, f"pf.{up}.l.{t}": ln.x, f"pf.bus{j}.q.{t}": -1.0}
            for m in tree.children[j]:
                prow[f"pf.{_line_key(j, m)}.P.{t}"] = 1.0
                qrow[f"pf.{_line_key(j, m)}.Q.{t}"] = 1.0
            h.rows.append(problem.add_row(f"pf.pbal.bus{j}.{t}", prow, EQ, 0.0, "distflow", OPERATOR))
            h.rows.append(problem.add_row(f"pf.qbal.bus{j}.{t}", qrow, EQ, 0.0, "distflow", OPERATOR))
        for (i, j), ln in sorted(lines.items()):
            key = _line_key(i, j)
            h.rows.append(problem.add_row(
                f"pf.vdrop.{key}.{t}",
                {f"pf.bus{j}.v.{t}": 1.0, f"pf.bus{i}.v.{t}": -1.0, f"pf.{key}.P.{t}": 2 * ln.r,
                 f"pf.{key}.Q.{t}": 2 * ln.x, f"pf.{key}.l.{t}": -ln.z2},
                EQ, 0.0, "distflow", OPERATOR))
            h.cones.append(problem.add_cone(
                f"pf.cone.{key}.{t}", f"pf.{key}.P.{t}", f"pf.{key}.Q.{t}", f"pf.{key}.l.{t}",
                f"pf.bus{i}.v.{t}", "distflow", OPERATOR))
    return h


def build_ess(scenario: Scenario, problem: QcqpProblem) -> Handles:
    """Charge/discharge exclusivity by one binary, state-of-charge recursion and bounds."""
    h = Handles()
    for e in scenario.ess:
        a = agent_of("ess", e.id)
        s_prev = problem.add_var(("ess", e.id, "S", 0), a, e.s_init, e.s_init)
        h.variables.append(s_prev)
        for t in range(scenario.horizon):
            cha = problem.add_var(("ess", e.id, "cha", t), a, 0.0, e.p_cha_max)
            dis = problem.add_var(("ess", e.id, "dis", t), a, 0.0, e.p_dis_max)
            z = problem.add_var(("ess", e.id, "zcha", t), a, kind=BINARY)
            net = problem.add_var(("ess", e.id, "net", t), a, -e.p_cha_max, e.p_dis_max)
            s = problem.add_var(("ess", e.id, "S", t + 1), a, e.s_min, e.s_max)
            h.variables += [cha, dis, z, net, s]
            h.rows += [
                problem.add_row(f"ess.{e.id}.cha_cap.{t}", {cha: 1.0, z: -e.p_cha_max}, LE, 0.0, "ess", a),
                problem.add_row(f"ess.{e.id}.dis_cap.{t}", {dis: 1.0, z: e.p_dis_max}, LE, e.p_dis_max, "ess", a),
                problem.add_row(f"ess.{e.id}.soc.{t}",
                                {s: 1.0, s_prev: -1.0, cha: -e.eta_cha, dis: 1.0 / e.eta_dis}, EQ, 0.0, "ess", a),
                problem.add_row(f"ess.{e.id}.net.{t}", {net: 1.0, dis: -1.0, cha: 1.0}, EQ, 0.0, "ess", a),
            ]
            price = scenario.pi[t]
            problem.add_objective(cha, price)
            problem.add_objective(dis, -price)
            h.exports[(e.id, t)] = (net, 1.0, "p_ess_net", a)
            s_prev = s
    return h


def build_generators(scenario: Scenario, problem: QcqpProblem) -> Handles:
    h = Handles()
    T = scenario.horizon
    for g in scenario.generators:
        a = agent_of("gen", g.id)
        kappa = scenario.kappa_for(g)
        names = []
        for t in range(T):
            p = problem.add_var(("gen", g.id, "p", t), a, g.p_min, g.p_max)
            problem.add_objective(p, kappa[t])
            names.append(p)
            h.exports[(g.id, t)] = (p, 1.0, "p_g", a)
        h.variables += names
        for t in range(T - 1):
            h.rows.append(problem.add_row(f"gen.{g.id}.ramp_up.{t}", {names[t + 1]: 1.0, names[t]: -1.0},
                                          LE, g.ramp_up, "generator", a))
            h.rows.append(problem.add_row(f"gen.{g.id}.ramp_down.{t}", {names[t]: 1.0, names[t + 1]: -1.0},
                                          LE, g.ramp_down, "generator", a))
    return h


def _device_bus(scenario: Scenario) -> dict[str, int]:
    return {d.id: d.bus for d in scenario.devices()}


def build_balance(scenario: Scenario, problem: QcqpProblem, exports: Mapping[tuple[str, int], tuple],
                  tree: RadialTree | None = None) -> Handles:
    """Nodal balance per (bus, tau) over operator-held copies of device powers.

    Each copy is linked to the device's own variable by an energy coupling
    row; the root balance also carries the priced grid exchange.
    """
    tree = tree or validate_radial(scenario)
    h = Handles()
    where = _device_bus(scenario)
    root_bus = scenario.bus(tree.root)
    for t in range(scenario.horizon):
        rows: dict[int, dict[str, float]] = {}
        for bus in scenario.buses:
            j = bus.id
            if j == tree.root:
                grid = problem.add_var(("pf", "grid", "import", t), OPERATOR, root_bus.p_min, root_bus.p_max)
                problem.add_objective(grid, scenario.pi[t])
                h.variables.append(grid)
                row = {f"pf.{_line_key(j, m)}.P.{t}": 1.0 for m in tree.children[j]}
                row[grid] = -1.0
            else:
                row = {f"pf.bus{j}.p.{t}": 1.0}
            rows[j] = row
        for (dev, tt), (var, sign, symbol, agent) in sorted(exports.items()):
            if tt != t:
                continue
            v = problem.variables[var]
            copy = problem.add_var(("pf", f"copy-{dev}", symbol, t), OPERATOR, v.lb, v.ub)
            h.variables.append(copy)
            rows[where[dev]][copy] = rows[where[dev]].get(copy, 0.0) - sign
            problem.add_coupling(Coupling(
                name=f"{symbol}.{dev}.{t}", family="p", tau=t, symbol=symbol,
                up_agent=OPERATOR, up_var=copy, down_agent=agent, down_var=var))
        for bus in scenario.buses:
            rhs = scenario.renewable(bus.id)[t]
            h.rows.append(problem.add_row(f"pf.balance.bus{bus.id}.{t}", rows[bus.id], EQ, rhs,
                                          "balance", OPERATOR))
    return h


def socp_exactness_residual(problem: QcqpProblem, x: Mapping[str, float]) -> float:
    """Largest (P^2 + Q^2 - l*v) / max(1, l*v) over all cones."""
    worst = -INF
    for cone in problem.cones.values():
        missing = [v for v in cone.variables() if v not in x]
        if missing:
            raise ProblemError(f"assignment misses {missing[0]}")
        worst = max(worst, cone.residual(x))
    return 0.0 if worst == -INF else worst


def socp_exactness_gap(problem: QcqpProblem, x: Mapping[str, float]) -> float:
    """Largest |P^2 + Q^2 - l*v| / max(1, l*v); zero means every cone is tight."""
    socp_exactness_residual(problem, x)
    return max((abs(c.residual(x)) for c in problem.cones.values()), default=0.0)
