import math

import pytest

from scenarios import chain, two_bus
from synergy.decomposition import (DATA, ENERGY, AgentSubproblem, PartitionError, SubproblemError,
                                   admm_baseline, partition, polyak_stepsize, residuals, run_algorithm1,
                                   surrogate_condition, sweep_order, update_duals, update_penalty,
                                   write_trace)
from synergy.model import AlgorithmConfig, ScenarioValidationError, scenario_from_dict
from synergy.qcqp.assemble import assemble_model, build_model
from synergy.qcqp.problem import GE, Coupling
from synergy.solver import solve


def test_dual_update_arithmetic():
    assert update_duals({"c": 0.0}, {"c": 0.1}, 1.3, True)["c"] == pytest.approx(0.13)


def test_dual_hold_is_bitwise():
    zeta = {"a": 0.1 + 0.2, "b": -1e-17}
    held = update_duals(zeta, {"a": 5.0, "b": 1.0}, 3.0, False)
    assert held == zeta and held is not zeta


def test_first_step_parameters():
    s = polyak_stepsize(1.3, 2.0, 1.0, 1, c=200, r=1.0)
    assert s.theta == 0.0
    assert s.alpha == pytest.approx(0.995)
    assert s.xi == pytest.approx(2.587)


def test_step_shrinks_when_residual_is_flat():
    xi = 1.0
    for k in range(1, 30):
        nxt = polyak_stepsize(xi, 1.0, 1.0, k).xi
        assert 0 < nxt < xi
        xi = nxt


def test_step_frozen_at_zero_residual():
    assert polyak_stepsize(4.0, 1.0, 0.0, 3).xi == 4.0


def test_step_rule_starts_at_one():
    with pytest.raises(ValueError):
        polyak_stepsize(1.0, 1.0, 1.0, 0)


def test_penalty_update():
    assert update_penalty(80.0, False, 1.01) == pytest.approx(79.2079, abs=1e-4)
    assert update_penalty(200.0, True, 1.01) == pytest.approx(202.0)
    with pytest.raises(ValueError):
        update_penalty(80.0, True, 1.0)
    with pytest.raises(ScenarioValidationError):
        AlgorithmConfig(w=1.0)


def test_surrogate_condition():
    assert surrogate_condition(10.0, 10.0)
    assert surrogate_condition(10.0, 9.0)
    assert not surrogate_condition(10.0, 10.1)


def _couplings():
    return {"c": Coupling("c", ENERGY, 0, "p_g.G1.0", "gen:G1", "x", "operator", "y"),
            "d": Coupling("d", DATA, 0, "U_iot_tran.I1.0", "iot:I1", "u", "fog:F1", "v")}


def test_residuals_matched_and_frozen():
    shared = {("gen:G1", "c"): 1.0, ("operator", "c"): 1.0, ("iot:I1", "d"): 2.0, ("fog:F1", "d"): 2.0}
    assert residuals(shared, shared, _couplings()) == (0.0, 0.0)


def test_residuals_values():
    shared = {("gen:G1", "c"): 1.0, ("operator", "c"): 4.0, ("iot:I1", "d"): 2.0, ("fog:F1", "d"): 6.0}
    prev = dict(shared)
    prev[("gen:G1", "c")] = 0.0
    gp, gd = residuals(shared, prev, _couplings())
    assert gp == pytest.approx(5.0)
    assert gd == pytest.approx(1.0)


def test_sweep_order():
    agents = ["operator", "gen:G1", "ess:E1", "cloud:C1", "fog:F1", "iot:I1"]
    assert sweep_order(agents) == ["iot:I1", "fog:F1", "cloud:C1", "gen:G1", "ess:E1", "operator"]


def test_fixture_partition(fixture_scenario):
    m = assemble_model(fixture_scenario, 0)
    part = partition(m.problem)
    assert sorted(part.agents) == ["cloud:C1", "ess:E1", "fog:F1", "gen:G1", "iot:I1", "operator"]
    T = fixture_scenario.horizon
    # operator receives one energy value per device per period
    assert part.dimension("operator") == 5 * T
    assert part.dimension("fog:F1") == 3 * T
    assert len(part.family(DATA)) == 2 * T
    assert part.neighbors("iot:I1") == ["fog:F1", "operator"]


def test_operator_subproblem_rows(fixture_scenario):
    m = assemble_model(fixture_scenario, 0)
    part = partition(m.problem)
    fams = {m.problem.rows[r].family for r in part.rows["operator"]}
    assert fams == {"distflow", "balance"}
    distflow = {n for n, r in m.problem.rows.items() if r.family == "distflow"}
    assert distflow <= set(part.rows["operator"])
    assert len(part.cones["operator"]) == len(m.problem.cones)


def test_selection_rows_are_owned(fixture_scenario):
    m = assemble_model(fixture_scenario, 0)
    part = partition(m.problem)
    for a in part.agents:
        for fam in (ENERGY, DATA):
            assert all(m.problem.variables[v].owner == a for v in part.selection(a, fam))


def test_straddling_row_is_rejected():
    m = assemble_model(scenario_from_dict(two_bus()), 0)
    m.problem.add_row("bad", {"gen.G1.p.0": 1.0, "pf.bus1.p.0": 1.0}, GE, 0.0, "misc", None)
    with pytest.raises(PartitionError, match="straddles"):
        partition(m.problem)


def test_no_data_center_means_energy_only():
    part = partition(assemble_model(scenario_from_dict(two_bus(T=2)), 0).problem)
    assert len(part.family(ENERGY)) == 2
    assert part.family(DATA) == []


def test_agent_subproblem_has_no_foreign_variables(fixture_scenario):
    m = assemble_model(fixture_scenario, 0)
    part = partition(m.problem)
    sub = AgentSubproblem(m.problem, part, "iot:I1")
    owners = {v.owner for v in sub.problem.variables.values()}
    assert owners == {"iot:I1"}


def test_penalty_values(fixture_scenario):
    m = assemble_model(fixture_scenario, 0)
    part = partition(m.problem)
    sub = AgentSubproblem(m.problem, part, "gen:G1")
    assert sub.penalty_value(-0.3, 10.0) == pytest.approx(3.0)
    quad = AgentSubproblem(assemble_model(fixture_scenario, 0).problem, part, "gen:G1", quadratic=True)
    # piecewise-linear lower envelope of e^2 / 2 * eta, exact at tangent points
    assert quad.penalty_value(1e-3 * math.sqrt(2) ** 4, 2.0) == pytest.approx(1.6e-5)
    assert quad.penalty_value(0.3, 2.0) <= 0.09 + 1e-12


def test_single_agent_terminates_immediately():
    sc = scenario_from_dict(chain(3))
    m = assemble_model(sc, 0)
    cent = solve(assemble_model(sc, 0).problem)
    res = run_algorithm1(m.problem, sc.config)
    assert res.reason == "no couplings"
    assert res.rounds == 0
    assert res.objective == pytest.approx(cent.objective)
    assert admm_baseline(assemble_model(sc, 0).problem, sc.config).rounds == 0


def test_infeasible_agent_is_named():
    m = assemble_model(scenario_from_dict(two_bus()), 0)
    m.problem.add_row("impossible", {"gen.G1.p.0": 1.0}, GE, 10.0, "generator", "gen:G1")
    with pytest.raises(SubproblemError) as err:
        run_algorithm1(m.problem)
    assert err.value.agent == "gen:G1" and err.value.k == 0


def test_unreformulated_problem_is_rejected(fixture_scenario):
    with pytest.raises(ValueError, match="reformulated"):
        run_algorithm1(build_model(fixture_scenario).problem)


def _convex(**cfg):
    doc = two_bus(T=2, config=cfg)
    return scenario_from_dict(doc)


def test_convex_case_methods_agree():
    # classic ADMM settings: dual step equal to the penalty
    sc = _convex(k_max=400, tol_primal=1e-6, tol_dual=1e-6, xi0=20, eta_p=20)
    cent = solve(assemble_model(sc, 0).problem).objective
    sur = run_algorithm1(assemble_model(sc, 0).problem, sc.config)
    admm = admm_baseline(assemble_model(sc, 0).problem, sc.config)
    assert sur.converged and admm.converged
    assert sur.objective == pytest.approx(cent, rel=1e-3)
    assert admm.objective == pytest.approx(sur.objective, rel=1e-3)


def test_round_zero_is_independent_of_round_model():
    rows = []
    for model in ("jacobi", "gauss-seidel"):
        sc = _convex(k_max=3, round_model=model)
        rows.append(run_algorithm1(assemble_model(sc, 0).problem, sc.config).trace[0])
    assert rows[0] == rows[1]


def test_trace_file_columns(tmp_path):
    sc = _convex(k_max=10)
    res = run_algorithm1(assemble_model(sc, 0).problem, sc.config)
    path = write_trace(res.trace, tmp_path / "trace.csv")
    header, *rows = path.read_text().splitlines()
    assert header == "k,gamma_p,gamma_d,xi,alpha,eta_p,eta_d,L_eta,obj:gen:G1,obj:operator"
    assert len(rows) == res.rounds + 1


def test_merged_point_meets_coupling_tolerance():
    sc = _convex(k_max=50)
    m = assemble_model(sc, 0)
    res = run_algorithm1(m.problem, sc.config)
    assert res.converged
    worst = max(m.problem.rows[f"couple.{c}"].violation(res.assignment) for c in m.problem.couplings)
    assert worst <= sc.config.tol_primal
