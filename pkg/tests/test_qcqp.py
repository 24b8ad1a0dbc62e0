import pytest

from synergy.qcqp.assemble import assemble_centralized, build_model
from synergy.qcqp.problem import (BINARY, EQ, LE, Coupling, ProblemError, QcqpProblem, check_feasibility,
                                  evaluate_objective, var_name)
from synergy.rnmdt import apply_all
from synergy.solver import solve


def test_var_name_skips_missing_period():
    assert var_name(("iot", "I1", "H", 0)) == "iot.I1.H.0"
    assert var_name(("rnmdt", "t", "z", None)) == "rnmdt.t.z"


def test_duplicate_names_rejected():
    p = QcqpProblem()
    x = p.add_var(("a", "b", "x"), "a")
    with pytest.raises(ProblemError, match="duplicate"):
        p.add_var(("a", "b", "x"), "a")
    p.add_row("r", {x: 1.0}, LE, 1.0, "f")
    with pytest.raises(ProblemError, match="duplicate"):
        p.add_row("r", {x: 1.0}, LE, 1.0, "f")


def test_row_on_unknown_variable():
    with pytest.raises(ProblemError, match="unknown"):
        QcqpProblem().add_row("r", {"nope": 1.0}, LE, 0.0, "f")


def test_binary_bounds_are_clipped():
    p = QcqpProblem()
    z = p.add_var(("a", "b", "z"), "a", -3.0, 7.0, kind=BINARY)
    assert (p.variables[z].lb, p.variables[z].ub) == (0.0, 1.0)


def test_row_owner_inferred_from_single_agent():
    p = QcqpProblem()
    x = p.add_var(("a", "b", "x"), "iot:I1")
    y = p.add_var(("a", "b", "y"), "fog:F1")
    assert p.rows[p.add_row("one", {x: 1.0}, LE, 1.0, "f")].owner == "iot:I1"
    assert p.rows[p.add_row("two", {x: 1.0, y: 1.0}, LE, 1.0, "f")].owner is None


def test_coupling_row_has_no_owner():
    p = QcqpProblem()
    x = p.add_var(("a", "b", "x"), "iot:I1")
    y = p.add_var(("a", "b", "y"), "fog:F1")
    p.add_coupling(Coupling("c", "d", 0, "u_tran", "iot:I1", x, "fog:F1", y))
    row = p.rows["couple.c"]
    assert row.family == "coupling-d" and row.owner is None and row.sense == EQ


def test_fixture_census_before_reformulation(fixture_scenario):
    c = build_model(fixture_scenario).problem.census()
    T = fixture_scenario.horizon
    assert c["cones"] == 5 * T
    assert c["objective_quadratics"] == 5 * T
    assert c["integer_products"] == T
    assert c["rows:balance"] == 6 * T
    assert c["rows:coupling-p"] + c["rows:coupling-d"] == 7 * T


def test_fixture_census_after_reformulation(fixture_scenario):
    p = assemble_centralized(fixture_scenario, 0)
    c = p.census()
    assert c["objective_quadratics"] == 0 and c["integer_products"] == 0
    assert c["rows:rnmdt"] == 5 * 5 * fixture_scenario.horizon
    assert p.is_linearized()


def test_digest_is_deterministic(fixture_scenario):
    a = assemble_centralized(fixture_scenario, -1)
    b = assemble_centralized(fixture_scenario, -1)
    assert a.digest() == b.digest()
    assert a.digest() != assemble_centralized(fixture_scenario, -2).digest()


def test_optimum_is_feasible_and_perturbation_is_not(centralized):
    model, res = centralized
    p = model.problem
    assert check_feasibility(p, res.assignment, 1e-6) == []
    x = dict(res.assignment)
    binary = next(n for n, v in p.variables.items() if v.kind == BINARY)
    x[binary] = 0.5
    kinds = {v.kind for v in check_feasibility(p, x, 1e-6)}
    assert "integrality" in kinds


def test_bound_perturbation_is_reported(centralized):
    model, res = centralized
    x = dict(res.assignment)
    x["pf.bus0.v.0"] = 2.0
    names = {v.name for v in check_feasibility(model.problem, x)}
    assert "pf.bus0.v.0" in names


def test_missing_variable_raises(centralized):
    model, _ = centralized
    with pytest.raises(ProblemError, match="misses"):
        check_feasibility(model.problem, {})


def test_objective_matches_solver(centralized):
    model, res = centralized
    assert evaluate_objective(model.problem, res.assignment) == pytest.approx(res.objective, rel=1e-9)


def test_unrelaxed_bilinear_is_evaluated_exactly():
    p = QcqpProblem()
    x = p.add_var(("a", "b", "x"), "a", 0, 4)
    y = p.add_var(("a", "b", "y"), "a", 0, 4)
    p.add_objective(x, 1.0)
    p.add_bilinear("xy", x, y, 2.0, "a")
    assert evaluate_objective(p, {x: 3.0, y: 0.5}) == pytest.approx(6.0)


def test_original_objective_of_relaxed_problem(fixture_scenario):
    model = build_model(fixture_scenario)
    apply_all(model.problem, -2)
    res = solve(model.problem)
    true = evaluate_objective(model.problem, res.assignment, original=True)
    relaxed = evaluate_objective(model.problem, res.assignment)
    # the relaxation is a lower bound on the true cost of its own minimizer
    assert relaxed <= true + 1e-6
