import dataclasses
import time

import pytest

from synergy.decomposition import admm_baseline, run_algorithm1
from synergy.model import bundled_scenario_path, load_scenario
from synergy.qcqp.assemble import assemble_model
from synergy.solver import solve

# acceptance results, filled by test_acceptance.py and printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def fixture_scenario():
    return load_scenario(bundled_scenario_path())


@pytest.fixture(scope="session")
def centralized(fixture_scenario):
    model = assemble_model(fixture_scenario, fixture_scenario.config.vartheta)
    return model, solve(model.problem)


@pytest.fixture(scope="session")
def distributed(fixture_scenario, tmp_path_factory):
    log = tmp_path_factory.mktemp("dist") / "messages.ndjson"
    model = assemble_model(fixture_scenario, fixture_scenario.config.vartheta)
    t0 = time.perf_counter()
    res = run_algorithm1(model.problem, fixture_scenario.config, log_path=log)
    return model, res, log, time.perf_counter() - t0


@pytest.fixture(scope="session")
def admm_equal_budget(fixture_scenario, distributed):
    _, res, _, _ = distributed
    cfg = dataclasses.replace(fixture_scenario.config, k_max=res.rounds)
    model = assemble_model(fixture_scenario, cfg.vartheta)
    return model, admm_baseline(model.problem, cfg)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
