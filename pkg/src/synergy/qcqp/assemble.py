"""Assembly of the centralized co-dispatch problem."""
from __future__ import annotations

from dataclasses import dataclass, field

from .. import datacenter, powerflow
from ..model import RadialTree, Scenario, validate_radial
from ..rnmdt import Reformulation, apply_all
from .problem import Handles, QcqpProblem


@dataclass
class Model:
    scenario: Scenario
    tree: RadialTree
    problem: QcqpProblem
    handles: dict[str, Handles] = field(default_factory=dict)
    iot: dict = field(default_factory=dict)
    fog: dict = field(default_factory=dict)
    cloud: dict = field(default_factory=dict)
    reformulation: Reformulation | None = None


def build_model(scenario: Scenario) -> Model:
    """All constraint families with bilinear and integer products still registered, not relaxed."""
    tree = validate_radial(scenario)
    problem = QcqpProblem(name=scenario.name)
    m = Model(scenario, tree, problem)
    m.handles["distflow"] = powerflow.build_distflow(scenario, problem, tree)
    m.handles["ess"] = powerflow.build_ess(scenario, problem)
    m.handles["generators"] = powerflow.build_generators(scenario, problem)
    m.handles["iot"], m.iot = datacenter.build_iot(scenario, problem)
    m.handles["fog"], m.fog = datacenter.build_fog(scenario, problem, m.iot)
    m.handles["cloud"], m.cloud = datacenter.build_cloud(scenario, problem, m.fog)
    exports = {}
    for key in ("ess", "generators", "iot", "fog", "cloud"):
        exports.update(m.handles[key].exports)
    m.handles["balance"] = powerflow.build_balance(scenario, problem, exports, tree)
    return m


def assemble_model(scenario: Scenario, vartheta: int | None = None) -> Model:
    vartheta = scenario.config.vartheta if vartheta is None else vartheta
    m = build_model(scenario)
    m.reformulation = apply_all(m.problem, vartheta)
    return m


def assemble_centralized(scenario: Scenario, vartheta: int | None = None) -> QcqpProblem:
    """Linearized centralized problem: linear rows, rotated cones and integers only."""
    return assemble_model(scenario, vartheta).problem
