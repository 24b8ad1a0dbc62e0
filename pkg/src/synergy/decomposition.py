"""Agent partition, l1 surrogate Lagrangian iteration and a consensus ADMM baseline.

Every agent holds its own variables and constraints. A coupling links one
variable of an "up" agent to one variable of a "down" agent. From agent i's
point of view the coupling mismatch is ``m_i = x_own - x_neighbor`` and agent i
carries its own multiplier ``zeta_i`` for it, so each coupling has two
multipliers, one per endpoint, updated with opposite-signed mismatches.

Agent subproblem (l1 variant)::

    min J_i(x_i) + sum zeta_i * x_own + eta_f * t
    s.t. x_i in X_i,  x_own - t <= x_nb,  -x_own - t <= -x_nb

where ``x_nb`` is the neighbor value received in the previous round and
``eta_f`` is the penalty of the coupling's family (energy or data).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .model import ROUND_MODELS, AlgorithmConfig
from .powerflow import OPERATOR
from .qcqp.problem import COUPLING_FAMILIES, EQ, GE, LE, Coupling, QcqpProblem, evaluate_objective
from .simnet import COORDINATOR, LAGRANGIAN, SHARED, Bus, Message
from .solver import Limits, solve

log = logging.getLogger(__name__)

ENERGY, DATA = "p", "d"
ANNOUNCED = ("L_eta", "gamma_p", "gamma_d", "xi", "alpha", "eta_p", "eta_d")


class PartitionError(ValueError):
    pass


class SubproblemError(RuntimeError):
    def __init__(self, agent: str, k: int, status: str):
        super().__init__(f"subproblem of {agent} failed in round {k}: {status}")
        self.agent = agent
        self.k = k
        self.status = status


# -- partition -----------------------------------------------------------------

@dataclass(frozen=True)
class Link:
    """One coupling as seen from one endpoint."""

    coupling: str
    family: str
    own: str
    neighbor_agent: str
    neighbor_var: str
    up: bool


@dataclass
class AgentPartition:
    agents: tuple[str, ...]
    owned: dict[str, list[str]]
    rows: dict[str, list[str]]
    cones: dict[str, list[str]]
    couplings: dict[str, Coupling]
    links: dict[str, list[Link]]

    def family(self, family: str) -> list[Coupling]:
        return [c for _, c in sorted(self.couplings.items()) if c.family == family]

    def selection(self, agent: str, family: str) -> list[str]:
        """Rows of the agent's selection matrix: the owned variable each row picks."""
        return [ln.own for ln in self.links[agent] if ln.family == family]

    def dimension(self, agent: str) -> int:
        """Coupling dimension d_i: scalars the agent shares per round."""
        return len(self.links[agent])

    def neighbors(self, agent: str) -> list[str]:
        return sorted({ln.neighbor_agent for ln in self.links[agent]})


def partition(problem: QcqpProblem) -> AgentPartition:
    agents = tuple(problem.agents())
    owned: dict[str, list[str]] = {a: [] for a in agents}
    for n in problem.ordered_variables():
        owned[problem.variables[n].owner].append(n)
    rows: dict[str, list[str]] = {a: [] for a in agents}
    for name in problem.ordered_rows():
        r = problem.rows[name]
        if r.family in COUPLING_FAMILIES:
            continue
        owners = {problem.variables[v].owner for v in r.coefs}
        if r.owner is not None:
            owners.add(r.owner)
        if len(owners) != 1:
            raise PartitionError(f"row {name} straddles agents {sorted(owners)}")
        rows[owners.pop()].append(name)
    cones: dict[str, list[str]] = {a: [] for a in agents}
    for name in sorted(problem.cones):
        c = problem.cones[name]
        owners = {problem.variables[v].owner for v in c.variables()}
        if len(owners) != 1:
            raise PartitionError(f"cone {name} straddles agents {sorted(owners)}")
        cones[owners.pop()].append(name)
    links: dict[str, list[Link]] = {a: [] for a in agents}
    for name in sorted(problem.couplings):
        c = problem.couplings[name]
        if problem.variables[c.up_var].owner != c.up_agent or problem.variables[c.down_var].owner != c.down_agent:
            raise PartitionError(f"coupling {name} does not match variable owners")
        if c.up_agent == c.down_agent:
            raise PartitionError(f"coupling {name} links {c.up_agent} to itself")
        links[c.up_agent].append(Link(name, c.family, c.up_var, c.down_agent, c.down_var, True))
        links[c.down_agent].append(Link(name, c.family, c.down_var, c.up_agent, c.up_var, False))
    return AgentPartition(agents, owned, rows, cones, dict(problem.couplings), links)


# -- dual mechanics --------------------------------------------------------------

# Gauss-Seidel sweep: data moves IoT -> fog -> cloud, devices report to the operator last
_SWEEP_RANK = {"iot": 0, "fog": 1, "cloud": 2, "gen": 3, "ess": 4}


def sweep_order(agents: Sequence[str]) -> list[str]:
    return sorted(agents, key=lambda a: (_SWEEP_RANK.get(a.split(":")[0], 5 if a != OPERATOR else 6), a))


def surrogate_condition(L_before: float, L_after: float, tol: float = 1e-9) -> bool:
    """True when the new iterate does not increase the agent's augmented Lagrangian."""
    return L_after <= L_before + tol * max(1.0, abs(L_before))


def update_duals(zeta: Mapping[str, float], mismatch: Mapping[str, float], xi: float,
                 satisfied: bool) -> dict[str, float]:
    if not satisfied:
        return dict(zeta)
    return {c: z + xi * mismatch.get(c, 0.0) for c, z in zeta.items()}


@dataclass(frozen=True)
class Step:
    xi: float
    alpha: float
    theta: float


def polyak_stepsize(xi_prev: float, gamma_prev: float, gamma_cur: float, k: int,
                    c: float = 200.0, r: float | None = None, floor: float = 1e-9) -> Step:
    """xi_k = alpha_k * xi_{k-1} * |gamma_{k-1}| / |gamma_k| with alpha_k = 1 - 1/(c k^theta).

    ``theta = 1 - 1/k^r``; when ``r`` is None it follows ``r = 1/sqrt(k)``.
    A residual at or below ``floor`` (solver noise) freezes the step, so the
    ratio never divides by round-off.
    """
    if k < 1:
        raise ValueError("the step-size rule starts at k = 1")
    rr = 1.0 / math.sqrt(k) if r is None else r
    theta = 1.0 - 1.0 / k ** rr
    alpha = 1.0 - 1.0 / (c * k ** theta)
    if gamma_cur <= floor or gamma_prev <= floor:
        return Step(xi_prev, alpha, theta)
    return Step(alpha * xi_prev * gamma_prev / gamma_cur, alpha, theta)


def update_penalty(eta: float, satisfied: bool, w: float) -> float:
    if w <= 1.0:
        raise ValueError("penalty factor w must exceed 1")
    return eta * w if satisfied else eta / w


def residuals(shared: Mapping[tuple[str, str], float], previous: Mapping[tuple[str, str], float],
              couplings: Mapping[str, Coupling]) -> tuple[float, float]:
    """(gamma_p, gamma_d) as Euclidean norms.

    ``shared`` maps (sender agent, coupling name) to the value that agent sent.
    gamma_p is the norm of up - down over every coupling of both families;
    gamma_d is the norm of the change of every shared value since ``previous``.
    """
    gp = 0.0
    for name, c in couplings.items():
        gp += (shared[(c.up_agent, name)] - shared[(c.down_agent, name)]) ** 2
    gd = 0.0
    for key, v in shared.items():
        gd += (v - previous.get(key, v)) ** 2
    return math.sqrt(gp), math.sqrt(gd)


# -- agent subproblems -------------------------------------------------------------

# tangent points of the piecewise-linear quadratic penalty: 0 and +-1e-3 * sqrt(2)^j up to ~16
_TANGENTS = (0.0,) + tuple(s * 1e-3 * math.sqrt(2) ** j for j in range(29) for s in (-1.0, 1.0))

class AgentSubproblem:
    """Self-contained copy of one agent's variables, rows and cones plus penalty terms."""

    def __init__(self, source: QcqpProblem, part: AgentPartition, agent: str, quadratic: bool = False):
        self.agent = agent
        self.links = part.links[agent]
        self.quadratic = quadratic
        p = QcqpProblem(name=f"{source.name}:{agent}")
        for n in part.owned[agent]:
            v = source.variables[n]
            p.variables[n] = v
        for n in part.rows[agent]:
            p.rows[n] = source.rows[n]
        for n in part.cones[agent]:
            p.cones[n] = source.cones[n]
        self.base = {n: source.objective[n] for n in part.owned[agent] if n in source.objective}
        self.constant = source.objective_constant if agent == OPERATOR else 0.0
        self.penalty: dict[str, str] = {}
        self._pos: dict[str, str] = {}
        self._neg: dict[str, str] = {}
        self._gap: dict[str, str] = {}
        for ln in self.links:
            t = p.add_var(("pen", agent, ln.coupling, "t"), agent, 0.0)
            self.penalty[ln.coupling] = t
            if quadratic:
                # t >= e^2 from below by tangents t >= 2 g e - g^2, e = x_own - x_nb
                e = p.add_var(("pen", agent, ln.coupling, "e"), agent, -math.inf, math.inf)
                self._gap[ln.coupling] = p.add_row(f"pen.{agent}.{ln.coupling}.gap",
                                                   {e: 1.0, ln.own: -1.0}, EQ, 0.0, "penalty", agent)
                for j, g in enumerate(_TANGENTS):
                    p.add_row(f"pen.{agent}.{ln.coupling}.tan{j}", {t: 1.0, e: -2.0 * g}, GE, -g * g,
                              "penalty", agent)
            else:
                self._pos[ln.coupling] = p.add_row(f"pen.{agent}.{ln.coupling}.pos",
                                                   {ln.own: 1.0, t: -1.0}, LE, 0.0, "penalty", agent)
                self._neg[ln.coupling] = p.add_row(f"pen.{agent}.{ln.coupling}.neg",
                                                   {ln.own: -1.0, t: -1.0}, LE, 0.0, "penalty", agent)
        self.problem = p
        self.pool: list = []

    def private_cost(self, x: Mapping[str, float]) -> float:
        return self.constant + sum(c * x[v] for v, c in self.base.items())

    def penalty_value(self, gap: float, eta: float) -> float:
        if self.quadratic:
            return 0.5 * eta * max(2 * g * gap - g * g for g in _TANGENTS)
        return eta * abs(gap)

    def lagrangian(self, x: Mapping[str, float], neighbor: Mapping[str, float],
                   zeta: Mapping[str, float], eta: Mapping[str, float]) -> float:
        """J_i + sum zeta * m + penalty(m) at fixed neighbor values."""
        val = self.private_cost(x)
        for ln in self.links:
            m = x[ln.own] - neighbor[ln.coupling]
            val += zeta[ln.coupling] * m + self.penalty_value(m, eta[ln.family])
        return val

    def configure(self, neighbor: Mapping[str, float], zeta: Mapping[str, float],
                  eta: Mapping[str, float]) -> None:
        p = self.problem
        p.objective = dict(self.base)
        p.objective_constant = self.constant
        for ln in self.links:
            nb = neighbor[ln.coupling]
            z = zeta[ln.coupling]
            p.objective[ln.own] = p.objective.get(ln.own, 0.0) + z
            p.objective_constant -= z * nb
            t = self.penalty[ln.coupling]
            if self.quadratic:
                p.objective[t] = 0.5 * eta[ln.family]
                p.rows[self._gap[ln.coupling]].rhs = -nb
            else:
                p.objective[t] = eta[ln.family]
                p.rows[self._pos[ln.coupling]].rhs = nb
                p.rows[self._neg[ln.coupling]].rhs = -nb

    def solve(self, k: int, limits: Limits, backend: str) -> dict[str, float]:
        res = solve(self.problem, limits, backend, self.pool)
        if not res.ok:
            raise SubproblemError(self.agent, k, res.status)
        return {n: res.assignment[n] for n in self.problem.variables}


# -- traces and results ----------------------------------------------------------

@dataclass
class TraceRow:
    k: int
    gamma_p: float
    gamma_d: float
    xi: float
    alpha: float
    eta_p: float
    eta_d: float
    L_eta: float
    agent_objective: dict[str, float]
    satisfied: dict[str, bool] = field(default_factory=dict)


@dataclass
class DualState:
    zeta: dict[str, dict[str, float]]
    eta_p: float
    eta_d: float
    xi: float
    alpha: float = 1.0
    gamma_p: list[float] = field(default_factory=list)
    gamma_d: list[float] = field(default_factory=list)
    L_eta: list[float] = field(default_factory=list)

    def eta(self) -> dict[str, float]:
        return {ENERGY: self.eta_p, DATA: self.eta_d}


@dataclass
class DistributedResult:
    method: str
    assignment: dict[str, float]
    objective: float
    rounds: int
    converged: bool
    reason: str
    trace: list[TraceRow]
    duals: DualState
    records: list[dict]
    partition: AgentPartition

    @property
    def gamma_p(self) -> float:
        return self.trace[-1].gamma_p

    @property
    def gamma_d(self) -> float:
        return self.trace[-1].gamma_d


def write_trace(trace: Sequence[TraceRow], path: str | Path) -> Path:
    path = Path(path)
    agents = sorted({a for row in trace for a in row.agent_objective})
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "gamma_p", "gamma_d", "xi", "alpha", "eta_p", "eta_d", "L_eta",
                     *[f"obj:{a}" for a in agents]])
        for r in trace:
            wr.writerow([r.k, repr(r.gamma_p), repr(r.gamma_d), repr(r.xi), repr(r.alpha),
                         repr(r.eta_p), repr(r.eta_d), repr(r.L_eta),
                         *[repr(r.agent_objective.get(a, 0.0)) for a in agents]])
    return path


# -- the iteration -------------------------------------------------------------------

def _midpoint(v) -> float:
    lo = v.lb if math.isfinite(v.lb) else (min(0.0, v.ub) if math.isfinite(v.ub) else 0.0)
    hi = v.ub if math.isfinite(v.ub) else max(0.0, lo)
    return 0.5 * (lo + hi)


class _Runner:
    def __init__(self, problem: QcqpProblem, config: AlgorithmConfig, limits: Limits, backend: str,
                 log_path: str | Path | None, adaptive: bool, round_model: str):
        if not problem.is_linearized():
            raise ValueError("decomposition expects a problem with all products reformulated")
        if round_model not in ROUND_MODELS:
            raise ValueError(f"round model must be one of {ROUND_MODELS}")
        self.problem = problem
        self.config = config
        self.limits = limits
        self.backend = backend
        self.round_model = round_model
        # adaptive: l1 penalty, surrogate gate, step-size rule, penalty updates
        self.adaptive = adaptive
        self.part = partition(problem)
        self.subs = {a: AgentSubproblem(problem, self.part, a, not adaptive) for a in self.part.agents}
        self.sweep = sweep_order(self.part.agents)
        self.bus = Bus(self.part.agents, Path(log_path) if log_path else None)
        # neighbor snapshot held by each agent: coupling -> value last received
        self.view: dict[str, dict[str, float]] = {
            a: {ln.coupling: _midpoint(problem.variables[ln.neighbor_var]) for ln in self.part.links[a]}
            for a in self.part.agents}
        self.x: dict[str, dict[str, float]] = {}
        self.shared: dict[tuple[str, str], float] = {}
        self.duals = DualState(
            zeta={a: {ln.coupling: 0.0 for ln in self.part.links[a]} for a in self.part.agents},
            eta_p=config.eta_p, eta_d=config.eta_d, xi=config.xi0)

    def _outbox(self, k: int, agent: str, x: Mapping[str, float]) -> list[Message]:
        by_nb: dict[str, list[Link]] = {}
        for ln in self.part.links[agent]:
            by_nb.setdefault(ln.neighbor_agent, []).append(ln)
        return [Message(k, agent, nb, SHARED, tuple(ln.coupling for ln in lns),
                        tuple(float(x[ln.own]) for ln in lns)) for nb, lns in sorted(by_nb.items())]

    def _deliver(self, agent: str, msgs: Sequence[Message]) -> None:
        for m in msgs:
            if m.kind == SHARED and m.receiver == agent:
                for sym, v in zip(m.symbols, m.values):
                    self.view[agent][sym] = v

    def _agent_step(self, k: int, agent: str, outboxes: dict) -> None:
        sub = self.subs[agent]
        # round 0 is the initialization: each agent solves its private problem alone
        eta = self.duals.eta() if k > 0 else {ENERGY: 0.0, DATA: 0.0}
        nb = dict(self.view[agent])
        sub.configure(nb, self.duals.zeta[agent], eta)
        x_new = sub.solve(k, self.limits, self.backend)
        self.used[agent] = nb
        self.x_prev[agent] = self.x.get(agent)
        self.x[agent] = x_new
        outboxes[agent] = self._outbox(k, agent, x_new)

    def _report(self, k: int, agent: str) -> Message:
        """Surrogate check, dual step and the Lagrangian report, once neighbor values are in."""
        sub = self.subs[agent]
        zeta = self.duals.zeta[agent]
        eta = self.duals.eta() if k > 0 else {ENERGY: 0.0, DATA: 0.0}
        nb = self.used[agent]
        L_new = sub.lagrangian(self.x[agent], nb, zeta, eta)
        flag = None
        if k > 0:
            old = self.x_prev[agent]
            # own move with neighbors held, then neighbors' move with own iterate held
            flag = (surrogate_condition(sub.lagrangian(old, nb, zeta, eta), L_new)
                    and surrogate_condition(sub.lagrangian(old, self.start[agent], zeta, eta),
                                            sub.lagrangian(old, self.view[agent], zeta, eta)))
            # mismatch against the neighbor's latest value, so both endpoints of a
            # coupling see the same pair and their multipliers stay mirror images
            mism = {ln.coupling: self.x[agent][ln.own] - self.view[agent][ln.coupling]
                    for ln in self.part.links[agent]}
            new = update_duals(zeta, mism, self.duals.xi, flag or not self.adaptive)
            self.zeta_moved |= new != zeta
            self.duals.zeta[agent] = new
        return Message(k, agent, COORDINATOR, LAGRANGIAN, ("L_eta_i",), (float(L_new),), flag)

    def round(self, k: int) -> TraceRow:
        self.zeta_moved = False
        self.start = {a: dict(v) for a, v in self.view.items()}
        self.used: dict[str, dict[str, float]] = {}
        self.x_prev: dict[str, dict[str, float] | None] = {}
        outboxes: dict[str, list[Message]] = {}
        for agent in self.sweep:
            self._agent_step(k, agent, outboxes)
            if self.round_model == "gauss-seidel":
                # later agents in the sweep already see this round's values
                for a in self.part.agents:
                    self._deliver(a, outboxes[agent])
        inboxes = self.bus.round_exchange(k, outboxes)
        for a in self.part.agents:
            self._deliver(a, inboxes[a])
        reports = self.bus.round_exchange(k, {a: [self._report(k, a)] for a in self.part.agents})
        return self._coordinate(k, inboxes, reports[COORDINATOR])

    def _coordinate(self, k: int, inboxes: Mapping[str, list[Message]], reports: Sequence[Message]) -> TraceRow:
        d = self.duals
        prev = dict(self.shared)
        if not prev:
            prev = {(ln.neighbor_agent, ln.coupling): self.view_init[(ln.neighbor_agent, ln.coupling)]
                    for a in self.part.agents for ln in self.part.links[a]}
        for a, msgs in inboxes.items():
            for m in msgs:
                if m.kind == SHARED:
                    for sym, v in zip(m.symbols, m.values):
                        self.shared[(m.sender, sym)] = v
        gp, gd = residuals(self.shared, prev, self.part.couplings)
        lag = {m.sender: m.values[0] for m in reports}
        flags = {m.sender: m.flag for m in reports}
        L = sum(lag[a] for a in sorted(lag))
        if k > 0 and self.adaptive:
            for fam in (ENERGY, DATA):
                members = [a for a in self.part.agents if any(ln.family == fam for ln in self.part.links[a])]
                if not members:
                    continue
                ok = all(flags[a] for a in members)
                if fam == ENERGY:
                    d.eta_p = update_penalty(d.eta_p, ok, self.config.w)
                else:
                    d.eta_d = update_penalty(d.eta_d, ok, self.config.w)
            step = polyak_stepsize(d.xi, d.gamma_p[-1], gp, k, self.config.c, self.config.r)
            d.xi, d.alpha = step.xi, step.alpha
        d.gamma_p.append(gp)
        d.gamma_d.append(gd)
        d.L_eta.append(L)
        self.bus.broadcast(k, ANNOUNCED, (L, gp, gd, d.xi, d.alpha, d.eta_p, d.eta_d))
        objs = {a: self.subs[a].private_cost(self.x[a]) for a in self.part.agents}
        return TraceRow(k, gp, gd, d.xi, d.alpha, d.eta_p, d.eta_d, L, objs,
                        {a: f for a, f in flags.items() if f is not None})

    def run(self, method: str, k_max: int, tol_p: float, tol_d: float, tol_stall: float,
            progress: Callable[[TraceRow], None] | None = None) -> DistributedResult:
        self.view_init = {(ln.neighbor_agent, ln.coupling): self.view[a][ln.coupling]
                          for a in self.part.agents for ln in self.part.links[a]}
        trace: list[TraceRow] = []
        reason = "iteration limit"
        converged = False
        for k in range(k_max + 1):
            row = self.round(k)
            trace.append(row)
            log.debug("k=%d gamma_p=%.3e gamma_d=%.3e xi=%.3g eta=(%.3g, %.3g)",
                      k, row.gamma_p, row.gamma_d, row.xi, row.eta_p, row.eta_d)
            if progress is not None:
                progress(row)
            if not self.part.couplings:
                converged, reason = True, "no couplings"
                break
            if k > 0 and row.gamma_p <= tol_p and row.gamma_d <= tol_d:
                converged, reason = True, "residual tolerances met"
                break
            # a flat residual only counts as a stall once the multipliers stop moving too;
            # with linear subproblems the iterates can sit still while zeta accumulates
            if k > 1 and abs(row.gamma_p - trace[-2].gamma_p) <= tol_stall and not self.zeta_moved:
                converged, reason = row.gamma_p <= tol_p, "primal residual stalled"
                break
        merged: dict[str, float] = {}
        for a in self.part.agents:
            merged.update({n: v for n, v in self.x[a].items() if n in self.problem.variables})
        return DistributedResult(method, merged, evaluate_objective(self.problem, merged), len(trace) - 1,
                                 converged, reason, trace, self.duals, self.bus.records, self.part)


def run_algorithm1(problem: QcqpProblem, config: AlgorithmConfig | None = None, limits: Limits = Limits(),
                   backend: str = "highs", log_path: str | Path | None = None,
                   progress: Callable[[TraceRow], None] | None = None) -> DistributedResult:
    """l1 surrogate Lagrangian decomposition of a linearized problem."""
    cfg = config or AlgorithmConfig()
    r = _Runner(problem, cfg, limits, backend, log_path, True, cfg.round_model)
    return r.run("surrogate", cfg.k_max, cfg.tol_primal, cfg.tol_dual, cfg.tol_stall, progress)


def admm_baseline(problem: QcqpProblem, config: AlgorithmConfig | None = None, limits: Limits = Limits(),
                  backend: str = "highs", log_path: str | Path | None = None,
                  progress: Callable[[TraceRow], None] | None = None) -> DistributedResult:
    """Consensus ADMM: quadratic penalty at fixed eta, every dual step equal to xi0.

    No surrogate gate, no step-size rule and no penalty adaptation; the round
    model and iteration cap are shared with the surrogate method.
    """
    cfg = config or AlgorithmConfig()
    r = _Runner(problem, cfg, limits, backend, log_path, False, cfg.round_model)
    return r.run("admm", cfg.k_max, cfg.tol_primal, cfg.tol_dual, cfg.tol_stall, progress)
