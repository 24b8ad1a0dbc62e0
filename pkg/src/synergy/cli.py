"""Command line entry point: ``synergy run``, ``synergy compare``, ``synergy plotdata``.

Every output file is a deterministic function of (scenario file, flags); wall
times go to the log only.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .decomposition import DistributedResult, admm_baseline, run_algorithm1, write_trace
from .model import ScenarioError, Scenario, bundled_scenario_path, load_scenario
from .powerflow import socp_exactness_gap
from .qcqp.assemble import Model, assemble_model
from .simnet import privacy_audit
from .solver import Limits, solve

log = logging.getLogger("synergy")

MODES = ("centralized", "distributed", "admm")


@dataclass
class RunReport:
    mode: str
    vartheta: int
    objective: float
    status: str
    iterations: int = 0
    gap: float | None = None
    centralized_objective: float | None = None
    bound: float | None = None
    socp_residual: float | None = None
    gamma_p: float | None = None
    gamma_d: float | None = None
    reason: str = ""
    privacy: str | None = None
    tables: dict[str, list[dict]] = field(default_factory=dict)
    trace: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        out = {k: v for k, v in dataclasses.asdict(self).items() if k not in ("tables", "trace")}
        out["tables"] = sorted(self.tables)
        return out


def _fmt(x: float) -> str:
    return f"{x + 0.0:.10g}"  # no negative zero


def schedule_tables(model: Model, x: dict[str, float]) -> dict[str, list[dict]]:
    """Per-slot schedule tables (all of length T) from a full assignment."""
    sc = model.scenario
    T = sc.horizon
    tables: dict[str, list[dict]] = {}
    tables["generation"] = [{"tau": t, **{g.id: x[f"gen.{g.id}.p.{t}"] for g in sc.generators},
                             "grid": x[f"pf.grid.import.{t}"]} for t in range(T)]
    tables["storage"] = [{"tau": t, **{f"{e.id}_soc": x[f"ess.{e.id}.S.{t + 1}"] for e in sc.ess},
                          **{f"{e.id}_net": x[f"ess.{e.id}.net.{t}"] for e in sc.ess}} for t in range(T)]
    edges = [("iot", c.id, model.iot[c.id]) for c in sc.iot] + [("fog", c.id, model.fog[c.id]) for c in sc.fog]
    tables["queues"] = [{"tau": t, **{cid: x[v[t]["H_next"]] for _, cid, v in edges}} for t in range(T)]
    for _, cid, v in edges:
        tables[f"tasks_{cid}"] = [{"tau": t, "local": x[v[t]["Ucal"]], "stored": x[v[t]["H_next"]],
                                   "forwarded": x[v[t]["Utran"]]} for t in range(T)]
    tables["cloud"] = [{"tau": t, **{f"{cid}_{k}": x[v[t][k]] for cid, v in model.cloud.items()
                                      for k in ("n", "mu", "p")}} for t in range(T)]
    tables["power"] = power_stack(model, x)
    return tables


def power_stack(model: Model, x: dict[str, float]) -> list[dict]:
    """Supply (grid, generators, storage, uncontrolled net injection) against demand
    (data centers and line losses) per slot; the two totals agree at any feasible point."""
    sc = model.scenario
    rows = []
    for t in range(sc.horizon):
        gen = sum(x[f"gen.{g.id}.p.{t}"] for g in sc.generators)
        ess = sum(x[f"ess.{e.id}.net.{t}"] for e in sc.ess)
        net = sum(sc.renewable(b.id)[t] for b in sc.buses)
        grid = x[f"pf.grid.import.{t}"]
        iot = sum(x[v[t]["p"]] for v in model.iot.values())
        fog = sum(x[v[t]["p"]] for v in model.fog.values())
        cloud = sum(x[v[t]["p"]] for v in model.cloud.values())
        losses = sum(ln.r * x[f"pf.line{ln.from_bus}-{ln.to_bus}.l.{t}"] for ln in sc.lines)
        rows.append({"tau": t, "grid": grid, "generation": gen, "storage": ess, "uncontrolled": net,
                     "supply": grid + gen + ess + net, "iot": iot, "fog": fog, "cloud": cloud,
                     "losses": losses, "demand": iot + fog + cloud + losses})
    return rows


def write_table(rows: Sequence[dict], path: Path) -> Path:
    with path.open("w", newline="") as fh:
        if not rows:
            return path
        wr = csv.writer(fh)
        keys = list(rows[0])
        wr.writerow(keys)
        for r in rows:
            wr.writerow([_fmt(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
    return path


def run_centralized(model: Model, limits: Limits, backend: str) -> RunReport:
    res = solve(model.problem, limits, backend)
    if not res.ok:
        return RunReport("centralized", model.reformulation.vartheta if model.reformulation else 0,
                         float("nan"), res.status, reason=res.message)
    rep = RunReport("centralized", model.reformulation.vartheta, res.objective, res.status,
                    bound=res.bound, socp_residual=socp_exactness_gap(model.problem, res.assignment))
    rep.tables = schedule_tables(model, res.assignment)
    return rep


def _distributed_report(mode: str, model: Model, res: DistributedResult) -> RunReport:
    rep = RunReport(mode, model.reformulation.vartheta, res.objective, "converged" if res.converged else "stopped",
                    iterations=res.rounds, gamma_p=res.gamma_p, gamma_d=res.gamma_d, reason=res.reason,
                    privacy=str(privacy_audit(res.records)).splitlines()[0],
                    socp_residual=socp_exactness_gap(model.problem, res.assignment))
    rep.tables = schedule_tables(model, res.assignment)
    rep.trace = [{"k": r.k, "gamma_p": r.gamma_p, "gamma_d": r.gamma_d} for r in res.trace]
    return rep


def execute(mode: str, scenario: Scenario, vartheta: int, out: Path | None, *, kmax: int | None = None,
            tol_primal: float | None = None, tol_dual: float | None = None, seed: int | None = None,
            backend: str = "highs", limits: Limits = Limits(), with_gap: bool = True) -> RunReport:
    """Run one mode and write its files into ``out`` (when given)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    cfg = scenario.config
    changes = {k: v for k, v in (("k_max", kmax), ("tol_primal", tol_primal), ("tol_dual", tol_dual),
                                 ("seed", seed)) if v is not None}
    cfg = dataclasses.replace(cfg, vartheta=vartheta, **changes)
    model = assemble_model(scenario, vartheta)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    if mode == "centralized":
        rep = run_centralized(model, limits, backend)
    else:
        fn = run_algorithm1 if mode == "distributed" else admm_baseline
        res = fn(model.problem, cfg, limits, backend, out / "messages.ndjson" if out else None)
        rep = _distributed_report(mode, model, res)
        if out is not None:
            write_trace(res.trace, out / "trace.csv")
        if with_gap:
            cent = solve(assemble_model(scenario, vartheta).problem, limits, backend)
            if cent.ok:
                rep.centralized_objective = cent.objective
                rep.gap = abs(rep.objective - cent.objective) / max(1.0, abs(cent.objective))
    log.info("%s run finished in %.1f s", mode, time.monotonic() - t0)
    if out is not None:
        for name, rows in rep.tables.items():
            write_table(rows, out / f"{name}.csv")
        summary = rep.summary()
        summary["scenario"] = scenario.name
        summary["config"] = dataclasses.asdict(cfg)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return rep


def compare(scenario: Scenario, varthetas: Sequence[int], modes: Sequence[str] = ("centralized",),
            limits: Limits = Limits(), backend: str = "highs") -> list[dict]:
    """Objective and bound per (vartheta, mode): the precision sweep table."""
    if not varthetas:
        raise ValueError("at least one vartheta is required")
    rows = []
    for th in varthetas:
        for mode in modes:
            rep = execute(mode, scenario, th, None, limits=limits, backend=backend, with_gap=False)
            rows.append({"vartheta": th, "mode": mode, "status": rep.status, "objective": rep.objective,
                         "bound": rep.bound if rep.bound is not None else float("nan"),
                         "iterations": rep.iterations})
    return rows


def emit_plotdata(out: Path, report: RunReport) -> list[Path]:
    """Residual curve, task allocation and power stack CSVs for plotting tools."""
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if report.trace:
        files.append(write_table(report.trace, out / "plot_residuals.csv"))
    for name, rows in sorted(report.tables.items()):
        if name.startswith("tasks_"):
            files.append(write_table(rows, out / f"plot_{name}.csv"))
    files.append(write_table(report.tables.get("power", []), out / "plot_power_stack.csv"))
    return files


# -- argument handling ---------------------------------------------------------

def _backend(value: str) -> str:
    if value == "internal":
        return "highs"
    if value == "bnb" or value.startswith("external:"):
        return value
    raise argparse.ArgumentTypeError("expected internal, bnb or external:<path>")


def _scenario(arg: str) -> Scenario:
    if arg in ("fixture", "fixture_6bus"):
        return load_scenario(bundled_scenario_path())
    return load_scenario(arg)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synergy", description="Co-dispatch of distribution grids and data centers.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--kmax", type=int)
        sp.add_argument("--tol-primal", type=float)
        sp.add_argument("--tol-dual", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--solver", type=_backend, default="internal", help="internal, bnb or external:<path>")
        sp.add_argument("--time-limit", type=float, default=60.0)

    run = sub.add_parser("run", help="solve one scenario")
    run.add_argument("args", nargs="+", metavar="ARG",
                     help="[MODE] SCENARIO: scenario path (or 'fixture'), optionally preceded by the mode")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--vartheta", type=int)
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--plotdata", action="store_true", help="also write plot_*.csv series")
    common(run)

    cmp_ = sub.add_parser("compare", help="precision sweep over vartheta")
    cmp_.add_argument("scenario")
    cmp_.add_argument("--vartheta", type=int, nargs="*", default=None, dest="varthetas")
    cmp_.add_argument("--modes", default="centralized")
    cmp_.add_argument("--out", type=Path)
    common(cmp_)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("SYNERGY_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    ns = parser.parse_args(argv)
    limits = Limits(time_limit=ns.time_limit)
    try:
        if ns.command == "run":
            if len(ns.args) > 2:
                parser.error("run takes at most MODE and SCENARIO")
            mode = ns.args[0] if len(ns.args) == 2 else (ns.mode or "centralized")
            if mode not in MODES:
                parser.error(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
            if ns.mode and len(ns.args) == 2 and ns.mode != mode:
                parser.error("conflicting modes")
            sc = _scenario(ns.args[-1])
            th = sc.config.vartheta if ns.vartheta is None else ns.vartheta
            rep = execute(mode, sc, th, ns.out, kmax=ns.kmax, tol_primal=ns.tol_primal, tol_dual=ns.tol_dual,
                          seed=ns.seed, backend=ns.solver, limits=limits)
            if ns.plotdata:
                emit_plotdata(ns.out, rep)
            print(json.dumps(rep.summary(), indent=2, sort_keys=True))
            return 0 if rep.status in ("optimal", "feasible", "converged") else 1
        sc = _scenario(ns.scenario)
        if ns.varthetas is not None and not ns.varthetas:
            parser.error("--vartheta needs at least one value")
        ths = ns.varthetas if ns.varthetas is not None else [0, sc.config.vartheta]
        modes = [m.strip() for m in ns.modes.split(",") if m.strip()]
        bad = [m for m in modes if m not in MODES]
        if bad:
            parser.error(f"unknown mode {bad[0]!r}")
        rows = compare(sc, ths, modes, limits, ns.solver)
        if ns.out:
            ns.out.mkdir(parents=True, exist_ok=True)
            write_table(rows, ns.out / "compare.csv")
        wr = csv.writer(sys.stdout)
        wr.writerow(list(rows[0]))
        for r in rows:
            wr.writerow([_fmt(v) if isinstance(v, float) else v for v in r.values()])
        return 0
    except ScenarioError as exc:
        print(f"synergy: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
