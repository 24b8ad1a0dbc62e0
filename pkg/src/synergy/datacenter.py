"""IoT edge / fog / cloud data-center models.

Data volumes are in Mb, frequencies in cycles/s, device powers in W. The
builders convert device power to per-unit on the scenario base so the
exported load can enter the nodal balance.

CPU frequency is chosen from a finite level set; with a single level the
compute power is linear in the processed volume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .model import CloudCenter, EdgeCenter, Scenario
from .powerflow import agent_of
from .qcqp.problem import BINARY, EQ, INTEGER, LE, Coupling, Handles, QcqpProblem

BITS_PER_MB = 1e6


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# pure physics

def shannon_rate(bandwidth: float, gain: float, tx_power: float, noise: float) -> float:
    """Achievable rate in bit/s: W * log2(1 + h*g / sigma^2)."""
    if noise <= 0:
        raise ModelError("noise power must be positive")
    if bandwidth <= 0:
        raise ModelError("bandwidth must be positive")
    snr = gain * tx_power / noise
    if snr < 0:
        raise ModelError("gain and transmit power must be non-negative")
    return bandwidth * math.log2(1.0 + snr)


def compute_power(k: float, d: float, f: float, bits: float) -> float:
    """Processing power k * U * d * f^2 (W) for ``bits`` processed at frequency f."""
    return k * bits * d * f * f


def transmit_power(bits: float, tx_power: float, rate: float) -> float:
    """Transmission power U * g / R (W)."""
    if bits == 0:
        return 0.0
    if rate <= 0:
        raise ModelError("positive traffic over a zero-rate channel")
    return bits * tx_power / rate


def queue_step(H: float, u_cal: float, u_tran: float, inflow: float, tol: float = 1e-9) -> float:
    """Next queue length; outflow may not exceed the current backlog."""
    if u_cal + u_tran > H + tol:
        raise ModelError(f"outflow {u_cal + u_tran} exceeds queue {H}")
    return H - u_cal - u_tran + inflow


def drift_bound(H: float, u_cal: float, u_tran: float, inflow: float, B: float) -> tuple[float, float]:
    """(actual drift, upper bound B + H*(inflow - outflow))."""
    net = inflow - u_cal - u_tran
    H1 = H + net
    return 0.5 * H1 * H1 - 0.5 * H * H, B + H * net


def drift_constant(max_inflow: float, max_outflow: float) -> float:
    """Smallest B with B >= 0.5*(inflow - outflow)^2 for non-negative flows up to the caps."""
    return 0.5 * max(max_inflow, max_outflow) ** 2


def cloud_power(mu: float, n: float, M: int, p_peak: float, p_idle: float, pue: float) -> float:
    """[(P_peak - P_idle) * mu * n + M * P_idle] * PUE, in W."""
    return ((p_peak - p_idle) * mu * n + M * p_idle) * pue


def mm1_delay(mu: float, lam: float, n: float, I: float) -> float:
    """Mean sojourn time 1 / (mu - lam / (n*I)); infinite when the queue is unstable."""
    slack = mu - lam / (n * I)
    return math.inf if slack <= 0 else 1.0 / slack


def delay_constraint_holds(mu: float, lam: float, n: float, I: float, tau_max: float, tol: float = 1e-12) -> bool:
    """Linear form n*I <= (mu*n*I - lam) * tau_max."""
    return n * I <= (mu * n * I - lam) * tau_max + tol


# ---------------------------------------------------------------------------
# derived per-center data

def channel_rates(center: EdgeCenter) -> list[float]:
    return [shannon_rate(center.bandwidth, h, g, center.noise)
            for h, g in zip(center.gain, center.tx_power)]


def cal_cap(center: EdgeCenter, f: float) -> float:
    """Largest volume (Mb) processable in one slot at frequency f."""
    return f * center.slot / center.d / BITS_PER_MB


def tran_cap(center: EdgeCenter, t: int) -> float:
    return min(channel_rates(center)[t] * center.slot / BITS_PER_MB, center.h_max)


@dataclass(frozen=True)
class LyapunovParams:
    center: str
    V: float
    B: float


def lyapunov_params(scenario: Scenario) -> dict[str, LyapunovParams]:
    """Drift weight and bound constant for every IoT and fog center."""
    out = {}
    feeds = fog_feeds(scenario)
    for c in scenario.iot:
        out_max = cal_cap(c, max(c.f_levels)) + max(tran_cap(c, t) for t in range(scenario.horizon))
        out[c.id] = LyapunovParams(c.id, c.v_weight, drift_constant(max(c.arrivals), out_max))
    for c in scenario.fog:
        iots = [i for i in scenario.iot if i.id in feeds[c.id]]
        in_max = max((sum(tran_cap(i, t) for i in iots) for t in range(scenario.horizon)), default=0.0)
        out_max = cal_cap(c, max(c.f_levels)) + max(tran_cap(c, t) for t in range(scenario.horizon))
        out[c.id] = LyapunovParams(c.id, c.v_weight, drift_constant(in_max, out_max))
    return out


def _default_target(explicit: str | None, options: list[str]) -> str | None:
    if explicit is not None:
        return explicit
    return options[0] if len(options) == 1 else None


def fog_feeds(scenario: Scenario) -> dict[str, list[str]]:
    """fog id -> IoT ids sending to it."""
    feeds: dict[str, list[str]] = {f.id: [] for f in scenario.fog}
    for c in scenario.iot:
        target = _default_target(c.fog, [f.id for f in scenario.fog])
        if target is not None:
            feeds[target].append(c.id)
    return feeds


def cloud_feeds(scenario: Scenario) -> dict[str, list[str]]:
    feeds: dict[str, list[str]] = {c.id: [] for c in scenario.cloud}
    for f in scenario.fog:
        target = _default_target(f.cloud, [c.id for c in scenario.cloud])
        if target is not None:
            feeds[target].append(f.id)
    return feeds


def _watts_to_pu(scenario: Scenario) -> float:
    return 1.0 / ((scenario.base_mva or 1.0) * 1e6)


# ---------------------------------------------------------------------------
# builders

def _build_edge(scenario: Scenario, problem: QcqpProblem, c: EdgeCenter, kind: str,
                can_forward: bool) -> tuple[Handles, dict[int, dict[str, str]]]:
    """Variables and rows shared by IoT and fog centers, excluding the queue inflow."""
    h = Handles()
    a = agent_of(kind, c.id)
    T = scenario.horizon
    to_pu = _watts_to_pu(scenario)
    rates = channel_rates(c)
    per_t: dict[int, dict[str, str]] = {}
    H = [problem.add_var((kind, c.id, "H", 0), a, c.h_init, c.h_init)]
    for t in range(T):
        H.append(problem.add_var((kind, c.id, "H", t + 1), a, 0.0, c.h_max))
    h.variables += H
    levels = c.f_levels
    for t in range(T):
        ucal = problem.add_var((kind, c.id, "Ucal", t), a, 0.0, cal_cap(c, max(levels)))
        ucap = tran_cap(c, t) if can_forward else 0.0
        utran = problem.add_var((kind, c.id, "Utran", t), a, 0.0, ucap)
        p_max = max(compute_power(c.k, c.d, f, cal_cap(c, f) * BITS_PER_MB) for f in levels)
        p_tran_coef = (transmit_power(BITS_PER_MB, c.tx_power[t], rates[t]) if rates[t] > 0 else 0.0) * to_pu
        p = problem.add_var((kind, c.id, "p", t), a, 0.0, p_max * to_pu + p_tran_coef * ucap)
        h.variables += [ucal, utran, p]
        power_row = {p: 1.0, utran: -p_tran_coef}
        if len(levels) == 1:
            f = levels[0]
            power_row[ucal] = -compute_power(c.k, c.d, f, BITS_PER_MB) * to_pu
        else:
            pick: dict[str, float] = {}
            split = {ucal: 1.0}
            for li, f in enumerate(levels):
                y = problem.add_var((kind, c.id, "level", t, li), a, kind=BINARY)
                ul = problem.add_var((kind, c.id, "Ulevel", t, li), a, 0.0, cal_cap(c, f))
                h.variables += [y, ul]
                pick[y] = 1.0
                split[ul] = -1.0
                power_row[ul] = -compute_power(c.k, c.d, f, BITS_PER_MB) * to_pu
                h.rows.append(problem.add_row(f"{kind}.{c.id}.level_cap.{t}.{li}", {ul: 1.0, y: -cal_cap(c, f)},
                                              LE, 0.0, kind, a))
            h.rows.append(problem.add_row(f"{kind}.{c.id}.level_pick.{t}", pick, EQ, 1.0, kind, a))
            h.rows.append(problem.add_row(f"{kind}.{c.id}.level_split.{t}", split, EQ, 0.0, kind, a))
        h.rows.append(problem.add_row(f"{kind}.{c.id}.power.{t}", power_row, EQ, 0.0, kind, a))
        h.rows.append(problem.add_row(f"{kind}.{c.id}.backlog.{t}", {ucal: 1.0, utran: 1.0, H[t]: -1.0},
                                      LE, 0.0, kind, a))
        problem.add_objective(p, scenario.pi[t])
        h.exports[(c.id, t)] = (p, -1.0, f"p_{'iot' if kind == 'iot' else 'fdc'}", a)
        per_t[t] = {"H": H[t], "H_next": H[t + 1], "Ucal": ucal, "Utran": utran, "p": p}
    return h, per_t


def lyapunov_objective_terms(problem: QcqpProblem, center: EdgeCenter, kind: str, t: int,
                             v: dict[str, str], inflow_const: float, inflow_vars: list[str]) -> int:
    """Add (H/V) * (inflow - Ucal - Utran) for one slot; returns the number of products registered."""
    a = agent_of(kind, center.id)
    inv_v = 1.0 / center.v_weight
    H = v["H"]
    if inflow_const:
        problem.add_objective(H, inv_v * inflow_const)
    count = 0
    for src in inflow_vars:
        problem.add_bilinear(f"{kind}.{center.id}.H_in.{src.split('.')[-2]}.{t}", H, src, inv_v, a)
        count += 1
    problem.add_bilinear(f"{kind}.{center.id}.H_Ucal.{t}", H, v["Ucal"], -inv_v, a)
    problem.add_bilinear(f"{kind}.{center.id}.H_Utran.{t}", H, v["Utran"], -inv_v, a)
    return count + 2


def build_iot(scenario: Scenario, problem: QcqpProblem) -> tuple[Handles, dict[str, dict[int, dict[str, str]]]]:
    h = Handles()
    feeds = fog_feeds(scenario)
    targets = {i for ids in feeds.values() for i in ids}
    out = {}
    for c in scenario.iot:
        a = agent_of("iot", c.id)
        hh, per_t = _build_edge(scenario, problem, c, "iot", c.id in targets)
        h.extend(hh)
        for t, v in per_t.items():
            h.rows.append(problem.add_row(
                f"iot.{c.id}.queue.{t}", {v["H_next"]: 1.0, v["H"]: -1.0, v["Ucal"]: 1.0, v["Utran"]: 1.0},
                EQ, c.arrivals[t], "iot", a))
            lyapunov_objective_terms(problem, c, "iot", t, v, c.arrivals[t], [])
        out[c.id] = per_t
    return h, out


def build_fog(scenario: Scenario, problem: QcqpProblem,
              iot_vars: dict[str, dict[int, dict[str, str]]]) -> tuple[Handles, dict[str, dict[int, dict[str, str]]]]:
    """Fog centers hold their own copy of every incoming IoT transfer."""
    h = Handles()
    feeds = fog_feeds(scenario)
    senders = {i for ids in cloud_feeds(scenario).values() for i in ids}
    out = {}
    for c in scenario.fog:
        a = agent_of("fog", c.id)
        hh, per_t = _build_edge(scenario, problem, c, "fog", c.id in senders)
        h.extend(hh)
        for t, v in per_t.items():
            copies = []
            for iot_id in feeds[c.id]:
                src = iot_vars[iot_id][t]["Utran"]
                ub = problem.variables[src].ub
                cp = problem.add_var(("fog", c.id, f"in-{iot_id}", t), a, 0.0, ub)
                copies.append(cp)
                h.variables.append(cp)
                problem.add_coupling(Coupling(
                    name=f"U_iot_tran.{iot_id}.{t}", family="d", tau=t, symbol="U_iot_tran",
                    up_agent=agent_of("iot", iot_id), up_var=src, down_agent=a, down_var=cp))
            row = {v["H_next"]: 1.0, v["H"]: -1.0, v["Ucal"]: 1.0, v["Utran"]: 1.0}
            row.update({cp: -1.0 for cp in copies})
            h.rows.append(problem.add_row(f"fog.{c.id}.queue.{t}", row, EQ, 0.0, "fog", a))
            lyapunov_objective_terms(problem, c, "fog", t, v, 0.0, copies)
            v["inflow"] = copies
        out[c.id] = per_t
    return h, out


def build_cloud(scenario: Scenario, problem: QcqpProblem,
                fog_vars: dict[str, dict[int, dict[str, str]]]) -> tuple[Handles, dict[str, dict[int, dict[str, str]]]]:
    """Server count, utilization, delay and facility power of each cloud center."""
    h = Handles()
    feeds = cloud_feeds(scenario)
    to_pu = _watts_to_pu(scenario)
    out = {}
    for c in scenario.cloud:
        out[c.id] = cloud_constraints(scenario, problem, c, fog_vars, feeds[c.id], to_pu, h)
    return h, out


def cloud_constraints(scenario: Scenario, problem: QcqpProblem, c: CloudCenter,
                      fog_vars: dict[str, dict[int, dict[str, str]]], senders: list[str],
                      to_pu: float, h: Handles) -> dict[int, dict[str, str]]:
    a = agent_of("cloud", c.id)
    I, M, tau_max = c.bits_per_request, c.servers, c.max_latency
    per_t = {}
    for t in range(scenario.horizon):
        lam_parts = []
        for fog_id in senders:
            src = fog_vars[fog_id][t]["Utran"]
            cp = problem.add_var(("cloud", c.id, f"lam-{fog_id}", t), a, 0.0, problem.variables[src].ub)
            lam_parts.append(cp)
            problem.add_coupling(Coupling(
                name=f"U_fdc_tran.{fog_id}.{t}", family="d", tau=t, symbol="U_fdc_tran",
                up_agent=agent_of("fog", fog_id), up_var=src, down_agent=a, down_var=cp))
        n = problem.add_var(("cloud", c.id, "n", t), a, 0.0, M, kind=INTEGER)
        mu = problem.add_var(("cloud", c.id, "mu", t), a, 0.0, 1.0)
        w = problem.add_var(("cloud", c.id, "w", t), a, 0.0, M)
        p_lo = cloud_power(0.0, 0.0, M, c.p_peak, c.p_idle, c.pue) * to_pu
        p_hi = cloud_power(1.0, M, M, c.p_peak, c.p_idle, c.pue) * to_pu
        p = problem.add_var(("cloud", c.id, "p", t), a, p_lo, p_hi)
        h.variables += [*lam_parts, n, mu, w, p]
        problem.add_int_product(f"cloud.{c.id}.mu_n.{t}", mu, n, w, M, a)
        cap = {n: -I}
        cap.update({v: 1.0 for v in lam_parts})
        h.rows.append(problem.add_row(f"cloud.{c.id}.servers.{t}", cap, LE, 0.0, "cloud", a))
        delay = {n: I, w: -tau_max * I}
        delay.update({v: tau_max for v in lam_parts})
        h.rows.append(problem.add_row(f"cloud.{c.id}.delay.{t}", delay, LE, 0.0, "cloud", a))
        h.rows.append(problem.add_row(
            f"cloud.{c.id}.power.{t}", {p: 1.0, w: -(c.p_peak - c.p_idle) * c.pue * to_pu},
            EQ, M * c.p_idle * c.pue * to_pu, "cloud", a))
        problem.add_objective(p, scenario.pi[t])
        h.exports[(c.id, t)] = (p, -1.0, "p_cdc", a)
        per_t[t] = {"n": n, "mu": mu, "w": w, "p": p, "lam": lam_parts}
    return per_t
