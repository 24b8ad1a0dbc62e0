"""In-process synchronous message bus with a hash-chained log.

Every scalar that crosses an agent boundary goes through :class:`Bus`. A
record in the log is one JSON object per line::

    {"k": 3, "from": "gen:G1", "to": "operator", "kind": "shared",
     "symbols": ["p_g.G1.0"], "values": [0.70], "flag": null,
     "prev": "<hash>", "hash": "<hash>"}

Symbols are ``<base>.<device>.<tau>`` for coupling values and bare names for
scalars. The privacy audit checks only the base (text before the first dot).
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

COORDINATOR = "coordinator"
BROADCAST = "*"

SHARED, LAGRANGIAN, ANNOUNCE = "shared", "lagrangian", "broadcast"
KINDS = (SHARED, LAGRANGIAN, ANNOUNCE)

WHITELIST = frozenset({
    "p_g", "p_iot", "p_fdc", "p_cdc", "p_ess_net", "U_iot_tran", "U_fdc_tran",
    "L_eta_i", "L_eta", "gamma_p", "gamma_d", "xi", "alpha", "eta_p", "eta_d",
})

GENESIS = "0" * 64


class NetworkError(RuntimeError):
    pass


class RoundAborted(NetworkError):
    def __init__(self, k: int, agent: str):
        super().__init__(f"round {k} aborted: no outbox from {agent}")
        self.k = k
        self.agent = agent


class LogError(NetworkError):
    pass


@dataclass(frozen=True)
class Message:
    k: int
    sender: str
    receiver: str
    kind: str
    symbols: tuple[str, ...]
    values: tuple[float, ...]
    flag: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NetworkError(f"unknown message kind {self.kind!r}")
        if len(self.symbols) != len(self.values):
            raise NetworkError("symbols and values differ in length")

    @property
    def size(self) -> int:
        return len(self.values)

    def record(self) -> dict:
        return {"k": self.k, "from": self.sender, "to": self.receiver, "kind": self.kind,
                "symbols": list(self.symbols), "values": [float(v) for v in self.values],
                "flag": self.flag}


def base_symbol(symbol: str) -> str:
    return symbol.split(".", 1)[0]


def _chain(prev: str, rec: Mapping) -> str:
    body = json.dumps({k: rec[k] for k in ("k", "from", "to", "kind", "symbols", "values", "flag")},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256((prev + body).encode()).hexdigest()


def _order(m: Message) -> tuple:
    return (m.k, m.sender, m.receiver, m.kind)


@dataclass
class Bus:
    """Synchronous barrier delivery between a fixed set of agents and one coordinator."""

    agents: Sequence[str]
    log_path: Path | None = None
    records: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.agents = tuple(sorted(self.agents))
        self._lock = threading.Lock()
        self._pending: dict[int, dict[str, list[Message]]] = {}
        self._head = GENESIS
        if self.log_path is not None:
            self.log_path = Path(self.log_path)
            self.log_path.write_text("")

    def submit(self, k: int, agent: str, outbox: Iterable[Message]) -> None:
        """Deposit an agent's outbox for round ``k``; safe to call from several threads."""
        msgs = list(outbox)
        for m in msgs:
            if m.k != k or m.sender != agent:
                raise NetworkError(f"{agent} submitted a message stamped {m.sender}@{m.k}")
        with self._lock:
            self._pending.setdefault(k, {})[agent] = msgs

    def round_exchange(self, k: int, outboxes: Mapping[str, Iterable[Message]] | None = None
                       ) -> dict[str, list[Message]]:
        """Barrier for round ``k``: log every message, then return inboxes by receiver."""
        for agent, msgs in (outboxes or {}).items():
            self.submit(k, agent, msgs)
        with self._lock:
            got = self._pending.pop(k, {})
        for agent in self.agents:
            if agent not in got:
                raise RoundAborted(k, agent)
        msgs = sorted((m for a in self.agents for m in got[a]), key=_order)
        inboxes: dict[str, list[Message]] = {a: [] for a in (*self.agents, COORDINATOR)}
        for m in msgs:
            if m.receiver not in inboxes:
                raise NetworkError(f"unknown receiver {m.receiver}")
            self._append(m)
            inboxes[m.receiver].append(m)
        return inboxes

    def broadcast(self, k: int, symbols: Sequence[str], values: Sequence[float]) -> Message:
        m = Message(k, COORDINATOR, BROADCAST, ANNOUNCE, tuple(symbols), tuple(float(v) for v in values))
        self._append(m)
        return m

    def inject(self, m: Message) -> None:
        """Append a message outside the round protocol (used to exercise the audit)."""
        self._append(m)

    def _append(self, m: Message) -> None:
        rec = m.record()
        rec["prev"] = self._head
        rec["hash"] = self._head = _chain(self._head, rec)
        with self._lock:
            self.records.append(rec)
            if self.log_path is not None:
                with self.log_path.open("a") as fh:
                    fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_log(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def verify_chain(records: Sequence[Mapping]) -> None:
    """Raise :class:`LogError` at the first record whose hash does not follow."""
    prev = GENESIS
    for i, rec in enumerate(records):
        if rec.get("prev") != prev or rec.get("hash") != _chain(prev, rec):
            raise LogError(f"hash chain broken at record {i}")
        prev = rec["hash"]


@dataclass
class AuditReport:
    passed: bool
    offenders: list[tuple[int, str, str]] = field(default_factory=list)
    messages: int = 0

    def __str__(self) -> str:
        if self.passed:
            return f"PASS ({self.messages} messages)"
        lines = [f"FAIL ({len(self.offenders)} offending symbols)"]
        lines += [f"  round {k} from {s}: {sym}" for k, s, sym in self.offenders]
        return "\n".join(lines)


def privacy_audit(records: Iterable[Mapping], whitelist: frozenset[str] = WHITELIST) -> AuditReport:
    offenders = []
    n = 0
    for rec in records:
        n += 1
        for sym in rec["symbols"]:
            if base_symbol(sym) not in whitelist:
                offenders.append((rec["k"], rec["from"], sym))
    return AuditReport(not offenders, offenders, n)


@dataclass
class ReplayState:
    k: int
    shared: dict[tuple[str, str], float]
    lagrangians: dict[str, float]
    announced: dict[str, float]


def replay(records: Sequence[Mapping], k: int) -> ReplayState:
    """Shared values as last sent by each agent up to and including round ``k``."""
    rounds = {int(r["k"]) for r in records}
    for j in range(k + 1):
        if j not in rounds:
            raise LogError(f"log has no record for round {j}")
    shared: dict[tuple[str, str], float] = {}
    lag: dict[str, float] = {}
    ann: dict[str, float] = {}
    for r in records:
        if r["k"] > k:
            continue
        pairs = dict(zip(r["symbols"], r["values"]))
        if r["kind"] == SHARED:
            for sym, v in pairs.items():
                shared[(r["from"], sym)] = v
        elif r["kind"] == LAGRANGIAN and r["k"] == k:
            lag[r["from"]] = pairs["L_eta_i"]
        elif r["kind"] == ANNOUNCE and r["k"] == k:
            ann.update(pairs)
    return ReplayState(k, shared, lag, ann)


def scalars_per_agent(records: Iterable[Mapping]) -> dict[tuple[int, str], int]:
    """Scalars sent by each non-coordinator agent in each round."""
    out: dict[tuple[int, str], int] = {}
    for r in records:
        if r["from"] == COORDINATOR:
            continue
        key = (r["k"], r["from"])
        out[key] = out.get(key, 0) + len(r["values"])
    return out
