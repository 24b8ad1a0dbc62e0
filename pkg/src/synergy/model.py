"""Physical system description and scenario ingestion.

A :class:`Scenario` is immutable once built. Network-level quantities
(bus/line limits, generators, storage, renewables) are expressed in per-unit
on ``base_mva`` after :func:`normalize_units`; data-center internals keep
their physical units (W, Mb, cycles/s) and are converted by the builders.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping, Sequence


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or violates an invariant."""


class ScenarioParseError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    pass


def _fail(kind: str, ident: Any, msg: str) -> None:
    raise ScenarioValidationError(f"{kind} {ident!r}: {msg}")


def _series(values: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class Bus:
    id: int
    v_min: float
    v_max: float
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    devices: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.v_min > 0:
            _fail("Bus", self.id, "v_min must be > 0")
        if self.v_min > self.v_max:
            _fail("Bus", self.id, "v_min <= v_max violated")
        if self.p_min > self.p_max or self.q_min > self.q_max:
            _fail("Bus", self.id, "injection bounds inverted")


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float
    p_max: float
    q_max: float
    l_max: float
    z2: float | None = None

    def __post_init__(self):
        name = f"{self.from_bus}-{self.to_bus}"
        if self.r < 0 or self.x < 0:
            _fail("Line", name, "r >= 0 and x >= 0 required")
        z2 = self.r**2 + self.x**2
        if self.z2 is None:
            object.__setattr__(self, "z2", z2)
        elif abs(self.z2 - z2) > 1e-12:
            _fail("Line", name, "z2 must equal r^2 + x^2 within 1e-12")
        if self.p_max < 0 or self.q_max < 0 or self.l_max < 0:
            _fail("Line", name, "flow limits must be nonnegative")

    @property
    def name(self) -> str:
        return f"line{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Generator:
    id: str
    bus: int
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    kappa: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.p_min > self.p_max:
            _fail("Generator", self.id, "p_min <= p_max violated")
        if self.ramp_up < 0 or self.ramp_down < 0:
            _fail("Generator", self.id, "ramps must be >= 0")


@dataclass(frozen=True)
class EssUnit:
    id: str
    bus: int
    p_cha_max: float
    p_dis_max: float
    eta_cha: float
    eta_dis: float
    s_min: float
    s_max: float
    s_init: float

    def __post_init__(self):
        if not (0 < self.eta_cha <= 1 and 0 < self.eta_dis <= 1):
            _fail("EssUnit", self.id, "efficiencies must lie in (0, 1]")
        if not (self.s_min <= self.s_init <= self.s_max):
            _fail("EssUnit", self.id, "S_min <= S0 <= S_max violated")
        if self.p_cha_max < 0 or self.p_dis_max < 0:
            _fail("EssUnit", self.id, "charge/discharge caps must be >= 0")


@dataclass(frozen=True)
class EdgeCenter:
    """Fields shared by IoT edge and fog centers.

    ``k`` is the chip coefficient (W s^3/cycle^3), ``d`` the processing
    density (cycle/bit), ``slot`` the slot length in seconds, ``h_max`` the
    queue cap in Mb and ``v_weight`` the drift-plus-penalty weight. Channel
    quantities ``noise``, ``gain`` and ``tx_power`` are linear (W, unitless, W).
    """

    id: str
    bus: int
    k: float
    d: float
    f_min: float
    f_max: float
    slot: float
    h_max: float
    v_weight: float
    bandwidth: float
    noise: float
    gain: tuple[float, ...]
    tx_power: tuple[float, ...]
    h_init: float = 0.0
    f_levels: tuple[float, ...] = ()

    kind = "edge"

    def __post_init__(self):
        kind = type(self).__name__
        if self.f_min > self.f_max:
            _fail(kind, self.id, "f_min <= f_max violated")
        if not self.h_max > 0:
            _fail(kind, self.id, "H_max must be > 0")
        if not self.bandwidth > 0:
            _fail(kind, self.id, "bandwidth must be > 0")
        if not self.noise > 0:
            _fail(kind, self.id, "noise power must be > 0")
        if not self.v_weight > 0:
            _fail(kind, self.id, "Lyapunov weight V must be > 0")
        if not (0 <= self.h_init <= self.h_max):
            _fail(kind, self.id, "initial queue outside [0, H_max]")
        if any(g < 0 for g in self.gain) or any(g < 0 for g in self.tx_power):
            _fail(kind, self.id, "channel gain and transmit power must be >= 0")
        levels = self.f_levels or (self.f_max,)
        if any(f < self.f_min or f > self.f_max for f in levels):
            _fail(kind, self.id, "DVFS levels must lie in [f_min, f_max]")
        object.__setattr__(self, "f_levels", tuple(float(f) for f in levels))


@dataclass(frozen=True)
class IotCenter(EdgeCenter):
    arrivals: tuple[float, ...] = ()
    fog: str | None = None

    kind = "iot"

    def __post_init__(self):
        super().__post_init__()
        if any(s < 0 for s in self.arrivals):
            _fail("IotCenter", self.id, "arrivals must be >= 0")


@dataclass(frozen=True)
class FogCenter(EdgeCenter):
    cloud: str | None = None

    kind = "fog"


@dataclass(frozen=True)
class CloudCenter:
    id: str
    bus: int
    bits_per_request: float
    servers: int
    max_latency: float
    p_peak: float
    p_idle: float
    pue: float

    def __post_init__(self):
        if int(self.servers) != self.servers or self.servers < 1:
            _fail("CloudCenter", self.id, "M must be an integer >= 1")
        if self.p_idle > self.p_peak:
            _fail("CloudCenter", self.id, "P_idle <= P_peak violated")
        if self.pue < 1:
            _fail("CloudCenter", self.id, "PUE must be >= 1")
        if not self.max_latency > 0:
            _fail("CloudCenter", self.id, "max latency must be > 0")
        if not self.bits_per_request > 0:
            _fail("CloudCenter", self.id, "bits per request must be > 0")


ROUND_MODELS = ("jacobi", "gauss-seidel")


@dataclass(frozen=True)
class AlgorithmConfig:
    """Knobs for the RNMDT precision and the distributed iteration.

    ``r=None`` selects the iteration-dependent exponent r = 1/sqrt(k);
    a float pins a constant exponent, which must lie in (0, 1).
    """

    vartheta: int = -3
    c: float = 200.0
    r: float | None = None
    w: float = 1.01
    eta_p: float = 80.0
    eta_d: float = 200.0
    xi0: float = 1.3
    k_max: int = 200
    tol_primal: float = 1e-2
    tol_dual: float = 1e-2
    tol_stall: float = 1e-6
    round_model: str = "gauss-seidel"
    seed: int = 0

    def __post_init__(self):
        if int(self.vartheta) != self.vartheta or self.vartheta > 0:
            _fail("AlgorithmConfig", "vartheta", "must be a non-positive integer")
        if self.c < 1:
            _fail("AlgorithmConfig", "c", "c >= 1 required")
        if self.r is not None and not (0 < self.r < 1):
            _fail("AlgorithmConfig", "r", "0 < r < 1 required")
        if not self.w > 1:
            _fail("AlgorithmConfig", "w", "w > 1 required")
        if not (self.eta_p > 0 and self.eta_d > 0 and self.xi0 > 0):
            _fail("AlgorithmConfig", "eta/xi0", "penalties and step size must be > 0")
        if self.k_max < 1:
            _fail("AlgorithmConfig", "k_max", "k_max >= 1 required")
        if self.round_model not in ROUND_MODELS:
            _fail("AlgorithmConfig", "round_model", f"must be one of {ROUND_MODELS}")


@dataclass(frozen=True)
class Scenario:
    name: str
    horizon: int
    base_mva: float | None
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...] = ()
    ess: tuple[EssUnit, ...] = ()
    iot: tuple[IotCenter, ...] = ()
    fog: tuple[FogCenter, ...] = ()
    cloud: tuple[CloudCenter, ...] = ()
    pi: tuple[float, ...] = ()
    kappa: tuple[float, ...] = ()
    renewables: Mapping[int, tuple[float, ...]] = field(default_factory=dict)
    config: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    units: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_UNITS))
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "renewables", MappingProxyType(
            {int(b): _series(s) for b, s in dict(self.renewables).items()}))
        object.__setattr__(self, "units", MappingProxyType(dict(self.units)))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))
        _validate_scenario(self)

    # convenience lookups
    @property
    def root(self) -> int:
        return validate_radial(self).root

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def devices(self):
        return (*self.generators, *self.ess, *self.iot, *self.fog, *self.cloud)

    def kappa_for(self, gen: Generator) -> tuple[float, ...]:
        return gen.kappa if gen.kappa is not None else self.kappa

    def renewable(self, bus_id: int) -> tuple[float, ...]:
        return self.renewables.get(bus_id, (0.0,) * self.horizon)


def _validate_scenario(sc: Scenario) -> None:
    T = sc.horizon
    if int(T) != T or T < 1:
        _fail("Scenario", sc.name, "horizon must be a positive integer")
    ids = [b.id for b in sc.buses]
    if len(set(ids)) != len(ids):
        _fail("Scenario", sc.name, "bus ids must be unique")
    bus_ids = set(ids)
    for line in sc.lines:
        if line.from_bus not in bus_ids or line.to_bus not in bus_ids:
            _fail("Line", f"{line.from_bus}-{line.to_bus}", "references unknown bus")
    dev_ids = [d.id for d in sc.devices()]
    if len(set(dev_ids)) != len(dev_ids):
        _fail("Scenario", sc.name, "device ids must be unique across all device types")
    for dev in sc.devices():
        if dev.bus not in bus_ids:
            _fail(type(dev).__name__, dev.id, f"references unknown bus {dev.bus}")
    if len(sc.pi) != T:
        _fail("Scenario", sc.name, f"price series pi must have length {T}")
    for gen in sc.generators:
        if len(sc.kappa_for(gen)) != T:
            _fail("Generator", gen.id, f"kappa series must have length {T}")
    for b, s in sc.renewables.items():
        if b not in bus_ids:
            _fail("Scenario", sc.name, f"renewable series for unknown bus {b}")
        if len(s) != T:
            _fail("Scenario", sc.name, f"renewable series for bus {b} must have length {T}")
    fog_ids = {f.id for f in sc.fog}
    cloud_ids = {c.id for c in sc.cloud}
    for c in (*sc.iot, *sc.fog):
        if len(c.gain) != T or len(c.tx_power) != T:
            _fail(type(c).__name__, c.id, f"channel series must have length {T}")
    for c in sc.iot:
        if len(c.arrivals) != T:
            _fail("IotCenter", c.id, f"arrival series must have length {T}")
        if c.fog is not None and c.fog not in fog_ids:
            _fail("IotCenter", c.id, f"unknown fog center {c.fog!r}")
    for c in sc.fog:
        if c.cloud is not None and c.cloud not in cloud_ids:
            _fail("FogCenter", c.id, f"unknown cloud center {c.cloud!r}")


# --------------------------------------------------------------------------
# radial structure

@dataclass(frozen=True)
class RadialTree:
    root: int
    parent: Mapping[int, int]
    children: Mapping[int, tuple[int, ...]]
    depth: Mapping[int, int]

    @property
    def max_depth(self) -> int:
        return max(self.depth.values())

    def ancestors(self, bus: int) -> tuple[int, ...]:
        """Parent set of ``bus`` (empty for the root)."""
        return (self.parent[bus],) if bus in self.parent else ()


class RadialError(ScenarioValidationError):
    pass


def validate_radial(scenario: Scenario) -> RadialTree:
    """Return the parent/children maps of a radial network.

    Lines are oriented parent -> child. Raises :class:`RadialError` on a
    cycle, a bus with two parents, or a bus unreachable from the root.
    """
    buses = [b.id for b in scenario.buses]
    if len(buses) > 1 and not scenario.lines:
        raise RadialError("network has no lines")
    # union-find catches cycles independent of orientation
    uf = {b: b for b in buses}

    def find(a):
        while uf[a] != a:
            uf[a] = uf[uf[a]]
            a = uf[a]
        return a

    parent: dict[int, int] = {}
    children: dict[int, list[int]] = {b: [] for b in buses}
    for line in scenario.lines:
        i, j = line.from_bus, line.to_bus
        ri, rj = find(i), find(j)
        if ri == rj:
            raise RadialError(f"cycle detected at line {i}-{j}")
        uf[ri] = rj
        if j in parent:
            raise RadialError(f"bus {j} has more than one parent")
        parent[j] = i
        children[i].append(j)
    roots = [b for b in buses if b not in parent]
    if len(roots) != 1:
        orphans = sorted(roots)[1:]
        raise RadialError(f"orphan bus(es) not connected to the root: {orphans}")
    root = roots[0]
    depth = {root: 0}
    stack = [root]
    while stack:
        b = stack.pop()
        for c in children[b]:
            depth[c] = depth[b] + 1
            stack.append(c)
    missing = sorted(set(buses) - set(depth))
    if missing:
        raise RadialError(f"orphan bus(es) not connected to the root: {missing}")
    return RadialTree(
        root=root,
        parent=MappingProxyType(parent),
        children=MappingProxyType({b: tuple(sorted(c)) for b, c in children.items()}),
        depth=MappingProxyType(depth),
    )


# --------------------------------------------------------------------------
# units

DEFAULT_UNITS = {"power": "pu", "data": "Mb", "frequency": "Hz"}
POWER_TO_MW = {"W": 1e-6, "kW": 1e-3, "MW": 1.0, "GW": 1e3}
DATA_TO_MB = {"bit": 1e-6, "kb": 1e-3, "Mb": 1.0, "Gb": 1e3}
FREQ_TO_HZ = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}

_POWER_FIELDS = {
    Bus: ("p_min", "p_max", "q_min", "q_max"),
    Line: ("p_max", "q_max"),
    Generator: ("p_min", "p_max", "ramp_up", "ramp_down"),
    EssUnit: ("p_cha_max", "p_dis_max", "s_min", "s_max", "s_init"),
}
_DATA_FIELDS = {
    IotCenter: ("h_max", "h_init", "arrivals"),
    FogCenter: ("h_max", "h_init"),
    CloudCenter: ("bits_per_request",),
}
_FREQ_FIELDS = ("f_min", "f_max", "f_levels", "bandwidth")


def _scale(value, factor):
    if isinstance(value, tuple):
        return tuple(v * factor for v in value)
    return value * factor


def _rescale(obj, fields, factor):
    return dataclasses.replace(obj, **{f: _scale(getattr(obj, f), factor) for f in fields})


def _unit_factors(units: Mapping[str, str], base_mva: float | None) -> dict[str, float]:
    power = units.get("power", "pu")
    if power == "pu":
        pf = 1.0
    else:
        if power not in POWER_TO_MW:
            raise ScenarioValidationError(f"unknown power unit {power!r}")
        if base_mva is None or not base_mva > 0:
            raise ScenarioValidationError("missing base declaration: base_mva is required "
                                          f"to convert {power} to per-unit")
        pf = POWER_TO_MW[power] / base_mva
    data = units.get("data", "Mb")
    freq = units.get("frequency", "Hz")
    if data not in DATA_TO_MB:
        raise ScenarioValidationError(f"unknown data unit {data!r}")
    if freq not in FREQ_TO_HZ:
        raise ScenarioValidationError(f"unknown frequency unit {freq!r}")
    return {"power": pf, "data": DATA_TO_MB[data], "frequency": FREQ_TO_HZ[freq]}


def _apply_factors(sc: Scenario, f: Mapping[str, float], units, metadata) -> Scenario:
    pf, df, ff = f["power"], f["data"], f["frequency"]
    buses = tuple(_rescale(b, _POWER_FIELDS[Bus], pf) for b in sc.buses)
    lines = tuple(
        dataclasses.replace(_rescale(ln, _POWER_FIELDS[Line], pf), l_max=ln.l_max * pf * pf)
        for ln in sc.lines
    )
    gens = tuple(_rescale(g, _POWER_FIELDS[Generator], pf) for g in sc.generators)
    ess = tuple(_rescale(e, _POWER_FIELDS[EssUnit], pf) for e in sc.ess)
    iot = tuple(_rescale(_rescale(c, _DATA_FIELDS[IotCenter], df), _FREQ_FIELDS, ff) for c in sc.iot)
    fog = tuple(_rescale(_rescale(c, _DATA_FIELDS[FogCenter], df), _FREQ_FIELDS, ff) for c in sc.fog)
    cloud = tuple(_rescale(c, _DATA_FIELDS[CloudCenter], df) for c in sc.cloud)
    # prices are per unit of power, so they scale inversely
    pi = tuple(p / pf for p in sc.pi)
    kappa = tuple(k / pf for k in sc.kappa)
    gens = tuple(
        dataclasses.replace(g, kappa=tuple(k / pf for k in g.kappa)) if g.kappa is not None else g
        for g in gens
    )
    ren = {b: tuple(v * pf for v in s) for b, s in sc.renewables.items()}
    return dataclasses.replace(
        sc, buses=buses, lines=lines, generators=gens, ess=ess, iot=iot, fog=fog,
        cloud=cloud, pi=pi, kappa=kappa, renewables=ren, units=units, metadata=metadata,
    )


def normalize_units(scenario: Scenario) -> Scenario:
    """Convert network quantities to per-unit, data to Mb and frequency to Hz.

    The original units and the applied factors are stored under
    ``metadata["unit_conversion"]`` so :func:`denormalize_units` can undo it.
    Prices are rescaled so that cost = price * power is unit-invariant.
    """
    factors = _unit_factors(scenario.units, scenario.base_mva)
    if scenario.units == DEFAULT_UNITS or all(v == 1.0 for v in factors.values()):
        meta = dict(scenario.metadata)
        meta.setdefault("unit_conversion", {"from": dict(scenario.units), "factors": factors})
        return dataclasses.replace(scenario, units=dict(DEFAULT_UNITS), metadata=meta)
    meta = dict(scenario.metadata)
    meta["unit_conversion"] = {"from": dict(scenario.units), "factors": factors}
    return _apply_factors(scenario, factors, dict(DEFAULT_UNITS), meta)


def denormalize_units(scenario: Scenario) -> Scenario:
    """Inverse of :func:`normalize_units` using the recorded factors."""
    conv = scenario.metadata.get("unit_conversion")
    if conv is None:
        raise ScenarioValidationError("scenario carries no unit_conversion metadata")
    inv = {k: 1.0 / v for k, v in conv["factors"].items()}
    meta = {k: v for k, v in scenario.metadata.items() if k != "unit_conversion"}
    return _apply_factors(scenario, inv, dict(conv["from"]), meta)


# --------------------------------------------------------------------------
# loading

def _db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


def _dbm_to_watt(x: float) -> float:
    return 10.0 ** (x / 10.0) / 1000.0


class _Reader:
    """Pulls typed fields from a parsed JSON object with located errors."""

    def __init__(self, csv_columns: Mapping[str, list[float]] | None):
        self.csv = csv_columns or {}

    def series(self, raw, where: str) -> tuple[float, ...]:
        if isinstance(raw, str):
            if not raw.startswith("csv:"):
                raise ScenarioParseError(f"{where}: series must be a list or 'csv:<column>'")
            col = raw[4:]
            if col not in self.csv:
                raise ScenarioParseError(f"{where}: CSV column {col!r} not found")
            return tuple(self.csv[col])
        if not isinstance(raw, list):
            raise ScenarioParseError(f"{where}: expected a list of numbers")
        try:
            return tuple(float(v) for v in raw)
        except (TypeError, ValueError) as exc:
            raise ScenarioParseError(f"{where}: non-numeric entry ({exc})") from None

    def take(self, obj: Mapping, key: str, where: str, cast=float, default=...):
        if key not in obj:
            if default is ...:
                raise ScenarioParseError(f"{where}: missing field {key!r}")
            return default
        try:
            return cast(obj[key])
        except (TypeError, ValueError):
            raise ScenarioParseError(f"{where}.{key}: cannot convert {obj[key]!r}") from None


def _read_csv(path: Path) -> dict[str, list[float]]:
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols: dict[str, list[float]] = {}
    for lineno, row in enumerate(rows, start=2):
        for k, v in row.items():
            try:
                cols.setdefault(k.strip(), []).append(float(v))
            except (TypeError, ValueError):
                raise ScenarioParseError(f"{path.name}:{lineno}: column {k!r} is not numeric") from None
    return cols


def _channel(r: _Reader, obj: Mapping, where: str, T: int) -> dict[str, Any]:
    noise = r.take(obj, "noise", where)
    if obj.get("noise_unit", "W") == "dBm":
        noise = _dbm_to_watt(noise)
    gain = r.series(obj.get("gain"), f"{where}.gain")
    if obj.get("gain_unit", "linear") == "dB":
        gain = tuple(_db_to_linear(g) for g in gain)
    tx = r.series(obj.get("tx_power"), f"{where}.tx_power")
    if obj.get("tx_power_unit", "W") == "dBm":
        tx = tuple(_dbm_to_watt(g) for g in tx)
    return {"noise": noise, "gain": gain, "tx_power": tx}


def _edge_kwargs(r: _Reader, obj: Mapping, where: str, T: int) -> dict[str, Any]:
    kw = dict(
        id=r.take(obj, "id", where, str),
        bus=r.take(obj, "bus", where, int),
        k=r.take(obj, "k", where),
        d=r.take(obj, "d", where),
        f_min=r.take(obj, "f_min", where),
        f_max=r.take(obj, "f_max", where),
        slot=r.take(obj, "slot", where),
        h_max=r.take(obj, "h_max", where),
        h_init=r.take(obj, "h_init", where, default=0.0),
        v_weight=r.take(obj, "v_weight", where),
        bandwidth=r.take(obj, "bandwidth", where),
        f_levels=tuple(float(f) for f in obj.get("f_levels", ())),
    )
    kw.update(_channel(r, obj, where, T))
    return kw


def scenario_from_dict(doc: Mapping, csv_columns: Mapping[str, list[float]] | None = None,
                       normalize: bool = True) -> Scenario:
    """Build a scenario from a parsed document (see README for the schema)."""
    r = _Reader(csv_columns)
    T = r.take(doc, "horizon", "scenario", int)
    base = doc.get("base_mva")
    units = dict(DEFAULT_UNITS)
    units.update(doc.get("units", {}))
    buses = tuple(
        Bus(id=r.take(b, "id", f"buses[{i}]", int),
            v_min=r.take(b, "v_min", f"buses[{i}]"), v_max=r.take(b, "v_max", f"buses[{i}]"),
            p_min=r.take(b, "p_min", f"buses[{i}]"), p_max=r.take(b, "p_max", f"buses[{i}]"),
            q_min=r.take(b, "q_min", f"buses[{i}]"), q_max=r.take(b, "q_max", f"buses[{i}]"))
        for i, b in enumerate(doc.get("buses", []))
    )
    lines = tuple(
        Line(from_bus=r.take(ln, "from", f"lines[{i}]", int), to_bus=r.take(ln, "to", f"lines[{i}]", int),
             r=r.take(ln, "r", f"lines[{i}]"), x=r.take(ln, "x", f"lines[{i}]"),
             p_max=r.take(ln, "p_max", f"lines[{i}]"), q_max=r.take(ln, "q_max", f"lines[{i}]"),
             l_max=r.take(ln, "l_max", f"lines[{i}]"),
             z2=r.take(ln, "z2", f"lines[{i}]", default=None))
        for i, ln in enumerate(doc.get("lines", []))
    )
    gens = tuple(
        Generator(id=r.take(g, "id", f"generators[{i}]", str), bus=r.take(g, "bus", f"generators[{i}]", int),
                  p_min=r.take(g, "p_min", f"generators[{i}]"), p_max=r.take(g, "p_max", f"generators[{i}]"),
                  ramp_up=r.take(g, "ramp_up", f"generators[{i}]"),
                  ramp_down=r.take(g, "ramp_down", f"generators[{i}]"),
                  kappa=r.series(g["kappa"], f"generators[{i}].kappa") if "kappa" in g else None)
        for i, g in enumerate(doc.get("generators", []))
    )
    ess = tuple(
        EssUnit(id=r.take(e, "id", f"ess[{i}]", str), bus=r.take(e, "bus", f"ess[{i}]", int),
                p_cha_max=r.take(e, "p_cha_max", f"ess[{i}]"), p_dis_max=r.take(e, "p_dis_max", f"ess[{i}]"),
                eta_cha=r.take(e, "eta_cha", f"ess[{i}]", default=0.95),
                eta_dis=r.take(e, "eta_dis", f"ess[{i}]", default=0.95),
                s_min=r.take(e, "s_min", f"ess[{i}]"), s_max=r.take(e, "s_max", f"ess[{i}]"),
                s_init=r.take(e, "s_init", f"ess[{i}]"))
        for i, e in enumerate(doc.get("ess", []))
    )
    iot = tuple(
        IotCenter(**_edge_kwargs(r, c, f"iot[{i}]", T),
                  arrivals=r.series(c.get("arrivals"), f"iot[{i}].arrivals"),
                  fog=c.get("fog"))
        for i, c in enumerate(doc.get("iot", []))
    )
    fog = tuple(
        FogCenter(**_edge_kwargs(r, c, f"fog[{i}]", T), cloud=c.get("cloud"))
        for i, c in enumerate(doc.get("fog", []))
    )
    cloud = tuple(
        CloudCenter(id=r.take(c, "id", f"cloud[{i}]", str), bus=r.take(c, "bus", f"cloud[{i}]", int),
                    bits_per_request=r.take(c, "bits_per_request", f"cloud[{i}]"),
                    servers=r.take(c, "servers", f"cloud[{i}]", int),
                    max_latency=r.take(c, "max_latency", f"cloud[{i}]"),
                    p_peak=r.take(c, "p_peak", f"cloud[{i}]"), p_idle=r.take(c, "p_idle", f"cloud[{i}]"),
                    pue=r.take(c, "pue", f"cloud[{i}]", default=1.4))
        for i, c in enumerate(doc.get("cloud", []))
    )
    prices = doc.get("prices", {})
    pi = r.series(prices.get("pi"), "prices.pi")
    kappa = r.series(prices["kappa"], "prices.kappa") if "kappa" in prices else ()
    ren = {int(b): r.series(s, f"renewables.{b}") for b, s in doc.get("renewables", {}).items()}
    cfg_doc = dict(doc.get("config", {}))
    known = {f.name for f in dataclasses.fields(AlgorithmConfig)}
    unknown = set(cfg_doc) - known
    if unknown:
        raise ScenarioParseError(f"config: unknown keys {sorted(unknown)}")
    config = AlgorithmConfig(**cfg_doc)

    # attach device ids to buses
    attached: dict[int, list[str]] = {}
    for dev in (*gens, *ess, *iot, *fog, *cloud):
        attached.setdefault(dev.bus, []).append(dev.id)
    buses = tuple(dataclasses.replace(b, devices=tuple(attached.get(b.id, ()))) for b in buses)

    sc = Scenario(
        name=str(doc.get("name", "scenario")), horizon=T, base_mva=base, buses=buses,
        lines=lines, generators=gens, ess=ess, iot=iot, fog=fog, cloud=cloud, pi=pi,
        kappa=kappa, renewables=ren, config=config, units=units,
    )
    validate_radial(sc)
    return normalize_units(sc) if normalize else sc


def load_scenario(path: str | Path, normalize: bool = True) -> Scenario:
    """Load, validate and (by default) unit-normalize a scenario JSON file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioParseError(f"{path}: file not found")
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path.name}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioParseError(f"{path.name}: top level must be an object")
    columns = None
    if "timeseries" in doc:
        columns = _read_csv(path.parent / doc["timeseries"])
    return scenario_from_dict(doc, columns, normalize=normalize)


def bundled_scenario_path(name: str = "fixture_6bus") -> Path:
    return Path(__file__).parent / "data" / f"{name}.json"


def is_finite(x: float) -> bool:
    return not (math.isinf(x) or math.isnan(x))
