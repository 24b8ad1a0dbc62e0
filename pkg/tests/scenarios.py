"""Small hand-written scenario documents for unit tests."""
from __future__ import annotations

import copy

BUS = {"v_min": 0.81, "v_max": 1.21, "p_min": -5, "p_max": 5, "q_min": -5, "q_max": 5}
LINE = {"r": 0.01, "x": 0.008, "p_max": 5, "q_max": 5, "l_max": 50}


def bus(i: int, **kw) -> dict:
    return {"id": i, **BUS, **kw}


def line(i: int, j: int, **kw) -> dict:
    return {"from": i, "to": j, **LINE, **kw}


def two_bus(T: int = 1, **extra) -> dict:
    doc = {
        "name": "two_bus",
        "horizon": T,
        "buses": [bus(0, v_min=1.0, v_max=1.0), bus(1)],
        "lines": [line(0, 1)],
        "generators": [{"id": "G1", "bus": 1, "p_min": 0, "p_max": 2, "ramp_up": 1, "ramp_down": 1,
                        "kappa": [5.0] * T}],
        "prices": {"pi": [10.0] * T},
        "renewables": {"1": [-1.0] * T},
    }
    doc.update(extra)
    return doc


def chain(n: int, T: int = 1) -> dict:
    return {
        "name": f"chain{n}",
        "horizon": T,
        "buses": [bus(0, v_min=1.0, v_max=1.0)] + [bus(i) for i in range(1, n)],
        "lines": [line(i, i + 1) for i in range(n - 1)],
        "prices": {"pi": [10.0] * T},
    }


def ess(**kw) -> dict:
    base = {"id": "E1", "bus": 1, "p_cha_max": 1, "p_dis_max": 1, "eta_cha": 0.95, "eta_dis": 0.95,
            "s_min": 0, "s_max": 10, "s_init": 5}
    base.update(kw)
    return base


def with_devices(doc: dict, **devices) -> dict:
    out = copy.deepcopy(doc)
    for kind, items in devices.items():
        out[kind] = items
    return out
