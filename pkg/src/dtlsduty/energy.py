"""Energest-style accounting: time in radio/CPU states times current times voltage."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

RADIO_STATES = ("transmit", "receive", "listen", "sleep")
CPU_STATES = ("cpu_active", "cpu_lpm")
STATES = RADIO_STATES + CPU_STATES

# radio activity labels recorded by the MACs, highest priority first; a
# "strobe" interval alternates transmit and listen (strobe + ack gap)
_RADIO_PRIORITY = ("transmit", "strobe", "receive", "listen")


@dataclass(frozen=True)
class RadioPowerProfile:
    """Supply voltage and per-state current draw (amperes)."""

    voltage: float = 2.8
    currents: Mapping[str, float] = field(default_factory=lambda: {
        "transmit": 25.8e-3,
        "receive": 18.5e-3,
        "listen": 18.5e-3,
        "sleep": 1e-6,
        "cpu_active": 2e-3,
        "cpu_lpm": 2e-6,
    })

    def __post_init__(self):
        if self.voltage <= 0:
            raise ValueError("voltage must be positive")
        for k, v in self.currents.items():
            if v < 0:
                raise ValueError(f"negative current for {k}")
        c = self.currents
        if all(k in c for k in ("transmit", "receive", "sleep")):
            if not (c["transmit"] > c["sleep"] and c["receive"] > c["sleep"]):
                raise ValueError("transmit/receive current must exceed sleep current")

    @classmethod
    def from_dict(cls, d: Mapping) -> "RadioPowerProfile":
        d = dict(d)
        voltage = float(d.pop("voltage", 2.8))
        base = dict(cls().currents)
        for k, v in d.items():
            if k not in STATES:
                raise ValueError(f"unknown power state {k!r}")
            base[k] = float(v)
        return cls(voltage, base)


class EnergyLedger:
    """Per-node accumulated seconds in each state."""

    def __init__(self):
        self._t: dict[int, dict[str, float]] = defaultdict(lambda: {s: 0.0 for s in STATES})

    def accumulate(self, node: int, state: str, dt: float) -> "EnergyLedger":
        if state not in STATES:
            raise ValueError(f"unknown state {state!r}")
        if dt < 0:
            raise ValueError("dt must be >= 0")
        self._t[node][state] += dt
        return self

    def time(self, node: int, state: str) -> float:
        return self._t[node][state] if node in self._t else 0.0

    def node_times(self, node: int) -> dict[str, float]:
        return dict(self._t[node]) if node in self._t else {s: 0.0 for s in STATES}

    def radio_total(self, node: int) -> float:
        return sum(self.time(node, s) for s in RADIO_STATES)

    def cpu_total(self, node: int) -> float:
        return sum(self.time(node, s) for s in CPU_STATES)

    @property
    def nodes(self) -> list[int]:
        return sorted(self._t)


def energy_mj(ledger: EnergyLedger, profile: RadioPowerProfile, node: int) -> float:
    total = 0.0
    for state, secs in ledger.node_times(node).items():
        if secs == 0.0:
            continue
        if state not in profile.currents:
            raise KeyError(f"power profile has no current for {state!r}")
        total += secs * profile.currents[state] * profile.voltage
    return total * 1e3


def battery_fraction(energy_mj: float, battery_j: float) -> float:
    if battery_j <= 0:
        raise ValueError("battery_j must be positive")
    return energy_mj / (1000.0 * battery_j)


def _union_length(starts: np.ndarray, ends: np.ndarray) -> int:
    if len(starts) == 0:
        return 0
    order = np.argsort(starts, kind="stable")
    s = starts[order]
    e = np.maximum.accumulate(ends[order])
    # a new block starts wherever an interval begins after everything before it ended
    new_block = np.empty(len(s), dtype=bool)
    new_block[0] = True
    new_block[1:] = s[1:] > e[:-1]
    idx = np.flatnonzero(new_block)
    block_end = np.append(idx[1:] - 1, len(s) - 1)
    return int(np.sum(e[block_end] - s[idx]))


class ActivityLog:
    """Radio and CPU activity intervals of one node, in integer microseconds.

    Overlapping labels resolve by priority (transmit > strobe > receive >
    listen); whatever is not covered is sleep. CPU time not marked active is LPM.
    """

    def __init__(self, strobe_tx_fraction: float = 0.5):
        self.radio: dict[str, list[tuple[int, int]]] = {k: [] for k in _RADIO_PRIORITY}
        self.cpu: list[tuple[int, int]] = []
        self.strobe_tx_fraction = strobe_tx_fraction

    def add(self, label: str, start: int, end: int) -> None:
        if end > start:
            self.radio[label].append((int(start), int(end)))

    def add_many(self, label: str, starts: np.ndarray, length: int) -> None:
        self.radio[label].extend(zip(starts.tolist(), (starts + length).tolist()))

    def add_cpu(self, start: int, end: int) -> None:
        if end > start:
            self.cpu.append((int(start), int(end)))

    @staticmethod
    def _clip(iv: list[tuple[int, int]], t_end: int) -> tuple[np.ndarray, np.ndarray]:
        if not iv:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        a = np.asarray(iv, dtype=np.int64)
        s = np.clip(a[:, 0], 0, t_end)
        e = np.clip(a[:, 1], 0, t_end)
        keep = e > s
        return s[keep], e[keep]

    def partition(self, t_end: int) -> dict[str, int]:
        """Microseconds per ledger state over ``[0, t_end]``; radio and CPU each sum to t_end."""
        cum_s = np.empty(0, np.int64)
        cum_e = np.empty(0, np.int64)
        covered_before = 0
        exclusive = {}
        for label in _RADIO_PRIORITY:
            s, e = self._clip(self.radio[label], t_end)
            cum_s = np.concatenate([cum_s, s])
            cum_e = np.concatenate([cum_e, e])
            covered = _union_length(cum_s, cum_e)
            exclusive[label] = covered - covered_before
            covered_before = covered
        strobe_tx = int(round(exclusive["strobe"] * self.strobe_tx_fraction))
        out = {
            "transmit": exclusive["transmit"] + strobe_tx,
            "receive": exclusive["receive"],
            "listen": exclusive["listen"] + exclusive["strobe"] - strobe_tx,
            "sleep": t_end - covered_before,
        }
        cs, ce = self._clip(self.cpu, t_end)
        active = _union_length(cs, ce)
        out["cpu_active"] = active
        out["cpu_lpm"] = t_end - active
        return out

    def segments(self, t_end: int) -> list[tuple[int, int, str]]:
        """Contiguous, non-overlapping (start, end, state) radio timeline over ``[0, t_end]``."""
        bounds = {0, t_end}
        spans = []
        for rank, label in enumerate(_RADIO_PRIORITY):
            s, e = self._clip(self.radio[label], t_end)
            for a, b in zip(s.tolist(), e.tolist()):
                bounds.update((a, b))
                spans.append((a, b, rank))
        cuts = sorted(bounds)
        out: list[tuple[int, int, str]] = []
        for a, b in zip(cuts[:-1], cuts[1:]):
            best = len(_RADIO_PRIORITY)
            for s, e, rank in spans:
                if s <= a and b <= e and rank < best:
                    best = rank
            state = _RADIO_PRIORITY[best] if best < len(_RADIO_PRIORITY) else "sleep"
            if out and out[-1][2] == state and out[-1][1] == a:
                out[-1] = (out[-1][0], b, state)
            else:
                out.append((a, b, state))
        return out


def ledger_from_logs(logs: Mapping[int, ActivityLog], t_end: int) -> EnergyLedger:
    ledger = EnergyLedger()
    for node, log in logs.items():
        for state, us in log.partition(t_end).items():
            ledger.accumulate(node, state, us / 1e6)
    return ledger
