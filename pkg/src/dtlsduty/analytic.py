"""Closed-form models: TSCH per-hop latency and handshake duration, Engset blocking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

DEFAULT_FRAMES = 10
DEFAULT_SLOT_S = 0.010


@dataclass(frozen=True)
class TschLatencyQuery:
    l: int
    hops: tuple[tuple[int, float], ...]
    frames: int = DEFAULT_FRAMES
    slot: float = DEFAULT_SLOT_S

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("slotframe length must be >= 1")
        if not self.hops:
            raise ValueError("at least one hop is required")
        for c, p in self.hops:
            _check_hop(c, p)
        if self.frames < 1:
            raise ValueError("frames must be >= 1")

    @property
    def valid(self) -> bool:
        """The uniform-placement approximation assumes L >> C on every hop."""
        return all(self.l >= 10 * c for c, _ in self.hops)


def _check_hop(c: int, p: float) -> None:
    if c < 1:
        raise ValueError("cells per link must be >= 1")
    if not (0.0 < p <= 1.0):
        raise ValueError("PDR must be in (0, 1]")


def tsch_single_hop_slots(l: int, c: int, p: float) -> float:
    """Mean queue-to-delivery latency of one frame over one hop, in timeslots."""
    _check_hop(c, p)
    return (1.0 + l / (c + 1.0)) / p


def tsch_multi_hop_slots(l: int, hops: Sequence[tuple[int, float]]) -> float:
    if not hops:
        raise ValueError("empty hop list")
    return sum(tsch_single_hop_slots(l, c, p) for c, p in hops)


def tsch_handshake_duration(query: TschLatencyQuery) -> float:
    """Seconds for ``query.frames`` frames relayed end to end, one after another."""
    return query.frames * tsch_multi_hop_slots(query.l, query.hops) * query.slot


def table1(ls: Sequence[int] = (101, 1001), cs: Sequence[int] = (1, 2, 3)) -> list[list[float]]:
    """Single-hop handshake duration grid (rows L, columns C), PDR 1."""
    return [[tsch_handshake_duration(TschLatencyQuery(l, ((c, 1.0),))) for c in cs] for l in ls]


def table2(ls: Sequence[int] = (101, 1001), hs: Sequence[int] = (2, 3, 4)) -> list[list[float]]:
    """Multi-hop handshake duration grid (rows L, columns H), C=1, PDR 1."""
    return [[tsch_handshake_duration(TschLatencyQuery(l, ((1, 1.0),) * h)) for h in hs] for l in ls]


@dataclass(frozen=True)
class EngsetQuery:
    n: int
    r: int
    rho: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.r < 0:
            raise ValueError("r must be >= 0")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")


def _engset(n: int, r: int, rho: float) -> float:
    if r > n:
        return 0.0
    # log-space terms keep large n and large rho finite
    logs = [math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) + k * math.log(rho)
            for k in range(r + 1)]
    m = max(logs)
    denom = sum(math.exp(x - m) for x in logs)
    return math.exp(logs[r] - m) / denom


def engset_time_congestion(q: EngsetQuery) -> float:
    """Fraction of time all r slots are busy with n finite sources."""
    return _engset(q.n, q.r, q.rho)


def engset_call_congestion(q: EngsetQuery) -> float:
    """Fraction of session attempts that find all r slots busy."""
    if q.r >= q.n:
        return 0.0
    return _engset(q.n - 1, q.r, q.rho)
