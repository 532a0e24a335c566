"""Deterministic discrete-event core: integer-microsecond clock, event heap, seeded streams."""

from __future__ import annotations

import heapq
import itertools
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Optional, TextIO

import numpy as np

US_PER_S = 1_000_000


def to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


def to_s(us: int) -> float:
    return us / US_PER_S


class SimulationError(RuntimeError):
    """Fatal contract violation inside a simulation (e.g. scheduling in the past)."""


class EventKind(str, Enum):
    FRAME_START = "frame-start"
    FRAME_END = "frame-end"
    WAKEUP = "wakeup"
    TIMER_FIRE = "timer-fire"
    SLOT_BOUNDARY = "slot-boundary"
    PROCESS = "process"


@dataclass(eq=False)
class Event:
    time: int
    seq: int
    node: int
    kind: EventKind
    payload: Any = None
    callback: Optional[Callable[..., None]] = None
    args: tuple = ()
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "Event") -> bool:
        return (self.time, self.seq) < (other.time, other.seq)


@dataclass
class EventTrace:
    records: list = field(default_factory=list)
    starved: bool = False
    stopped: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def lines(self) -> Iterable[str]:
        for t, node, kind, detail in self.records:
            yield f"{t}\t{node}\t{kind}\t{detail}"

    def dump(self, fh: TextIO) -> None:
        fh.write("time_us\tnode\tkind\tdetail\n")
        for line in self.lines():
            fh.write(line + "\n")


class Simulator:
    """Single-threaded event loop.

    Events at equal times fire in insertion order. Cancelled events stay in
    the heap and are skipped when popped.
    """

    def __init__(self, record_trace: bool = False):
        self.now = 0
        self._queue: list[Event] = []
        self._seq = itertools.count()
        self.record_trace = record_trace
        self.trace = EventTrace()
        self.delivered = 0

    def schedule(self, time: int, node: int, kind: EventKind, payload: Any = None,
                 callback: Optional[Callable[..., None]] = None, args: tuple = ()) -> Event:
        time = int(time)
        if time < self.now:
            raise SimulationError(
                f"event {kind.value} for node {node} scheduled at {time} us, clock is {self.now} us")
        ev = Event(time, next(self._seq), node, kind, payload, callback, args)
        heapq.heappush(self._queue, ev)
        return ev

    def schedule_in(self, delay: int, node: int, kind: EventKind, payload: Any = None,
                    callback: Optional[Callable[..., None]] = None, args: tuple = ()) -> Event:
        return self.schedule(self.now + int(delay), node, kind, payload, callback, args)

    @staticmethod
    def cancel(handle: Optional[Event]) -> None:
        if handle is not None:
            handle.cancel()

    def pending(self) -> int:
        return sum(1 for ev in self._queue if not ev.cancelled)

    def run_until(self, horizon: Optional[int] = None,
                  stop: Optional[Callable[[], bool]] = None) -> EventTrace:
        q = self._queue
        while True:
            if stop is not None and stop():
                self.trace.stopped = True
                break
            while q and q[0].cancelled:
                heapq.heappop(q)
            if not q:
                self.trace.starved = True
                break
            if horizon is not None and q[0].time > horizon:
                break
            ev = heapq.heappop(q)
            self.now = ev.time
            self.delivered += 1
            if self.record_trace:
                detail = "" if ev.payload is None else str(ev.payload)
                self.trace.records.append((ev.time, ev.node, ev.kind.value, detail))
            if ev.callback is not None:
                ev.callback(*ev.args)
        return self.trace


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


class RngStreams:
    """One independent generator per (node, purpose) pair, derived from a master seed.

    Streams are created lazily; creating or drawing from one stream never shifts
    the sequence of another.
    """

    def __init__(self, master_seed: int | tuple[int, ...]):
        if isinstance(master_seed, tuple):
            self._entropy = [int(x) for x in master_seed]
        else:
            self._entropy = [int(master_seed)]
        self._streams: dict[tuple[int, str], np.random.Generator] = {}

    def stream(self, node: int, purpose: str) -> np.random.Generator:
        key = (node, purpose)
        gen = self._streams.get(key)
        if gen is None:
            ss = np.random.SeedSequence(self._entropy + [_purpose_code(purpose), int(node)])
            gen = np.random.Generator(np.random.PCG64(ss))
            self._streams[key] = gen
        return gen


def draw_uniform(stream: np.random.Generator) -> float:
    return float(stream.random())


def replication_seed(master_seed: int, index: int) -> tuple[int, int]:
    """Seed entropy for replication ``index``; independent of the replication count."""
    return (int(master_seed), int(index))
