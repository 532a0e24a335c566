"""TSCH link layer: a static slotframe with dedicated cells per directed link.

A frame that becomes ready at instant T waits for the next cell of its link
whose timeslot starts at or after T. Each attempt succeeds with the link PDR
(link-layer ACK inside the slot); a failed attempt retries at the link's next
cell, without limit. Frames queue FIFO per directed link.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .. import kernels
from ..simcore import EventKind, to_us
from .base import EngineParams, Frame, HandshakeEngine

Link = tuple[int, int]


@dataclass(frozen=True)
class TschSchedule:
    slotframe_length_l: int
    cells: Mapping[Link, tuple[int, ...]]
    timeslot_duration: float = 0.010

    def __post_init__(self):
        if self.slotframe_length_l < 1:
            raise ValueError("slotframe length must be >= 1")
        if self.timeslot_duration <= 0:
            raise ValueError("timeslot duration must be positive")
        seen: set[int] = set()
        for link, offs in self.cells.items():
            if not offs:
                raise ValueError(f"link {link} has no cells")
            for o in offs:
                if not (0 <= o < self.slotframe_length_l):
                    raise ValueError(f"cell offset {o} outside the slotframe")
                if o in seen:
                    raise ValueError(f"cell offset {o} assigned to more than one link")
                seen.add(o)

    def offsets(self, link: Link) -> np.ndarray:
        return np.asarray(self.cells[link], dtype=np.int64)


def chain_links(hops: int) -> list[Link]:
    """Directed links of a chain 0-1-...-hops: uplinks first, then downlinks."""
    return [(i, i + 1) for i in range(hops)] + [(i + 1, i) for i in range(hops)]


def build_uniform_schedule(l: int, cells_per_link: Sequence[int], seed=0,
                           links: Sequence[Link] | None = None,
                           slot: float = 0.010) -> TschSchedule:
    """Place cells uniformly at random, without replacement, over the slotframe.

    ``links`` defaults to ``0..len(cells_per_link)-1`` as (i, i+1) pairs.
    """
    cells_per_link = [int(c) for c in cells_per_link]
    if any(c < 1 for c in cells_per_link):
        raise ValueError("each link needs at least one cell")
    total = sum(cells_per_link)
    if total > l:
        raise ValueError(f"infeasible schedule: {total} cells requested in a slotframe of {l}")
    if links is None:
        links = [(i, i + 1) for i in range(len(cells_per_link))]
    if len(links) != len(cells_per_link):
        raise ValueError("links and cells_per_link differ in length")
    rng = np.random.default_rng(seed)
    picks = rng.choice(l, size=total, replace=False)
    cells, pos = {}, 0
    for link, c in zip(links, cells_per_link):
        cells[tuple(link)] = tuple(sorted(int(x) for x in picks[pos:pos + c]))
        pos += c
    return TschSchedule(l, cells, slot)


@dataclass(frozen=True)
class TschConfig:
    slotframe_length_l: int = 101
    cells: tuple[int, ...] = (1,)          # per hop, both directions
    timeslot_duration: float = 0.010
    data_frame_airtime: float = 0.0043
    ack_airtime: float = 0.0010
    rx_guard: float = 0.0022

    def __post_init__(self):
        if self.slotframe_length_l < 1:
            raise ValueError("slotframe length must be >= 1")
        if any(c < 1 for c in self.cells):
            raise ValueError("cells per link must be >= 1")
        if self.timeslot_duration <= 0:
            raise ValueError("timeslot duration must be positive")

    def cells_for(self, hops: int) -> list[int]:
        c = list(self.cells)
        if len(c) == 1:
            c = c * hops
        if len(c) != hops:
            raise ValueError(f"{len(c)} cell counts given for {hops} hops")
        return c


class TschEngine(HandshakeEngine):
    mode = "tsch"

    def __init__(self, params: EngineParams, mac: TschConfig, seed, record_trace=False):
        super().__init__(params, seed, record_trace)
        self.cfg = mac
        self.slot = to_us(mac.timeslot_duration)
        self.L = mac.slotframe_length_l
        c = mac.cells_for(self.hops)
        sched_seed = self.rng.stream(0, "schedule").integers(2**63)
        self.schedule = build_uniform_schedule(self.L, c + c, sched_seed, chain_links(self.hops),
                                               mac.timeslot_duration)
        self.link_q: dict[Link, deque] = {}
        self.busy: set[Link] = set()
        self.phase = 0

    def mac_setup(self) -> None:
        # ASN 0 starts at -phase, so the first frame is ready uniformly over a slotframe
        self.phase = int(self.rng.stream(0, "phase").random() * self.L * self.slot)
        for link in self.schedule.cells:
            self.link_q[link] = deque()

    def _next_cell(self, link: Link, t: int) -> int:
        """ASN of the first cell of ``link`` starting at or after time ``t``."""
        asn0 = -(-(t + self.phase) // self.slot)
        base, pos = divmod(asn0, self.L)
        for o in self.schedule.cells[link]:
            if o >= pos:
                return base * self.L + o
        return (base + 1) * self.L + self.schedule.cells[link][0]

    def _slot_start(self, asn: int) -> int:
        return asn * self.slot - self.phase

    def enqueue(self, node: int, frame: Frame) -> None:
        link = (node, self.next_hop(node, frame))
        self.link_q[link].append(frame)
        if link not in self.busy:
            self.busy.add(link)
            self._arm(link, self.sim.now)

    def _arm(self, link: Link, t: int) -> None:
        asn = self._next_cell(link, t)
        start = self._slot_start(asn)
        frame = self.link_q[link][0]
        self.sim.schedule(start, link[0], EventKind.FRAME_START, frame, None)
        self.sim.schedule(start + self.slot, link[1], EventKind.SLOT_BOUNDARY, frame,
                          self._on_cell_end, (link, start))

    def _on_cell_end(self, link: Link, start: int) -> None:
        s, r = link
        frame = self.link_q[link][0]
        self.hop_transmissions += 1
        air = to_us(self.cfg.data_frame_airtime)
        ack = to_us(self.cfg.ack_airtime)
        self.logs[s].add("transmit", start, start + air)
        self.logs[r].add("receive", start, start + air)
        ok = self.rng.stream(r, "loss").random() < self.p.link_pdr(s, r)
        if ok:
            self.logs[r].add("transmit", start + air, start + air + ack)
            self.logs[s].add("receive", start + air, start + air + ack)
            self.link_q[link].popleft()
            self.deliver(r, frame)
        else:
            self.logs[s].add("listen", start + air, start + air + ack)
        if self.link_q[link]:
            self._arm(link, self.sim.now)
        else:
            self.busy.discard(link)

    def mac_finalize(self, t_end: int) -> None:
        guard = to_us(self.cfg.rx_guard)
        n_frames = t_end // (self.L * self.slot) + 2
        for (s, r), offs in self.schedule.cells.items():
            for o in offs:
                starts = (np.arange(n_frames, dtype=np.int64) * self.L + o) * self.slot - self.phase
                self.logs[r].add_many("listen", starts, guard)


def frame_latency_mc(l: int, c: int, p: float, n: int, seed=0) -> np.ndarray:
    """Single-hop queue-to-delivery latency samples (slots) with a uniform ready phase."""
    if not (0.0 < p <= 1.0):
        raise ValueError("PDR must be in (0, 1]")
    if not (1 <= c <= l):
        raise ValueError("need 1 <= c <= l")
    rng = np.random.default_rng(seed)
    ready = rng.random(n) * l
    offsets = np.sort(np.argsort(rng.random((n, l)), axis=1)[:, :c], axis=1).astype(np.float64) \
        if c > 1 else rng.integers(0, l, size=(n, 1)).astype(np.float64)
    fails = rng.geometric(p, size=n).astype(np.int64) - 1
    return kernels.tsch_latency(ready, offsets, fails, l)


class _FrameProbe(TschEngine):
    """Frames from node 0 to node ``hops`` without DTLS; records delivery times."""

    def run_probe(self, n_frames: int = 1) -> list[int]:
        self.mac_setup()
        self.got: list[int] = []
        for i in range(n_frames):
            frame = Frame(i + 1, 0, i, 0, self.hops, 0)
            self.sim.schedule(0, 0, EventKind.PROCESS, "probe", self.enqueue, (0, frame))
        self.sim.run_until()
        return self.got

    def deliver(self, node: int, frame: Frame) -> None:
        if node == frame.dst:
            self.got.append(self.sim.now)
        else:
            self.enqueue(node, frame)


def simulate_frames(mac: TschConfig, hops: int, pdr: float, n: int, seed=0,
                    burst: int = 1) -> np.ndarray:
    """Event-driven end-to-end latency (slots) of ``burst`` frames queued at once.

    Returns an (n, burst) array of delivery times measured from the instant
    the frames became ready, which is uniform over the slotframe.
    """
    params = EngineParams(hops=hops, pdr=(pdr,) * hops)
    out = np.empty((n, burst))
    for i in range(n):
        eng = _FrameProbe(params, mac, (seed, i))
        out[i] = np.asarray(eng.run_probe(burst)) / eng.slot
    return out
