"""Beacon-enabled IEEE 802.15.4 link layer on a chain-shaped cluster tree.

Each cluster head sends a beacon every BI; its children may talk to it only
during the CAP that follows, using slotted CSMA/CA and acknowledged frames.
Uplink frames (child to coordinator) are sent directly. Downlink frames are
held by the coordinator and announced in its beacon; the child polls with a
data request and the coordinator then sends the frame (indirect transmission).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..simcore import EventKind, to_us
from .base import EngineParams, Frame, HandshakeEngine

BASE_SUPERFRAME_S = 0.01536


def superframe_params(bo: int, so: int) -> tuple[float, float]:
    """(beacon interval, CAP duration) in seconds for beacon order ``bo``, superframe order ``so``."""
    if not (0 <= bo <= 14):
        raise ValueError("beacon order must be in 0..14")
    if not (0 <= so <= bo):
        raise ValueError("superframe order must be in 0..bo")
    return BASE_SUPERFRAME_S * 2 ** bo, BASE_SUPERFRAME_S * 2 ** so


@dataclass(frozen=True)
class BeaconConfig:
    bi: float = 0.98304
    cap: float = 0.06144
    data_frame_airtime: float = 0.0043
    ack_airtime: float = 0.000352
    data_request_airtime: float = 0.00064
    beacon_airtime: float = 0.00096
    turnaround: float = 0.000192
    ifs: float = 0.00064
    backoff_unit: float = 0.00032
    min_be: int = 3
    max_be: int = 5
    max_csma_backoffs: int = 4
    max_frame_retries: int = 3

    def __post_init__(self):
        if self.bi <= 0 or self.cap <= 0:
            raise ValueError("BI and CAP must be positive")
        if self.cap > self.bi:
            raise ValueError("CAP cannot exceed BI")
        if not (0 <= self.min_be <= self.max_be):
            raise ValueError("need 0 <= min_be <= max_be")
        longest = (self.beacon_airtime + 2 * self.backoff_unit + self.data_frame_airtime
                   + self.turnaround + self.ack_airtime + self.ifs)
        if longest > self.cap:
            raise ValueError("CAP too short for a single data frame exchange")

    @classmethod
    def from_orders(cls, bo: int, so: int, **kw) -> "BeaconConfig":
        bi, cap = superframe_params(bo, so)
        return cls(bi=bi, cap=cap, **kw)


@dataclass(frozen=True)
class ClusterTree:
    """Chain 0..hops: client leaf at 0, cluster heads in between.

    ``parent[i]`` is the coordinator of node i (None for the root). With one
    hop the server (node 1) is the root; otherwise the root is node ``hops-1``
    and the server is a leaf associated with it.
    """

    hops: int

    def __post_init__(self):
        if self.hops < 1:
            raise ValueError("hops must be >= 1")

    @property
    def root(self) -> int:
        return 1 if self.hops == 1 else self.hops - 1

    @property
    def parent(self) -> dict[int, Optional[int]]:
        par: dict[int, Optional[int]] = {i: i + 1 for i in range(self.root)}
        par[self.root] = None
        if self.hops >= 2:
            par[self.hops] = self.root
        return par

    @property
    def coordinators(self) -> list[int]:
        """Cluster heads ordered from the root outwards."""
        return sorted({p for p in self.parent.values() if p is not None}, reverse=True)

    def role(self, node: int) -> str:
        return "cluster-head" if node in self.coordinators else "leaf"

    def depth(self, coord: int) -> int:
        return self.coordinators.index(coord)


class BeaconEngine(HandshakeEngine):
    mode = "beacon"

    def __init__(self, params: EngineParams, mac: BeaconConfig, seed, record_trace=False):
        super().__init__(params, seed, record_trace)
        self.cfg = mac
        self.tree = ClusterTree(self.hops)
        self.parent = self.tree.parent
        us = to_us
        self.bi, self.cap = us(mac.bi), us(mac.cap)
        self.bair = us(mac.beacon_airtime)
        self.unit = us(mac.backoff_unit)
        self.ack = us(mac.ack_airtime)
        self.tat = us(mac.turnaround)
        self.ifs = us(mac.ifs)
        self.data = us(mac.data_frame_airtime)
        self.req = us(mac.data_request_airtime)
        self.offset: dict[int, int] = {}
        self.res: list[tuple[int, int, int, int]] = []   # (start, end, a, b) channel reservations
        self.up_q: dict[int, deque] = {}
        self.up_busy: set[int] = set()
        self.pending: dict[tuple[int, int], deque] = {}
        self.polling: set[tuple[int, int]] = set()
        self.seen: dict[int, set] = {}

    def mac_setup(self) -> None:
        coords = self.tree.coordinators
        g = int(self.rng.stream(0, "phase").random() * self.bi)
        for c in coords:
            self.offset[c] = (g + self.tree.depth(c) * self.bi // len(coords)) % self.bi
        for n in self.nodes:
            self.up_q[n] = deque()
            self.seen[n] = set()

    # -- superframe geometry ----------------------------------------------
    def _beacon_at_or_before(self, c: int, t: int) -> int:
        return self.offset[c] + ((t - self.offset[c]) // self.bi) * self.bi

    def _cap_window(self, c: int, t: int) -> tuple[int, int, int]:
        """(earliest usable time, CAP end, beacon time) for the CAP at or after ``t``."""
        b = self._beacon_at_or_before(c, t)
        if t < b + self.cap:
            return max(t, b + self.bair), b + self.cap, b
        b += self.bi
        return b + self.bair, b + self.cap, b

    def _next_beacon(self, c: int, t: int) -> int:
        return self._beacon_at_or_before(c, t) + self.bi

    # -- slotted CSMA/CA ----------------------------------------------------
    def _busy(self, a: int, b: int, nodes: set) -> bool:
        for s, e, x, y in self.res:
            if s < b and e > a and (x in nodes or y in nodes):
                return True
        return False

    def _csma(self, s: int, r: int, c: int, t: int, need: int):
        """Returns ("tx", start), ("defer", next_cap_time) or ("fail", time)."""
        lo, end, b = self._cap_window(c, t)
        rng = self.rng.stream(s, "backoff")
        nodes = {s, r, *self.neighbors(s)}
        nb, be = 0, self.cfg.min_be
        x = b + -(-(lo - b) // self.unit) * self.unit
        while True:
            x += int(rng.integers(0, 2 ** be)) * self.unit
            tx = x + 2 * self.unit
            if tx + need > end:
                nxt, _, _ = self._cap_window(c, end)
                return "defer", nxt
            self.logs[s].add("receive", x, x + 2 * self.unit)
            if self._busy(x, tx + need, nodes):
                nb += 1
                be = min(be + 1, self.cfg.max_be)
                if nb > self.cfg.max_csma_backoffs:
                    return "fail", tx
                x = tx
                continue
            return "tx", tx

    def _transact(self, s: int, r: int, c: int, air: int, label, done: Callable) -> None:
        """One acknowledged frame exchange s -> r inside the CAP of coordinator ``c``.

        Calls ``done(outcome)`` with outcome "ok", "nack" (frame or ack lost; the
        frame may or may not have arrived), "fail" (channel access failure) or
        "defer" (did not fit; retried by the caller) at the time it resolves.
        """
        kind, t = self._csma(s, r, c, self.sim.now, air + self.tat + self.ack)
        if kind != "tx":
            self.sim.schedule(max(t, self.sim.now), s, EventKind.WAKEUP, f"{kind} {label}", done,
                              (kind, False))
            return
        end = t + air + self.tat + self.ack
        self.res.append((t, end + self.ifs, s, r))
        self.logs[s].add("transmit", t, t + air)
        self.logs[r].add("receive", t, t + air)
        pdr = self.p.link_pdr(s, r)
        got = self.rng.stream(r, "loss").random() < pdr
        acked = got and self.rng.stream(s, "loss").random() < pdr
        if got:
            self.logs[r].add("transmit", t + air + self.tat, end)
            self.logs[s].add("receive", t + air + self.tat, end)
        self.hop_transmissions += air == self.data
        self.sim.schedule(t, s, EventKind.FRAME_START, label, None)
        self.sim.schedule(end + self.ifs, r, EventKind.FRAME_END, label, done,
                          ("ok" if acked else "nack", got))
        self._prune()

    def _prune(self) -> None:
        if len(self.res) > 64:
            cut = self.sim.now - self.bi
            self.res = [x for x in self.res if x[1] >= cut]

    def _receive(self, r: int, frame: Frame) -> None:
        # duplicate rejection by sequence number
        if frame.uid in self.seen[r]:
            return
        self.seen[r].add(frame.uid)
        self.deliver(r, frame)

    # -- queueing -----------------------------------------------------------
    def enqueue(self, node: int, frame: Frame) -> None:
        nh = self.next_hop(node, frame)
        if self.parent.get(node) == nh:
            self.up_q[node].append([frame, 0])
            if node not in self.up_busy:
                self.up_busy.add(node)
                self._up_attempt(node)
        else:
            key = (node, nh)
            self.pending.setdefault(key, deque()).append([frame, 0])
            self._schedule_poll(key)

    # uplink: direct, acknowledged, up to max_frame_retries retransmissions
    def _up_attempt(self, s: int) -> None:
        frame, _ = self.up_q[s][0]
        c = self.parent[s]
        self._transact(s, c, c, self.data, frame, lambda o, got: self._up_done(s, o, got))

    def _up_done(self, s: int, outcome: str, got: bool) -> None:
        entry = self.up_q[s][0]
        frame = entry[0]
        if got:
            self._receive(self.parent[s], frame)
        if outcome == "ok":
            self.up_q[s].popleft()
        elif outcome != "defer":
            entry[1] += 1
            if entry[1] > self.cfg.max_frame_retries:
                self.up_q[s].popleft()
        if self.up_q[s]:
            self._up_attempt(s)
        else:
            self.up_busy.discard(s)

    # downlink: announced in the beacon, pulled by a data request
    def _schedule_poll(self, key: tuple[int, int]) -> None:
        if key in self.polling:
            return
        self.polling.add(key)
        c, child = key
        b = self._next_beacon(c, self.sim.now)
        self.sim.schedule(b, c, EventKind.WAKEUP, f"beacon->{child} pending", self._on_beacon, (key,))

    def _on_beacon(self, key: tuple[int, int]) -> None:
        self.polling.discard(key)
        c, child = key
        if not self.pending.get(key):
            return
        if self.rng.stream(child, "loss").random() >= self.p.link_pdr(c, child):
            self._schedule_poll(key)
            return
        self.polling.add(key)
        self.sim.schedule(self.sim.now + self.bair, child, EventKind.WAKEUP, "poll", self._poll,
                          (key,))

    def _poll(self, key: tuple[int, int]) -> None:
        c, child = key
        self._transact(child, c, c, self.req, f"data-request {child}->{c}",
                       lambda o, got: self._poll_done(key, o))

    def _poll_done(self, key: tuple[int, int], outcome: str) -> None:
        c, child = key
        if outcome == "ok":
            self._down_attempt(key)
            return
        if outcome == "defer":
            self._poll(key)
            return
        self.polling.discard(key)
        # lost request or ack: the child tries again right away (counts against the frame)
        entry = self.pending[key][0]
        entry[1] += 1
        if entry[1] > self.cfg.max_frame_retries:
            entry[1] = 0
            self._schedule_poll(key)
        else:
            self.polling.add(key)
            self._poll(key)

    def _down_attempt(self, key: tuple[int, int]) -> None:
        c, child = key
        frame, _ = self.pending[key][0]
        self._transact(c, child, c, self.data, frame, lambda o, got: self._down_done(key, o, got))

    def _down_done(self, key: tuple[int, int], outcome: str, got: bool) -> None:
        c, child = key
        q = self.pending[key]
        entry = q[0]
        if got:
            self._receive(child, entry[0])
        if outcome == "ok":
            q.popleft()
            entry = q[0] if q else None
            if entry is not None:
                # frame-pending bit set: poll again in the same CAP
                self._poll(key)
                return
            self.polling.discard(key)
            return
        if outcome == "defer":
            self._poll(key)
            return
        self.polling.discard(key)
        entry[1] += 1
        if entry[1] > self.cfg.max_frame_retries:
            entry[1] = 0
            self._schedule_poll(key)
        else:
            self.polling.add(key)
            self._down_attempt(key)

    def mac_finalize(self, t_end: int) -> None:
        # every node listens through the CAP of its parent and, as a cluster
        # head, through its own CAP; cluster heads transmit a beacon each BI
        n_bi = t_end // self.bi + 2
        for n in self.nodes:
            clusters = [c for c in (self.parent.get(n), n if n in self.offset else None)
                        if c is not None]
            for c in clusters:
                starts = self.offset[c] + self.bi * np.arange(-1, n_bi, dtype=np.int64)
                self.logs[n].add_many("listen", starts, self.cap)
                if c == n:
                    self.logs[n].add_many("transmit", starts, self.bair)
