"""Shared handshake driver: DTLS endpoints on a linear chain over a pluggable MAC.

Node 0 is the DTLS client, node ``hops`` the server. Frames are relayed hop
by hop; each MAC subclass decides when a hop transmission happens and whether
it succeeds, and records radio activity for the energy ledger.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .. import dtls
from ..energy import ActivityLog, EnergyLedger, RadioPowerProfile, energy_mj, ledger_from_logs
from ..simcore import EventKind, RngStreams, Simulator, to_us

CLIENT_NODE = 0


@dataclass
class Frame:
    uid: int
    flight: int
    index: int
    src: int
    dst: int
    born: int

    def __str__(self) -> str:
        return f"f{self.flight + 1}.{self.index} {self.src}->{self.dst} #{self.uid}"


@dataclass
class RunResult:
    mode: str
    completed: bool
    failed: bool
    duration_s: Optional[float]
    end_time_s: float
    frames_originated: int
    hop_transmissions: int
    retransmissions: int
    timer_fires: int
    anomalies: int
    ledger: EnergyLedger
    client_energy_mj: float
    delivered: list = field(default_factory=list)
    trace: object = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EngineParams:
    hops: int = 1
    pdr: tuple[float, ...] = (1.0,)
    plan: dtls.FlightPlan = field(default_factory=dtls.default_flight_plan)
    policy: dtls.RetransmitPolicy = field(default_factory=dtls.RetransmitPolicy)
    crypto_s: float = 0.010
    frame_cpu_s: float = 0.0005
    processing_latency: bool = True
    profile: RadioPowerProfile = field(default_factory=RadioPowerProfile)
    horizon_s: float = 3600.0

    def link_pdr(self, a: int, b: int) -> float:
        """PDR of the hop between adjacent nodes a and b (symmetric)."""
        return self.pdr[min(a, b)]


class HandshakeEngine:
    """Runs one handshake replication. Subclasses implement the link layer."""

    mode = "base"
    # When True the retransmission timer starts once the flight's last frame has
    # left the endpoint's MAC (stacks whose MAC send blocks until done).
    arm_on_departure = False

    def __init__(self, params: EngineParams, seed, record_trace: bool = False):
        self.p = params
        self.hops = params.hops
        self.nodes = list(range(self.hops + 1))
        self.server_node = self.hops
        self.sim = Simulator(record_trace=record_trace)
        self.rng = RngStreams(seed)
        self.logs = {n: ActivityLog() for n in self.nodes}
        self.queues: dict[int, deque] = {n: deque() for n in self.nodes}
        self.states = {dtls.CLIENT: dtls.new_client(), dtls.SERVER: dtls.new_server()}
        self.timers: dict[str, object] = {dtls.CLIENT: None, dtls.SERVER: None}
        self.awaiting: dict[str, bool] = {dtls.CLIENT: False, dtls.SERVER: False}
        self._uid = 0
        self.frames_originated = 0
        self.hop_transmissions = 0
        self.retransmissions = 0
        self.timer_fires = 0
        self.done = False
        self.failed = False
        self.end_time: Optional[int] = None
        self.delivered: list[tuple[int, str, int, int]] = []

    # -- topology ----------------------------------------------------------
    def neighbors(self, node: int) -> list[int]:
        return [n for n in (node - 1, node + 1) if 0 <= n <= self.hops]

    @staticmethod
    def next_hop(node: int, frame: Frame) -> int:
        return node + 1 if frame.dst > node else node - 1

    def endpoint(self, role: str) -> int:
        return CLIENT_NODE if role == dtls.CLIENT else self.server_node

    def role_at(self, node: int) -> Optional[str]:
        if node == CLIENT_NODE:
            return dtls.CLIENT
        if node == self.server_node:
            return dtls.SERVER
        return None

    # -- MAC hooks ---------------------------------------------------------
    def mac_setup(self) -> None:
        pass

    def enqueue(self, node: int, frame: Frame) -> None:
        raise NotImplementedError

    def mac_finalize(self, t_end: int) -> None:
        pass

    # -- driver ------------------------------------------------------------
    def run(self) -> RunResult:
        self.mac_setup()
        self.sim.schedule(0, CLIENT_NODE, EventKind.PROCESS, "client-start", self._client_start)
        horizon = to_us(self.p.horizon_s)
        self.sim.run_until(horizon=horizon, stop=lambda: self.done)
        if not self.done:
            self.failed = True
            self.end_time = min(self.sim.now, horizon) if self.sim.trace.starved else horizon
        t_end = self.end_time
        self.mac_finalize(t_end)
        ledger = ledger_from_logs(self.logs, t_end)
        completed = not self.failed
        return RunResult(
            mode=self.mode,
            completed=completed,
            failed=self.failed,
            duration_s=t_end / 1e6 if completed else None,
            end_time_s=t_end / 1e6,
            frames_originated=self.frames_originated,
            hop_transmissions=self.hop_transmissions,
            retransmissions=self.retransmissions,
            timer_fires=self.timer_fires,
            anomalies=self.states[dtls.CLIENT].anomalies + self.states[dtls.SERVER].anomalies,
            ledger=ledger,
            client_energy_mj=energy_mj(ledger, self.p.profile, CLIENT_NODE),
            delivered=self.delivered,
            trace=self.sim.trace,
        )

    def _processing(self, node: int, n_messages: int) -> int:
        if n_messages <= 0:
            return 0
        dt = to_us(self.p.crypto_s * n_messages)
        self.logs[node].add_cpu(self.sim.now, self.sim.now + dt)
        return dt if self.p.processing_latency else 0

    def _client_start(self) -> None:
        plan = self.p.plan
        delay = self._processing(CLIENT_NODE, plan.frames(0))
        state, out = dtls.start_client(plan, self.p.policy, self.sim.now + delay)
        self._set_state(dtls.CLIENT, state)
        self._emit_later(dtls.CLIENT, out, delay)

    def _emit_later(self, role: str, refs, delay: int) -> None:
        if not refs:
            return
        node = self.endpoint(role)
        if delay == 0:
            self._emit(role, refs)
        else:
            self.sim.schedule_in(delay, node, EventKind.PROCESS, f"emit {role}", self._emit,
                                 (role, refs))

    def _emit(self, role: str, refs) -> None:
        if self.done:
            return
        src = self.endpoint(role)
        dst = self.endpoint(dtls.SERVER if role == dtls.CLIENT else dtls.CLIENT)
        for flight, index in refs:
            self._uid += 1
            self.frames_originated += 1
            self.enqueue(src, Frame(self._uid, flight, index, src, dst, self.sim.now))

    def deliver(self, node: int, frame: Frame) -> None:
        """Called by the MAC when ``frame`` was received intact at ``node``."""
        self.logs[node].add_cpu(self.sim.now, self.sim.now + to_us(self.p.frame_cpu_s))
        if node != frame.dst:
            self.enqueue(node, frame)
            return
        role = self.role_at(node)
        old = self.states[role]
        self.delivered.append((self.sim.now, role, frame.flight, frame.index))
        new, out = dtls.on_frame_delivered(old, self.p.plan, self.p.policy, frame.flight,
                                           frame.index, self.sim.now)
        plan = self.p.plan
        delay = 0
        if new.last_sent != old.last_sent:
            # a fresh flight: process the received flight, build ours
            delay = self._processing(node, plan.frames(frame.flight) + plan.frames(new.last_sent))
            if new.timer is not None:
                new = _shift_timer(new, delay)
        elif out:
            self.retransmissions += 1
        self._set_state(role, new)
        if role == dtls.CLIENT and new.complete and not old.complete:
            delay = self._processing(node, plan.frames(frame.flight))
            self.sim.schedule_in(delay, node, EventKind.PROCESS, "handshake-complete",
                                 self._finish)
            return
        self._emit_later(role, out, delay)

    def _finish(self) -> None:
        self.done = True
        self.end_time = self.sim.now

    def _set_state(self, role: str, new: dtls.HandshakeState) -> None:
        old_handle = self.timers[role]
        old_timer = self.states[role].timer
        self.states[role] = new
        t = new.timer
        if old_handle is not None and (t is None or old_handle.payload != ("timer", t.deadline)):
            old_handle.cancel()
            self.timers[role] = None
        if t is None:
            self.awaiting[role] = False
            return
        if self.arm_on_departure and (t != old_timer or self.awaiting[role]):
            self.awaiting[role] = True
            return
        self._schedule_timer(role)

    def _schedule_timer(self, role: str) -> None:
        t = self.states[role].timer
        if self.timers[role] is None:
            self.timers[role] = self.sim.schedule(
                max(t.deadline, self.sim.now), self.endpoint(role), EventKind.TIMER_FIRE,
                ("timer", t.deadline), self._on_timer, (role,))

    def frame_departed(self, node: int, frame: Frame) -> None:
        """Called by the MAC when ``frame`` finished its first hop transmission."""
        role = self.role_at(node)
        if role is None or node != frame.src or not self.awaiting[role]:
            return
        st = self.states[role]
        if st.timer is None or frame.flight != st.last_sent:
            return
        if frame.index != self.p.plan.frames(frame.flight) - 1:
            return
        self.awaiting[role] = False
        t = st.timer
        self.states[role] = replace(st, timer=dtls.Timer(self.sim.now + to_us(t.timeout),
                                                         t.timeout, t.attempt))
        self._schedule_timer(role)

    def _on_timer(self, role: str) -> None:
        self.timers[role] = None
        self.timer_fires += 1
        state, out, _ = dtls.on_timeout(self.states[role], self.p.plan, self.p.policy,
                                        self.sim.now)
        self._set_state(role, state)
        if state.failed:
            self.failed = True
            self.done = True
            self.end_time = self.sim.now
            return
        if out:
            self.retransmissions += 1
            self._emit(role, out)


def _shift_timer(state: dtls.HandshakeState, delay: int) -> dtls.HandshakeState:
    t = state.timer
    return replace(state, timer=dtls.Timer(t.deadline + delay, t.timeout, t.attempt))
