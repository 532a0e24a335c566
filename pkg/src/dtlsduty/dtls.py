"""DTLS 1.2 PSK handshake as alternating flights of link-layer frames.

State transitions are pure functions over frozen dataclasses so the whole
reachable state space can be enumerated in tests. Times are integer
microseconds; timeouts are configured in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

C2S = "c2s"
S2C = "s2c"
CLIENT = "client"
SERVER = "server"

RECORD_HEADER_BYTES = 13
CCM8_NONCE_BYTES = 8
CCM8_TAG_BYTES = 8
LINK_PAYLOAD_BYTES = 127

US = 1_000_000


@dataclass(frozen=True)
class Flight:
    direction: str
    frames: int
    label: str = ""


@dataclass(frozen=True)
class FlightPlan:
    flights: tuple[Flight, ...]

    def __post_init__(self):
        if len(self.flights) < 2 or len(self.flights) % 2:
            raise ValueError("a flight plan needs an even number (>= 2) of flights")
        for i, f in enumerate(self.flights):
            want = C2S if i % 2 == 0 else S2C
            if f.direction != want:
                raise ValueError(f"flight {i + 1} must be {want}, got {f.direction}")
            if f.frames < 1:
                raise ValueError(f"flight {i + 1} has no frames")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence]) -> "FlightPlan":
        flights = []
        for p in pairs:
            label = p[2] if len(p) > 2 else ""
            flights.append(Flight(str(p[0]), int(p[1]), label))
        return cls(tuple(flights))

    def __len__(self) -> int:
        return len(self.flights)

    def frames(self, i: int) -> int:
        return self.flights[i].frames

    @property
    def total_frames(self) -> int:
        return sum(f.frames for f in self.flights)

    def owner(self, i: int) -> str:
        return CLIENT if i % 2 == 0 else SERVER

    def to_pairs(self) -> list[list]:
        return [[f.direction, f.frames] for f in self.flights]


def default_flight_plan() -> FlightPlan:
    return FlightPlan((
        Flight(C2S, 1, "ClientHello"),
        Flight(S2C, 1, "HelloVerifyRequest"),
        Flight(C2S, 1, "ClientHello+cookie"),
        Flight(S2C, 2, "ServerHello+ServerHelloDone"),
        Flight(C2S, 3, "ClientKeyExchange+ChangeCipherSpec+Finished"),
        Flight(S2C, 2, "ChangeCipherSpec+Finished"),
    ))


@dataclass(frozen=True)
class RetransmitPolicy:
    initial_timeout: float = 2.0
    max_timeout: float = 60.0
    max_retransmissions: int = 7
    doubling: bool = True

    def __post_init__(self):
        if self.initial_timeout <= 0:
            raise ValueError("initial timeout must be positive")
        if self.max_timeout < self.initial_timeout:
            raise ValueError("max timeout below the initial timeout")
        if self.max_retransmissions < 0:
            raise ValueError("max retransmissions must be >= 0")

    def timeout(self, attempt: int) -> float:
        if not self.doubling:
            return min(self.initial_timeout, self.max_timeout)
        return min(self.initial_timeout * 2.0 ** attempt, self.max_timeout)


@dataclass(frozen=True)
class Timer:
    deadline: int
    timeout: float
    attempt: int


@dataclass(frozen=True)
class HandshakeState:
    role: str
    current_flight: int
    frames_received_in_flight: frozenset = frozenset()
    last_sent: Optional[int] = None
    timer: Optional[Timer] = None
    complete: bool = False
    failed: bool = False
    anomalies: int = 0

    @property
    def done(self) -> bool:
        return self.complete or self.failed


def _flight_frames(i: int, plan: FlightPlan) -> list[tuple[int, int]]:
    return [(i, k) for k in range(plan.frames(i))]


def _timed(i: int, plan: FlightPlan) -> bool:
    # the final flight is never retransmitted on a timer; the server's
    # HelloVerifyRequest is sent statelessly
    if i == len(plan) - 1:
        return False
    if i == 1 and len(plan) >= 4:
        return False
    return True


def new_client() -> HandshakeState:
    return HandshakeState(role=CLIENT, current_flight=0)


def new_server() -> HandshakeState:
    return HandshakeState(role=SERVER, current_flight=0)


def start_client(plan: FlightPlan, policy: RetransmitPolicy, now: int):
    """Client sends flight 1 and arms its timer."""
    timer = Timer(now + round(policy.timeout(0) * US), policy.timeout(0), 0)
    state = HandshakeState(role=CLIENT, current_flight=1, last_sent=0, timer=timer)
    return state, _flight_frames(0, plan)


def is_peer_flight(state: HandshakeState, flight: int, plan: FlightPlan) -> bool:
    return plan.owner(flight) != state.role


def on_frame_delivered(state: HandshakeState, plan: FlightPlan, policy: RetransmitPolicy,
                       flight: int, frame: int, now: int):
    """Apply one received frame. Returns ``(new_state, frames_to_send)``."""
    if state.failed:
        return state, []
    if not (0 <= flight < len(plan)) or not (0 <= frame < plan.frames(flight)) \
            or not is_peer_flight(state, flight, plan):
        return (state if state.complete else replace(state, anomalies=state.anomalies + 1)), []

    expect = state.current_flight
    if flight > expect:
        return (state if state.complete else replace(state, anomalies=state.anomalies + 1)), []

    if flight < expect:
        # the peer repeated its previous flight, so it never got ours: resend
        # ours once per repeated flight (keyed on its last frame, no state kept)
        if flight == expect - 2 and state.last_sent is not None \
                and frame == plan.frames(flight) - 1 \
                and not (state.complete and state.role == CLIENT):
            return state, _flight_frames(state.last_sent, plan)
        return state, []

    # flight == expect: the awaited peer flight
    if state.complete:
        return state, []
    got = state.frames_received_in_flight | {frame}
    timer = state.timer
    # first frame of the successor flight acknowledges ours, unless the peer
    # will never retransmit it on its own
    if timer is not None and _timed(flight, plan):
        timer = None
    if len(got) < plan.frames(flight):
        return replace(state, frames_received_in_flight=got, timer=timer), []

    if flight == len(plan) - 1:
        return replace(state, current_flight=len(plan), frames_received_in_flight=frozenset(),
                       timer=None, complete=True), []

    mine = flight + 1
    if mine == len(plan) - 1:
        new = replace(state, current_flight=len(plan), last_sent=mine,
                      frames_received_in_flight=frozenset(), timer=None, complete=True)
    elif _timed(mine, plan):
        t0 = policy.timeout(0)
        new = replace(state, current_flight=mine + 1, last_sent=mine,
                      frames_received_in_flight=frozenset(),
                      timer=Timer(now + round(t0 * US), t0, 0))
    else:
        new = replace(state, current_flight=mine + 1, last_sent=mine,
                      frames_received_in_flight=frozenset(), timer=None)
    return new, _flight_frames(mine, plan)


def on_timeout(state: HandshakeState, plan: FlightPlan, policy: RetransmitPolicy, now: int):
    """Fire the retransmission timer. Returns ``(new_state, frames_to_resend, next_deadline)``.

    ``next_deadline`` is None when no timer is armed afterwards (failure or spurious call).
    """
    t = state.timer
    if state.done or t is None or now < t.deadline:
        return state, [], None
    if t.attempt >= policy.max_retransmissions:
        return replace(state, failed=True, timer=None), [], None
    attempt = t.attempt + 1
    timeout = policy.timeout(attempt)
    deadline = now + round(timeout * US)
    new = replace(state, timer=Timer(deadline, timeout, attempt))
    return new, _flight_frames(state.last_sent, plan), deadline


def datagram_overhead(payload_bytes: int) -> int:
    """Datagram size after DTLS record protection with TLS_PSK_WITH_AES_128_CCM_8."""
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    return payload_bytes + RECORD_HEADER_BYTES + CCM8_NONCE_BYTES + CCM8_TAG_BYTES


def overhead_fraction(link_payload: int = LINK_PAYLOAD_BYTES) -> float:
    return datagram_overhead(0) / link_payload
