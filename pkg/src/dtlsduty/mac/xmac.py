"""Preamble sampling (X-MAC style) link layer.

Every node samples the channel for ``check_duration`` once per check
interval at its own random phase. A sender repeats short addressed strobes
for up to one check interval plus one strobe period; the first strobe the
receiver hears during a check wakes it. With early acknowledgment the
receiver answers in the strobe gap and the data frame follows at once;
otherwise the data follows the full train. Data frames are never
acknowledged, so a lost data frame is left to the DTLS timer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import dtls, kernels
from ..simcore import EventKind, to_us
from .base import EngineParams, Frame, HandshakeEngine


@dataclass(frozen=True)
class PreambleConfig:
    check_interval_ci: float = 0.5
    strobe_duration: float = 0.0005
    strobe_gap: float = 0.0005
    data_frame_airtime: float = 0.0043
    early_ack: bool = True
    early_ack_airtime: float = 0.00035
    check_duration: float = 0.002
    backoff_max: float = 0.002

    def __post_init__(self):
        if self.check_interval_ci <= 0:
            raise ValueError("check interval must be positive")
        for name in ("strobe_duration", "strobe_gap", "data_frame_airtime", "early_ack_airtime",
                     "check_duration"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.early_ack_airtime > self.strobe_gap:
            raise ValueError("the strobe ack must fit in the strobe gap")
        if self.check_duration - self.strobe_duration < self.period:
            raise ValueError("a channel check must be long enough to catch a whole strobe")

    @property
    def period(self) -> float:
        return self.strobe_duration + self.strobe_gap

    @property
    def catch(self) -> float:
        """Span of strobe start times that a check window fully contains."""
        return self.check_duration - self.strobe_duration

    @property
    def n_strobes(self) -> int:
        return math.ceil(round(self.check_interval_ci / self.period, 9)) + 1


@dataclass
class _NodeMac:
    phase: int = 0
    tx_until: int = -1
    in_train: bool = False
    rx_lock: Optional[int] = None
    retry_pending: bool = False
    waiters: set = field(default_factory=set)
    acts: list = field(default_factory=list)


@dataclass
class _Train:
    s: int
    r: int
    frame: Frame
    t0: int
    act: list
    resolved: bool = False
    woke: bool = False
    data_start: int = 0
    data_end: int = 0


class XmacEngine(HandshakeEngine):
    mode = "preamble"
    arm_on_departure = True

    def __init__(self, params: EngineParams, mac: PreambleConfig, seed, record_trace=False):
        super().__init__(params, seed, record_trace)
        self.cfg = mac
        self.ci = to_us(mac.check_interval_ci)
        self.period = to_us(mac.period)
        self.sd = to_us(mac.strobe_duration)
        self.ack = to_us(mac.early_ack_airtime)
        self.data = to_us(mac.data_frame_airtime)
        self.cw = to_us(mac.check_duration)
        self.catch = self.cw - self.sd
        self.k_strobes = mac.n_strobes
        self.mac: dict[int, _NodeMac] = {}
        for lg in self.logs.values():
            lg.strobe_tx_fraction = mac.strobe_duration / mac.period

    def mac_setup(self) -> None:
        for n in self.nodes:
            phase = int(self.rng.stream(n, "phase").random() * self.ci)
            self.mac[n] = _NodeMac(phase=phase)

    def _u(self, node: int) -> float:
        return float(self.rng.stream(node, "loss").random())

    def enqueue(self, node: int, frame: Frame) -> None:
        self.queues[node].append(frame)
        self._try_send(node)

    def _try_send(self, s: int) -> None:
        st = self.mac[s]
        if not self.queues[s] or st.in_train or st.rx_lock is not None or st.retry_pending:
            return
        now = self.sim.now
        for n in self.neighbors(s):
            if self.mac[n].tx_until > now:
                self.mac[n].waiters.add(s)
                return
        frame = self.queues[s].popleft()
        self._start_train(s, self.next_hop(s, frame), frame)

    def _start_train(self, s: int, r: int, frame: Frame) -> None:
        now = self.sim.now
        K = self.k_strobes
        st = self.mac[s]
        st.in_train = True
        st.tx_until = now + K * self.period + self.data
        train = _Train(s, r, frame, now, [0, 0])
        self.sim.schedule(now, s, EventKind.FRAME_START, frame, None)
        v = (now - self.mac[r].phase) % self.ci
        opps = []
        if v <= self.catch:
            opps.append(0)
        k1 = -(-(self.ci - v) // self.period)
        if k1 <= K - 1 and (not opps or k1 > 0):
            opps.append(k1)
        for k in opps:
            self.sim.schedule(now + k * self.period, r, EventKind.WAKEUP, f"strobe {k} {frame}",
                              self._on_opportunity, (train, k))
        self.sim.schedule(now + K * self.period, s, EventKind.WAKEUP, f"train-end {frame}",
                          self._on_train_end, (train,))

    def _on_opportunity(self, train: _Train, k: int) -> None:
        if train.resolved:
            return
        r, s = train.r, train.s
        rst = self.mac[r]
        if rst.in_train or rst.rx_lock is not None:
            return
        pdr = self.p.link_pdr(s, r)
        if self._u(r) >= pdr:
            return
        train.woke = True
        rst.rx_lock = s
        K = self.k_strobes
        t0, P = train.t0, self.period
        start = None
        if self.cfg.early_ack:
            if self._u(s) < pdr:
                start = t0 + k * P + self.sd + self.ack
            else:
                for j in range(k + 1, K):
                    if self._u(r) < pdr and self._u(s) < pdr:
                        start = t0 + j * P + self.sd + self.ack
                        break
        if start is None:
            start = t0 + K * P
        self._resolve(train, start)
        self.logs[r].add("receive", t0 + k * P, train.data_end)

    def _on_train_end(self, train: _Train) -> None:
        if not train.resolved:
            self._resolve(train, self.sim.now)

    def _resolve(self, train: _Train, data_start: int) -> None:
        train.resolved = True
        train.data_start = data_start
        train.data_end = data_start + self.data
        train.act[:] = [data_start, train.data_end]
        st = self.mac[train.s]
        st.acts.append(train.act)
        st.tx_until = train.data_end
        self.logs[train.s].add("strobe", train.t0, data_start)
        self.logs[train.s].add("transmit", data_start, train.data_end)
        self.sim.schedule(train.data_end, train.r, EventKind.FRAME_END, train.frame,
                          self._on_data_end, (train,))

    def _interfered(self, train: _Train) -> bool:
        a, b = train.data_start, train.data_end
        for n in self.neighbors(train.r) + [train.r]:
            if n == train.s:
                continue
            for act in self.mac[n].acts:
                if act[0] < b and act[1] > a:
                    return True
        return False

    def _on_data_end(self, train: _Train) -> None:
        s, r = train.s, train.r
        st, rst = self.mac[s], self.mac[r]
        st.in_train = False
        st.tx_until = self.sim.now
        self.hop_transmissions += 1
        ok = False
        if train.woke and rst.rx_lock == s:
            rst.rx_lock = None
            ok = self._u(r) < self.p.link_pdr(s, r) and not self._interfered(train)
        horizon = self.sim.now - 2 * self.ci
        st.acts[:] = [a for a in st.acts if a[1] >= horizon]
        if s == train.frame.src:
            self.frame_departed(s, train.frame)
        if ok:
            self.on_hop_success(r, train.frame)
        self._try_send(s)
        self._try_send(r)
        self._wake_waiters(s)

    def on_hop_success(self, r: int, frame: Frame) -> None:
        self.deliver(r, frame)

    def _wake_waiters(self, s: int) -> None:
        waiters = sorted(self.mac[s].waiters)
        self.mac[s].waiters.clear()
        bmax = to_us(self.cfg.backoff_max)
        for w in waiters:
            wst = self.mac[w]
            if wst.retry_pending:
                continue
            wst.retry_pending = True
            delay = int(self.rng.stream(w, "backoff").random() * bmax)
            self.sim.schedule_in(delay, w, EventKind.WAKEUP, "backoff", self._retry, (w,))

    def _retry(self, w: int) -> None:
        self.mac[w].retry_pending = False
        self._try_send(w)

    def mac_finalize(self, t_end: int) -> None:
        for n in self.nodes:
            ph = self.mac[n].phase
            starts = ph + self.ci * np.arange(-1, t_end // self.ci + 2, dtype=np.int64)
            self.logs[n].add_many("listen", starts, self.cw)


class _UnicastProbe(XmacEngine):
    """One frame from node 0 to node 1, no DTLS; records the delivery time."""

    def run_probe(self) -> Optional[int]:
        self.mac_setup()
        self.got: Optional[int] = None
        frame = Frame(1, 0, 0, 0, 1, 0)
        self.sim.schedule(0, 0, EventKind.PROCESS, "probe", self.enqueue, (0, frame))
        self.sim.run_until()
        return self.got

    def on_hop_success(self, r: int, frame: Frame) -> None:
        self.got = self.sim.now


def simulate_unicast(mac: PreambleConfig, pdr: float, n: int, seed: int = 0) -> np.ndarray:
    """Delivery latency (s) of ``n`` independent single frames; NaN where the frame was lost."""
    out = np.full(n, np.nan)
    params = EngineParams(hops=1, pdr=(pdr,))
    for i in range(n):
        got = _UnicastProbe(params, mac, (seed, i)).run_probe()
        if got is not None:
            out[i] = got / 1e6
    return out


def expected_unicast_latency(cfg: PreambleConfig, pdr: float,
                             policy: Optional[dtls.RetransmitPolicy] = None) -> float:
    """Mean seconds from handing a frame to the MAC until its successful delivery.

    The receiver's check phase is uniform; a lost frame (missed strobes or a
    lost data frame) is resent when the DTLS timer expires, with a fresh phase.
    Returns ``inf`` when ``pdr`` is 0.
    """
    if not (0.0 <= pdr <= 1.0):
        raise ValueError("pdr must be in [0, 1]")
    if pdr == 0.0:
        return math.inf
    policy = policy or dtls.RetransmitPolicy()
    q, mean_ok = _attempt_moments(cfg, pdr)
    if q <= 0:
        return math.inf
    # sum_{j>=1} (1-q)^j T(j-1); timeouts are constant once capped
    extra = 0.0
    j = 1
    fail = 1.0 - q
    while True:
        t = policy.timeout(j - 1)
        term = fail ** j
        if t >= policy.max_timeout or not policy.doubling or term < 1e-18:
            extra += t * term / q  # tail sum_{i>=j} (1-q)^i = (1-q)^j / q
            break
        extra += t * term
        j += 1
    return mean_ok + extra


def _attempt_moments(cfg: PreambleConfig, pdr: float) -> tuple[float, float]:
    """(P(attempt delivers), E[latency | delivered]) for one strobe train."""
    ci, P = cfg.check_interval_ci, cfg.period
    sd, ack, data = cfg.strobe_duration, cfg.early_ack_airtime, cfg.data_frame_airtime
    a = cfg.catch
    K = cfg.n_strobes
    # x = ci - (time since the receiver's last check start) ~ U(0, ci]; the
    # check opening inside the train catches strobe ceil(x / P); if x >= ci - a
    # the check in progress also catches strobe 0 first.
    J = math.ceil(round(ci / P, 9))
    j = np.arange(1, J + 1, dtype=float)
    lo = (j - 1) * P
    hi = np.minimum(j * P, ci)
    w_b = np.clip(np.minimum(hi, ci - a) - lo, 0, None) / ci    # case B mass per k1=j
    w_a = np.clip(hi - np.maximum(lo, ci - a), 0, None) / ci    # case A mass per k1=j

    def after_wake(k):
        """(E[data start | woke at strobe k]) for early-ack or full-train operation."""
        if not cfg.early_ack:
            return np.full_like(np.asarray(k, float), K * P)
        k = np.asarray(k, float)
        direct = k * P + sd + ack
        s = pdr * pdr
        qq = 1.0 - s
        n_left = K - 1 - k
        if s >= 1.0:
            retry = (k + 1) * P + sd + ack
        else:
            s0 = 1.0 - qq ** n_left
            s1 = qq * (1.0 - n_left * qq ** (n_left - 1) + (n_left - 1) * qq ** n_left) / s
            retry = ((k + 1) * P + sd + ack) * s0 + P * s1 + qq ** n_left * K * P
        return pdr * direct + (1.0 - pdr) * retry

    start0 = float(after_wake(0.0))
    start_k = after_wake(j)
    # case B: wake only at k1; case A: wake at 0, else at k1
    p_wake_b = pdr
    p_wake_a0 = pdr
    p_wake_a1 = (1.0 - pdr) * pdr
    mass = (w_b * p_wake_b + w_a * (p_wake_a0 + p_wake_a1)).sum()
    first = (w_b * p_wake_b * start_k + w_a * (p_wake_a0 * start0 + p_wake_a1 * start_k)).sum()
    q = mass * pdr
    if q == 0:
        return 0.0, math.inf
    return q, first / mass + data


def unicast_latency_mc(cfg: PreambleConfig, pdr: float, n: int, seed=0,
                       policy: Optional[dtls.RetransmitPolicy] = None) -> np.ndarray:
    """Vectorised single-frame latency samples (s), DTLS-timer recovery included.

    Uses the compiled kernel; NaN marks frames still undelivered after the
    last allowed retransmission.
    """
    if not (0.0 < pdr <= 1.0):
        raise ValueError("pdr must be in (0, 1]")
    policy = policy or dtls.RetransmitPolicy()
    attempts = policy.max_retransmissions + 1
    rng = np.random.default_rng(seed)
    draws = rng.random((n, attempts, 5))
    draws[:, :, 0] = cfg.check_interval_ci * (1.0 - draws[:, :, 0])
    geo = rng.geometric(pdr * pdr, size=(n, attempts)).astype(np.int64) - 1
    timeouts = np.array([policy.timeout(a) for a in range(attempts)])
    return kernels.xmac_latency(draws, geo, timeouts, cfg.check_interval_ci, cfg.period,
                                cfg.strobe_duration, cfg.early_ack_airtime,
                                cfg.data_frame_airtime, cfg.catch, cfg.n_strobes, float(pdr),
                                cfg.early_ack)
