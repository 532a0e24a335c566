"""DTLS server session slots: RAM arithmetic and finite-source blocking simulation.

A server with ``r`` statically allocated session slots serves ``n`` clients.
An idle client opens a session after an Exp(lambda) time; a session lasts
Exp(mu). An attempt that finds every slot taken is rejected and the client
stays idle (reject-on-full, no queueing).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .analytic import EngsetQuery, engset_call_congestion, engset_time_congestion

Z95 = 1.96


def max_sessions(ram_budget_bytes: int, per_session_bytes: int) -> int:
    """Number of session slots that fit in ``ram_budget_bytes``."""
    if per_session_bytes <= 0:
        raise ValueError("per-session size must be positive")
    if ram_budget_bytes < 0:
        raise ValueError("RAM budget must be non-negative")
    return int(ram_budget_bytes // per_session_bytes)


@dataclass
class SlotServer:
    """Reject-on-full slot table; used for small discrete examples and tests."""

    r: int
    occupied: list = field(default_factory=list)   # (client, release_time)

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("slot count must be >= 0")

    def expire(self, now: float) -> None:
        self.occupied = [(c, t) for c, t in self.occupied if t > now]

    def try_admit(self, client, now: float, release: float) -> bool:
        self.expire(now)
        if len(self.occupied) >= self.r:
            return False
        self.occupied.append((client, release))
        return True


@dataclass(frozen=True)
class ClientPopulation:
    n: int
    lam: float
    mu: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("client population must have n >= 1")
        if self.lam <= 0 or self.mu <= 0:
            raise ValueError("rates must be positive")

    @property
    def rho(self) -> float:
        return self.lam / self.mu

    @classmethod
    def from_rho(cls, n: int, rho: float, mu: float = 1.0) -> "ClientPopulation":
        return cls(n, rho * mu, mu)


@dataclass(frozen=True)
class BlockingEstimate:
    call: float
    call_ci95: float
    time: float
    time_ci95: float
    arrivals: int
    blocked: int
    horizon: float

    def covers(self, call_exact: float, time_exact: float) -> tuple[bool, bool]:
        return (abs(self.call - call_exact) <= self.call_ci95,
                abs(self.time - time_exact) <= self.time_ci95)


def _stationary_busy(n: int, r: int, rho: float, u: float) -> int:
    """Draw the initial number of busy slots from the truncated binomial law."""
    logs = np.array([math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
                     + k * math.log(rho) for k in range(min(n, r) + 1)])
    p = np.exp(logs - logs.max())
    cdf = np.cumsum(p / p.sum())
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


def simulate_blocking(pop: ClientPopulation, r: int, horizon: float, seed=0,
                      batches: int = 50, chunk: int = 1 << 16) -> BlockingEstimate:
    """Monte Carlo call and time congestion with batch-means 95% half-widths.

    The run starts in the stationary state, so no warm-up is discarded. The
    horizon is cut into ``batches`` equal batches; each half-width is
    1.96 x the standard error of the batch values.
    """
    if r < 0:
        raise ValueError("slot count must be >= 0")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if batches < 2:
        raise ValueError("need at least two batches")
    rng = np.random.default_rng(seed)
    k0 = _stationary_busy(pop.n, r, pop.rho, rng.random())
    state = np.array([0.0, float(k0), 0.0])
    acc = np.zeros((batches, 3))
    batch_len = horizon / batches
    while state[2] == 0.0:
        u = rng.random(chunk)
        kernels.engset_chunk(u, pop.n, r, pop.lam, pop.mu, horizon, batch_len, state, acc)
    arrivals = int(acc[:, 0].sum())
    blocked = int(acc[:, 1].sum())
    if arrivals < 10_000:
        warnings.warn(f"only {arrivals} arrivals; estimates may be rough", RuntimeWarning,
                      stacklevel=2)
    call = blocked / arrivals if arrivals else 0.0
    time_frac = acc[:, 2].sum() / horizon
    with np.errstate(invalid="ignore", divide="ignore"):
        call_b = np.where(acc[:, 0] > 0, acc[:, 1] / np.maximum(acc[:, 0], 1), 0.0)
    time_b = acc[:, 2] / batch_len
    half = lambda x: Z95 * float(np.std(x, ddof=1)) / math.sqrt(len(x))
    return BlockingEstimate(call, half(call_b), float(time_frac), half(time_b), arrivals,
                            blocked, horizon)


def engset_curve(n: int, r: int, rhos, horizon: float = 0.0, seed=0, mu: float = 1.0):
    """Rows of analytic (and, if ``horizon`` > 0, simulated) congestion per load."""
    rows = []
    for i, rho in enumerate(rhos):
        q = EngsetQuery(n, r, float(rho))
        row = {"n": n, "r": r, "rho": float(rho),
               "time_congestion": engset_time_congestion(q),
               "call_congestion": engset_call_congestion(q)}
        if horizon > 0:
            est = simulate_blocking(ClientPopulation.from_rho(n, float(rho), mu), r, horizon,
                                    (seed, i) if not isinstance(seed, tuple) else seed + (i,))
            row.update({"time_sim": est.time, "time_ci95": est.time_ci95,
                        "call_sim": est.call, "call_ci95": est.call_ci95,
                        "arrivals": est.arrivals})
        rows.append(row)
    return rows
