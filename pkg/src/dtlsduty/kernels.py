"""Hot Monte Carlo loops.

Each kernel has a loop form (compiled with numba) and a numpy form; the
module-level names bind to one of them according to ``DTLSDUTY_NUMBA``.
All randomness is drawn by the caller and passed in, so both forms give the
same answer for the same inputs.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# Engset / M/M/R/R/N: continuous-time Gillespie loop


def _engset_chunk_loop(u, n, r, lam, mu, horizon, batch_len, state, acc):
    """Advance the finite-source loss system over ``len(u) // 2`` events.

    state: [t, k, done]; acc rows per time batch: [arrivals, blocked, full_time].
    Returns the number of uniforms consumed.
    """
    t = state[0]
    k = int(state[1])
    nb = acc.shape[0]
    i = 0
    m = u.shape[0] - 1
    while i < m:
        idle_rate = (n - k) * lam
        rate = idle_rate + k * mu
        t_new = t - math.log(1.0 - u[i]) / rate
        end = t_new if t_new < horizon else horizon
        if k == r:
            tt = t
            while tt < end:
                b = int(tt // batch_len)
                # floor division can land one batch short exactly on a boundary
                if (b + 1) * batch_len <= tt:
                    b += 1
                if b >= nb - 1:
                    b = nb - 1
                    seg_end = end
                else:
                    seg_end = min(end, (b + 1) * batch_len)
                acc[b, 2] += seg_end - tt
                tt = seg_end
        if t_new >= horizon:
            t = horizon
            state[2] = 1.0
            i += 2
            break
        t = t_new
        b = int(t // batch_len)
        if b >= nb:
            b = nb - 1
        if u[i + 1] * rate < idle_rate:
            acc[b, 0] += 1.0
            if k < r:
                k += 1
            else:
                acc[b, 1] += 1.0
        else:
            k -= 1
        i += 2
    state[0] = t
    state[1] = k
    return i


engset_chunk_numba = njit(_engset_chunk_loop)
engset_chunk_python = _engset_chunk_loop
engset_chunk = engset_chunk_numba if USE_NUMBA else engset_chunk_python


# ---------------------------------------------------------------------------
# TSCH single-hop frame latency


def _tsch_latency_loop(ready, offsets, fails, l):
    n, c = offsets.shape
    out = np.empty(n)
    for j in range(n):
        x = ready[j]
        i0 = c
        for i in range(c):
            if offsets[j, i] >= x:
                i0 = i
                break
        idx = i0 + fails[j]
        wraps = idx // c
        slot = offsets[j, idx % c] + wraps * l
        out[j] = slot - x + 1.0
    return out


def tsch_latency_numpy(ready, offsets, fails, l):
    """Slots from readiness to the end of the first successful transmission.

    ``ready`` is the position in the slotframe (in slots, real), ``offsets``
    the sorted cell offsets of the link per sample, ``fails`` the number of
    failed attempts before the successful one.
    """
    n, c = offsets.shape
    usable = offsets >= ready[:, None]
    i0 = np.where(usable.any(axis=1), usable.argmax(axis=1), c)
    idx = i0 + fails
    slot = offsets[np.arange(n), idx % c] + (idx // c) * l
    return slot - ready + 1.0


tsch_latency_numba = njit(_tsch_latency_loop)
tsch_latency = tsch_latency_numba if USE_NUMBA else tsch_latency_numpy


# ---------------------------------------------------------------------------
# Preamble sampling (X-MAC) single-frame latency with DTLS-timer recovery
#
# Per attempt the receiver's phase x = ci - (time since its last check) is
# uniform on (0, ci]. A check window catches the first strobe starting inside
# it: strobe 0 when x >= ci - catch, and strobe ceil(x / period). Draw layout
# per attempt: [x, u_catch0, u_catch1, u_ack, u_data]; geo[.] is the number of
# failed strobe+ack exchanges after a failed first ack.


def _xmac_attempt(x, ua, ub, uack, udata, g, ci, period, strobe, ack, data, catch,
                  n_strobes, pdr, early_ack):
    k1 = math.ceil(x / period)
    woke = -1
    if x >= ci - catch and ua < pdr:
        woke = 0
    elif ub < pdr:
        woke = k1
    if woke < 0:
        return -1.0
    if early_ack:
        if uack < pdr:
            start = woke * period + strobe + ack
        else:
            k = woke + 1 + g
            if k <= n_strobes - 1:
                start = k * period + strobe + ack
            else:
                start = n_strobes * period
    else:
        start = n_strobes * period
    if udata >= pdr:
        return -1.0
    return start + data


def _xmac_latency_loop(draws, geo, timeouts, ci, period, strobe, ack, data, catch,
                       n_strobes, pdr, early_ack):
    n, a, _ = draws.shape
    out = np.full(n, np.nan)
    for j in range(n):
        waited = 0.0
        for t in range(a):
            d = draws[j, t]
            lat = _xmac_attempt(d[0], d[1], d[2], d[3], d[4], geo[j, t], ci, period, strobe,
                                ack, data, catch, n_strobes, pdr, early_ack)
            if lat >= 0.0:
                out[j] = waited + lat
                break
            waited += timeouts[t]
    return out


_xmac_attempt_nb = njit(_xmac_attempt)


def _xmac_latency_loop_nb(draws, geo, timeouts, ci, period, strobe, ack, data, catch,
                          n_strobes, pdr, early_ack):
    n, a, _ = draws.shape
    out = np.full(n, np.nan)
    for j in range(n):
        waited = 0.0
        for t in range(a):
            lat = _xmac_attempt_nb(draws[j, t, 0], draws[j, t, 1], draws[j, t, 2],
                                   draws[j, t, 3], draws[j, t, 4], geo[j, t], ci, period,
                                   strobe, ack, data, catch, n_strobes, pdr, early_ack)
            if lat >= 0.0:
                out[j] = waited + lat
                break
            waited += timeouts[t]
    return out


def xmac_latency_numpy(draws, geo, timeouts, ci, period, strobe, ack, data, catch,
                       n_strobes, pdr, early_ack):
    n, a, _ = draws.shape
    out = np.full(n, np.nan)
    waited = np.zeros(n)
    pending = np.ones(n, dtype=bool)
    for t in range(a):
        x, ua, ub, uack, udata = (draws[:, t, i] for i in range(5))
        k1 = np.ceil(x / period)
        wake0 = (x >= ci - catch) & (ua < pdr)
        wake1 = ~wake0 & (ub < pdr)
        woke = np.where(wake0, 0.0, k1)
        awake = wake0 | wake1
        if early_ack:
            k = woke + 1 + geo[:, t]
            retry_start = np.where(k <= n_strobes - 1, k * period + strobe + ack,
                                   float(n_strobes * period))
            start = np.where(uack < pdr, woke * period + strobe + ack, retry_start)
        else:
            start = np.full(n, float(n_strobes * period))
        ok = pending & awake & (udata < pdr)
        out[ok] = waited[ok] + start[ok] + data
        pending &= ~ok
        waited += timeouts[t]
        if not pending.any():
            break
    return out


xmac_latency_numba = njit(_xmac_latency_loop_nb)
xmac_latency_python = _xmac_latency_loop
xmac_latency = xmac_latency_numba if USE_NUMBA else xmac_latency_numpy
