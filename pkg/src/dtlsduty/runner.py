"""Replicated runs, parameter sweeps and CSV / JSON-lines reports."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence, TextIO

import numpy as np

from . import analytic
from .config import MODE_KEYS, ConfigError, ScenarioConfig, build_engine
from .sessions import ClientPopulation, simulate_blocking
from .simcore import EventTrace, replication_seed

Z95 = 1.96

SIM_METRICS = ("duration_s", "client_energy_mj", "retransmissions", "hop_transmissions")
ENGSET_METRICS = ("call_congestion", "time_congestion")

PARAM_COLUMNS = {
    "preamble": ("hops", "pdr", "ci_ms", "early_ack"),
    "beacon": ("hops", "pdr", "bi_ms", "cap_ms"),
    "tsch": ("hops", "pdr", "l", "c"),
    "engset": ("n", "r", "rho"),
}

_INT_COLS = {"hops", "l", "n", "r", "samples", "failures", "arrivals"}
_PRECISION = (("congestion", 5), ("_sim", 5), ("_exact", 5), ("ci95", None), ("duration", 3),
              ("_s", 3), ("_mj", 3), ("C=", 3), ("H=", 3), ("_ms", 2), ("retransmissions", 3),
              ("hop_transmissions", 3))


@dataclass(frozen=True)
class RunStats:
    metric: str
    mean: Optional[float]
    ci95: Optional[float]
    n: int
    failures: int = 0

    @classmethod
    def from_samples(cls, metric: str, values: Sequence[float], failures: int = 0) -> "RunStats":
        x = np.asarray([v for v in values if v is not None], dtype=float)
        n = len(x)
        mean = float(x.mean()) if n else None
        ci = Z95 * float(x.std(ddof=1)) / math.sqrt(n) if n >= 2 else None
        return cls(metric, mean, ci, n, failures)


# ---------------------------------------------------------------------------
# single replications


def _replicate(job) -> dict:
    cfg, i = job
    r = build_engine(cfg, replication_seed(cfg.seed, i)).run()
    return {"completed": r.completed, "duration_s": r.duration_s,
            "client_energy_mj": r.client_energy_mj, "retransmissions": r.retransmissions,
            "hop_transmissions": r.hop_transmissions}


def _engset_seed(job) -> dict:
    cfg, i = job
    p = cfg.engset_params()
    est = simulate_blocking(ClientPopulation.from_rho(p["n"], p["rho"], p["mu"]), p["r"],
                            p["horizon_s"], replication_seed(cfg.seed, i))
    return {"completed": True, "call_congestion": est.call, "time_congestion": est.time}


def trace_replication(cfg: ScenarioConfig, index: int) -> EventTrace:
    if cfg.mode not in PARAM_COLUMNS or cfg.mode == "engset":
        raise ConfigError("config.mode", "traces exist only for simulation modes")
    if index < 0:
        raise ValueError("replication index must be >= 0")
    eng = build_engine(cfg, replication_seed(cfg.seed, index), record_trace=True)
    eng.run()
    return eng.sim.trace


def _map(fn, jobs: list, parallel: int) -> list:
    if parallel <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as ex:
        return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))


def run_scenario(cfg: ScenarioConfig, parallel: int = 1) -> list[RunStats]:
    """Aggregate statistics over ``cfg.replications`` replications (seed (master, i))."""
    if cfg.mode == "analytic":
        raise ConfigError("config.mode", "analytic scenarios produce tables, not run statistics")
    fn, metrics = ((_engset_seed, ENGSET_METRICS) if cfg.mode == "engset"
                   else (_replicate, SIM_METRICS))
    outs = _map(fn, [(cfg, i) for i in range(cfg.replications)], parallel)
    ok = [o for o in outs if o["completed"]]
    failures = len(outs) - len(ok)
    return [RunStats.from_samples(m, [o[m] for o in ok], failures) for m in metrics]


# ---------------------------------------------------------------------------
# rows


def _fmt_list(v):
    if isinstance(v, (list, tuple)):
        if len(set(v)) == 1:
            return v[0]
        return ";".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
    return v


def _params(cfg: ScenarioConfig) -> dict:
    m = cfg.mode
    if m == "engset":
        p = cfg.engset_params()
        return {"n": p["n"], "r": p["r"], "rho": p["rho"]}
    mac = cfg.mac_config()
    row: dict[str, Any] = {"hops": cfg.hops, "pdr": _fmt_list(list(cfg.pdr_tuple()))}
    if m == "preamble":
        row.update(ci_ms=mac.check_interval_ci * 1e3, early_ack=mac.early_ack)
    elif m == "beacon":
        row.update(bi_ms=mac.bi * 1e3, cap_ms=mac.cap * 1e3)
    else:
        row.update(l=mac.slotframe_length_l, c=_fmt_list(mac.cells_for(cfg.hops)))
    return row


def stats_row(cfg: ScenarioConfig, stats: Sequence[RunStats]) -> dict:
    row = {"mode": cfg.mode, **_params(cfg)}
    for s in stats:
        row[s.metric] = s.mean
        row[f"{s.metric}_ci95"] = s.ci95
    if cfg.mode == "engset":
        p = cfg.engset_params()
        q = analytic.EngsetQuery(p["n"], p["r"], p["rho"])
        row["call_exact"] = analytic.engset_call_congestion(q)
        row["time_exact"] = analytic.engset_time_congestion(q)
    row["samples"] = stats[0].n if stats else 0
    row["failures"] = stats[0].failures if stats else 0
    return row


def grid_points(grid: Mapping[str, Sequence]) -> list[dict]:
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def sweep(cfg: ScenarioConfig, grid: Optional[Mapping[str, Sequence]] = None,
          parallel: int = 1) -> list[dict]:
    """One row per point of the Cartesian product of ``grid`` (base config if empty)."""
    grid = dict(cfg.grid if grid is None else grid)
    if cfg.mode == "analytic":
        if grid:
            raise ConfigError("config.grid", "analytic tables take their ranges from l/c/hops")
        return analytic_rows(cfg)
    for k in grid:
        if k not in MODE_KEYS[cfg.mode]:
            raise ConfigError(f"config.grid.{k}", f"unknown {cfg.mode} parameter")
    rows = []
    for point in grid_points(grid) if grid else [{}]:
        sub = cfg.with_params(point)
        sub.validate()
        rows.append(stats_row(sub, run_scenario(sub, parallel)))
    return rows


def analytic_rows(cfg: ScenarioConfig) -> list[dict]:
    r = cfg.raw
    table = r.get("table", "tsch-single-hop")
    as_list = lambda v, d: d if v is None else (v if isinstance(v, list) else [v])
    frames = int(r.get("frames", analytic.DEFAULT_FRAMES))
    slot = float(r.get("slot_ms", analytic.DEFAULT_SLOT_S * 1e3)) / 1e3
    pdr = float(r.get("pdr", 1.0))
    try:
        if table == "tsch-single-hop":
            ls, cs = as_list(r.get("l"), [101, 1001]), as_list(r.get("c"), [1, 2, 3])
            return [{"l": l, **{f"C={c}": analytic.tsch_handshake_duration(
                analytic.TschLatencyQuery(l, ((c, pdr),), frames, slot)) for c in cs}}
                for l in ls]
        if table == "tsch-multi-hop":
            ls, hs = as_list(r.get("l"), [101, 1001]), as_list(r.get("hops"), [2, 3, 4])
            c = int(r.get("c", 1))
            return [{"l": l, **{f"H={h}": analytic.tsch_handshake_duration(
                analytic.TschLatencyQuery(l, ((c, pdr),) * h, frames, slot)) for h in hs}}
                for l in ls]
        rhos = as_list(r.get("rho"), [0.1, 0.25, 0.5, 1.0, 2.0])
        n, rr = int(r.get("n", 5)), int(r.get("r", 3))
        rows = []
        for rho in rhos:
            q = analytic.EngsetQuery(n, rr, float(rho))
            rows.append({"n": n, "r": rr, "rho": float(rho),
                         "time_congestion": analytic.engset_time_congestion(q),
                         "call_congestion": analytic.engset_call_congestion(q)})
        return rows
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config.{table}", str(e)) from None


# ---------------------------------------------------------------------------
# output


def _precision(col: str) -> Optional[int]:
    for key, prec in _PRECISION:
        if key in col:
            if prec is None:
                return _precision(col.replace("_ci95", ""))
            return prec
    return None


def format_value(col: str, v):
    """Value as it appears in a report: rounded floats, ints, bools, strings, None."""
    if v is None or isinstance(v, (bool, str)):
        return v
    if col in _INT_COLS and float(v).is_integer():
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    prec = _precision(col)
    v = float(v)
    return round(v, prec) if prec is not None else v


def format_row(row: Mapping) -> dict:
    return {k: format_value(k, v) for k, v in row.items()}


def _csv_cell(col: str, v) -> str:
    v = format_value(col, v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        prec = _precision(col)
        return f"{v:.{prec}f}" if prec is not None else f"{v:g}"
    return str(v)


def emit(rows: Sequence[Mapping], fmt: str = "csv", fh: Optional[TextIO] = None) -> str:
    """Write rows as CSV (header + stable column order) or JSON lines; returns the text."""
    if not rows:
        raise ValueError("no rows to emit")
    cols: list[str] = []
    for row in rows:
        cols.extend(k for k in row if k not in cols)
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_csv_cell(c, row.get(c)) for c in cols])
    elif fmt == "jsonl":
        for row in rows:
            buf.write(json.dumps({c: format_value(c, row.get(c)) for c in cols}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
