"""Scenario configuration: a flat JSON object validated against its mode.

Example::

    {"mode": "preamble", "ci_ms": 500, "pdr": 0.9, "hops": 1,
     "replications": 1000, "seed": 7, "grid": {"ci_ms": [125, 250, 500, 1000]}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from . import dtls
from .energy import RadioPowerProfile
from .mac.base import EngineParams
from .mac.beacon import BeaconConfig, superframe_params
from .mac.tsch import TschConfig
from .mac.xmac import PreambleConfig

MODES = ("preamble", "beacon", "tsch", "engset", "analytic")
SIM_MODES = ("preamble", "beacon", "tsch")
TABLES = ("tsch-single-hop", "tsch-multi-hop", "engset")

DEFAULT_REPLICATIONS = {"preamble": 1000, "beacon": 500, "tsch": 1000, "engset": 20,
                        "analytic": 1}

_COMMON = {"mode", "seed", "replications", "grid", "name"}
_DTLS = {"hops", "pdr", "flights", "initial_timeout_s", "max_timeout_s", "max_retransmissions",
         "doubling", "crypto_ms", "frame_cpu_ms", "processing_latency", "horizon_s", "power"}
_KEYS = {
    "preamble": _DTLS | {"ci_ms", "early_ack", "strobe_ms", "strobe_gap_ms", "data_airtime_ms",
                         "ack_airtime_ms", "check_ms"},
    "beacon": _DTLS | {"bo", "so", "bi_ms", "cap_ms", "data_airtime_ms", "ack_airtime_ms"},
    "tsch": _DTLS | {"l", "c", "slot_ms", "data_airtime_ms", "ack_airtime_ms"},
    "engset": {"n", "r", "rho", "mu", "horizon_s"},
    "analytic": {"table", "l", "c", "hops", "pdr", "frames", "slot_ms", "n", "r", "rho"},
}


MODE_KEYS = _KEYS


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def _num(d, key, kind=float, lo=None, hi=None, lo_open=False):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"config.{key}", f"expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(f"config.{key}", f"expected an integer, got {v!r}")
    v = kind(v)
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"config.{key}", f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"config.{key}", f"must be <= {hi}")
    return v


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario. ``raw`` keeps the parsed JSON values (sans grid)."""

    mode: str
    raw: Mapping[str, Any]
    seed: int = 1
    replications: int = 1
    grid: Mapping[str, list] = field(default_factory=dict)

    # -- construction ------------------------------------------------------
    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScenarioConfig":
        if not isinstance(d, Mapping):
            raise ConfigError("config", "top level must be a JSON object")
        if "mode" not in d:
            raise ConfigError("config.mode", "missing required field")
        mode = d["mode"]
        if mode not in MODES:
            raise ConfigError("config.mode", f"unknown mode {mode!r}; expected one of {MODES}")
        allowed = _COMMON | _KEYS[mode]
        for k in d:
            if k not in allowed:
                owners = [m for m in MODES if k in _KEYS[m]]
                hint = f" (only valid in {', '.join(owners)} mode)" if owners else ""
                raise ConfigError(f"config.{k}", f"not a {mode} parameter{hint}")
        grid = d.get("grid", {}) or {}
        if not isinstance(grid, Mapping):
            raise ConfigError("config.grid", "must be an object of parameter -> value list")
        for k, vals in grid.items():
            if k not in _KEYS[mode]:
                raise ConfigError(f"config.grid.{k}", f"unknown {mode} parameter")
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"config.grid.{k}", "must be a non-empty list")
        raw = {k: v for k, v in d.items() if k not in ("grid", "seed", "replications", "name")}
        seed = _num(d, "seed", int, 0) if "seed" in d else 1
        reps = (_num(d, "replications", int, 1) if "replications" in d
                else DEFAULT_REPLICATIONS[mode])
        cfg = cls(mode, raw, seed, reps, dict(grid))
        cfg.with_params({k: v[0] for k, v in grid.items()}).validate()
        for k, vals in grid.items():
            for i, v in enumerate(vals):
                try:
                    cfg.with_params({k: v}).validate()
                except ConfigError as e:
                    raise ConfigError(f"config.grid.{k}[{i}]", str(e).split(": ", 1)[-1]) from None
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON: {e}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_json(Path(path).read_text())

    def with_params(self, params: Mapping[str, Any]) -> "ScenarioConfig":
        raw = dict(self.raw)
        raw.update(params)
        return replace(self, raw=raw, grid={})

    def get(self, key: str, default=None):
        return self.raw.get(key, default)

    # -- validation --------------------------------------------------------
    def validate(self) -> None:
        """Build every derived object once so errors surface with a field path."""
        if self.mode in SIM_MODES:
            self.engine_params()
            self.mac_config()
        elif self.mode == "engset":
            self.engset_params()
        else:
            table = self.raw.get("table", "tsch-single-hop")
            if table not in TABLES:
                raise ConfigError("config.table", f"unknown table {table!r}; expected {TABLES}")

    @property
    def hops(self) -> int:
        return _num(self.raw, "hops", int, 1) if "hops" in self.raw else 1

    def pdr_tuple(self) -> tuple[float, ...]:
        h = self.hops
        p = self.raw.get("pdr", 1.0)
        vals = p if isinstance(p, list) else [p] * h
        if len(vals) != h:
            raise ConfigError("config.pdr", f"{len(vals)} values given for {h} hops")
        out = []
        for i, v in enumerate(vals):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not (0.0 <= v <= 1.0):
                raise ConfigError(f"config.pdr[{i}]" if isinstance(p, list) else "config.pdr",
                                  "must be a number in [0, 1]")
            out.append(float(v))
        return tuple(out)

    def engine_params(self) -> EngineParams:
        r = self.raw
        plan = dtls.default_flight_plan()
        if "flights" in r:
            try:
                plan = dtls.FlightPlan.from_pairs(r["flights"])
            except (ValueError, TypeError) as e:
                raise ConfigError("config.flights", str(e)) from None
        kw = {}
        if "initial_timeout_s" in r:
            kw["initial_timeout"] = _num(r, "initial_timeout_s", float, 0, lo_open=True)
        if "max_timeout_s" in r:
            kw["max_timeout"] = _num(r, "max_timeout_s", float, 0, lo_open=True)
        if "max_retransmissions" in r:
            kw["max_retransmissions"] = _num(r, "max_retransmissions", int, 0)
        if "doubling" in r:
            if not isinstance(r["doubling"], bool):
                raise ConfigError("config.doubling", "expected true or false")
            kw["doubling"] = r["doubling"]
        if "initial_timeout" in kw and "max_timeout" not in kw:
            kw["max_timeout"] = max(kw["initial_timeout"], dtls.RetransmitPolicy().max_timeout)
        try:
            policy = dtls.RetransmitPolicy(**kw)
        except ValueError as e:
            raise ConfigError("config.initial_timeout_s", str(e)) from None
        profile = RadioPowerProfile()
        if "power" in r:
            if not isinstance(r["power"], Mapping):
                raise ConfigError("config.power", "must be an object of state -> value")
            try:
                profile = _profile(r["power"])
            except ValueError as e:
                raise ConfigError("config.power", str(e)) from None
        pe = {}
        if "processing_latency" in r:
            if not isinstance(r["processing_latency"], bool):
                raise ConfigError("config.processing_latency", "expected true or false")
            pe["processing_latency"] = r["processing_latency"]
        if "crypto_ms" in r:
            pe["crypto_s"] = _num(r, "crypto_ms", float, 0) / 1e3
        if "frame_cpu_ms" in r:
            pe["frame_cpu_s"] = _num(r, "frame_cpu_ms", float, 0) / 1e3
        if "horizon_s" in r:
            pe["horizon_s"] = _num(r, "horizon_s", float, 0, lo_open=True)
        return EngineParams(hops=self.hops, pdr=self.pdr_tuple(), plan=plan, policy=policy,
                            profile=profile, **pe)

    def mac_config(self):
        r = self.raw
        ms = lambda k: _num(r, k, float, 0, lo_open=True) / 1e3
        kw = {}
        if "data_airtime_ms" in r:
            kw["data_frame_airtime"] = ms("data_airtime_ms")
        try:
            if self.mode == "preamble":
                for key, name in (("ci_ms", "check_interval_ci"), ("strobe_ms", "strobe_duration"),
                                  ("strobe_gap_ms", "strobe_gap"),
                                  ("ack_airtime_ms", "early_ack_airtime"),
                                  ("check_ms", "check_duration")):
                    if key in r:
                        kw[name] = ms(key)
                if "early_ack" in r:
                    if not isinstance(r["early_ack"], bool):
                        raise ConfigError("config.early_ack", "expected true or false")
                    kw["early_ack"] = r["early_ack"]
                return PreambleConfig(**kw)
            if self.mode == "beacon":
                if "ack_airtime_ms" in r:
                    kw["ack_airtime"] = ms("ack_airtime_ms")
                orders = "bo" in r or "so" in r
                direct = "bi_ms" in r or "cap_ms" in r
                if orders and direct:
                    raise ConfigError("config.bo", "give either bo/so or bi_ms/cap_ms, not both")
                if direct:
                    for k in ("bi_ms", "cap_ms"):
                        if k not in r:
                            raise ConfigError(f"config.{k}", "required with bi_ms/cap_ms")
                    return BeaconConfig(bi=ms("bi_ms"), cap=ms("cap_ms"), **kw)
                bo = _num(r, "bo", int, 0, 14) if "bo" in r else 6
                so = _num(r, "so", int, 0, 14) if "so" in r else 2
                if so > bo:
                    raise ConfigError("config.so", f"superframe order {so} exceeds beacon order {bo}")
                bi, cap = superframe_params(bo, so)
                return BeaconConfig(bi=bi, cap=cap, **kw)
            if "ack_airtime_ms" in r:
                kw["ack_airtime"] = ms("ack_airtime_ms")
            if "slot_ms" in r:
                kw["timeslot_duration"] = ms("slot_ms")
            l = _num(r, "l", int, 1) if "l" in r else 101
            c = r.get("c", 1)
            cs = c if isinstance(c, list) else [c]
            for i, v in enumerate(cs):
                if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                    raise ConfigError("config.c", "cells per link must be integers >= 1")
            tc = TschConfig(slotframe_length_l=l, cells=tuple(cs), **kw)
            cells = tc.cells_for(self.hops)
            if 2 * sum(cells) > l:
                raise ConfigError("config.c", f"{2 * sum(cells)} cells do not fit in L={l}")
            return tc
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"config.{self.mode}", str(e)) from None

    def engset_params(self) -> dict:
        r = self.raw
        for k in ("n", "r", "rho"):
            if k not in r:
                raise ConfigError(f"config.{k}", "missing required field")
        out = {"n": _num(r, "n", int, 1), "r": _num(r, "r", int, 0),
               "rho": _num(r, "rho", float, 0, lo_open=True),
               "mu": _num(r, "mu", float, 0, lo_open=True) if "mu" in r else 1.0,
               "horizon_s": _num(r, "horizon_s", float, 0, lo_open=True) if "horizon_s" in r
               else 20000.0}
        return out


def _profile(d: Mapping) -> RadioPowerProfile:
    """Power dict: ``voltage`` in volts, currents in mA."""
    d = dict(d)
    conv = {k: float(v) / 1e3 for k, v in d.items() if k != "voltage"}
    if "voltage" in d:
        conv["voltage"] = float(d["voltage"])
    return RadioPowerProfile.from_dict(conv)


def load_config(path: str | Path) -> ScenarioConfig:
    return ScenarioConfig.load(path)


def build_engine(cfg: ScenarioConfig, seed, record_trace: bool = False):
    """Instantiate the handshake engine for a simulation-mode config."""
    from .mac.beacon import BeaconEngine
    from .mac.tsch import TschEngine
    from .mac.xmac import XmacEngine

    cls = {"preamble": XmacEngine, "beacon": BeaconEngine, "tsch": TschEngine}.get(cfg.mode)
    if cls is None:
        raise ConfigError("config.mode", f"{cfg.mode} is not a simulation mode")
    return cls(cfg.engine_params(), cfg.mac_config(), seed, record_trace)

