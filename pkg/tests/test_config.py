import json

import pytest

from dtlsduty.config import DEFAULT_REPLICATIONS, ConfigError, ScenarioConfig, build_engine
from dtlsduty.mac.beacon import BeaconEngine
from dtlsduty.mac.tsch import TschEngine
from dtlsduty.mac.xmac import XmacEngine


def cfg(**kw):
    return ScenarioConfig.from_dict(kw)


@pytest.mark.parametrize("d,path", [
    ({}, "config.mode"),
    ({"mode": "csma"}, "config.mode"),
    ({"mode": "preamble", "bo": 3}, "config.bo"),
    ({"mode": "tsch", "ci_ms": 100}, "config.ci_ms"),
    ({"mode": "preamble", "replications": 0}, "config.replications"),
    ({"mode": "preamble", "ci_ms": -5}, "config.ci_ms"),
    ({"mode": "preamble", "ci_ms": "fast"}, "config.ci_ms"),
    ({"mode": "preamble", "hops": 2, "pdr": [1.0]}, "config.pdr"),
    ({"mode": "preamble", "hops": 2, "pdr": [1.0, 1.5]}, "config.pdr[1]"),
    ({"mode": "beacon", "bo": 2, "so": 4}, "config.so"),
    ({"mode": "beacon", "bo": 15}, "config.bo"),
    ({"mode": "beacon", "bo": 6, "bi_ms": 100}, "config.bo"),
    ({"mode": "tsch", "l": 3, "c": 2}, "config.c"),
    ({"mode": "tsch", "c": [1, 0]}, "config.c"),
    ({"mode": "engset", "n": 5, "r": 3}, "config.rho"),
    ({"mode": "engset", "n": 0, "r": 3, "rho": 1}, "config.n"),
    ({"mode": "preamble", "flights": [["c2s", 1]]}, "config.flights"),
    ({"mode": "preamble", "early_ack": "yes"}, "config.early_ack"),
    ({"mode": "preamble", "power": {"warp": 1}}, "config.power"),
    ({"mode": "preamble", "grid": {"bo": [1]}}, "config.grid.bo"),
    ({"mode": "preamble", "grid": {"ci_ms": []}}, "config.grid.ci_ms"),
    ({"mode": "preamble", "grid": {"ci_ms": [100, -1]}}, "config.grid.ci_ms[1]"),
    ({"mode": "analytic", "table": "table9"}, "config.table"),
])
def test_errors_name_the_field(d, path):
    with pytest.raises(ConfigError) as e:
        ScenarioConfig.from_dict(d)
    assert e.value.path == path
    assert str(e.value).startswith(path + ":")


def test_invalid_json():
    with pytest.raises(ConfigError) as e:
        ScenarioConfig.from_json("{mode: preamble")
    assert e.value.path == "config"


def test_defaults_follow_the_mode():
    assert cfg(mode="preamble").replications == DEFAULT_REPLICATIONS["preamble"] == 1000
    assert cfg(mode="beacon").replications == 500
    assert cfg(mode="tsch", replications=7, seed=3).replications == 7


def test_mode_parameters_reach_the_engine():
    c = cfg(mode="preamble", ci_ms=250, pdr=0.9, hops=2, initial_timeout_s=1,
            crypto_ms=5, early_ack=False)
    p = c.engine_params()
    assert p.hops == 2 and p.pdr == (0.9, 0.9) and p.policy.initial_timeout == 1.0
    assert p.crypto_s == pytest.approx(0.005)
    mac = c.mac_config()
    assert mac.check_interval_ci == pytest.approx(0.25) and not mac.early_ack
    assert isinstance(build_engine(c, 0), XmacEngine)
    b = cfg(mode="beacon", bo=5, so=3)
    assert b.mac_config().cap == pytest.approx(0.12288)
    assert isinstance(build_engine(b, 0), BeaconEngine)
    t = cfg(mode="tsch", l=101, c=[1, 2], hops=2)
    assert t.mac_config().cells_for(2) == [1, 2]
    assert isinstance(build_engine(t, 0), TschEngine)


def test_power_profile_in_milliamps():
    p = cfg(mode="preamble", power={"voltage": 3.0, "transmit": 30}).engine_params().profile
    assert p.voltage == 3.0 and p.currents["transmit"] == pytest.approx(0.03)


def test_grid_only_parameter_is_accepted():
    c = ScenarioConfig.from_dict({"mode": "engset", "n": 5, "r": 3, "grid": {"rho": [0.5, 1]}})
    assert c.grid == {"rho": [0.5, 1]}


def test_shipped_configs_load(tmp_path):
    import pathlib
    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.json"))
    assert len(files) >= 8
    for f in files:
        ScenarioConfig.load(f)
