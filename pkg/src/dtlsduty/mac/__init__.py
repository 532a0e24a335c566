"""Link layers that carry the handshake: preamble sampling, beacon-enabled 802.15.4, TSCH."""

from .base import EngineParams, Frame, HandshakeEngine, RunResult
from .beacon import BeaconConfig, BeaconEngine, ClusterTree, superframe_params
from .tsch import TschConfig, TschEngine, TschSchedule, build_uniform_schedule
from .xmac import PreambleConfig, XmacEngine, expected_unicast_latency, simulate_unicast

__all__ = [
    "EngineParams", "Frame", "HandshakeEngine", "RunResult",
    "BeaconConfig", "BeaconEngine", "ClusterTree", "superframe_params",
    "TschConfig", "TschEngine", "TschSchedule", "build_uniform_schedule",
    "PreambleConfig", "XmacEngine", "expected_unicast_latency", "simulate_unicast",
]
