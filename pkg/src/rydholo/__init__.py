"""Holonomic controlled-U gates with Rydberg anti-blockade: models, pulse
design, open-system dynamics, non-local protocols and conversion circuits."""

from .model import QUOTED_V, ChainConfig, ConfigurationError, SystemConfig, benchmark_config, solve_antiblockade_V
from .pulses import GateParams, ScheduleInfeasibleError, design_schedule, gate_preset, target_unitary

__all__ = [
    "QUOTED_V",
    "ChainConfig",
    "ConfigurationError",
    "GateParams",
    "ScheduleInfeasibleError",
    "SystemConfig",
    "design_schedule",
    "gate_preset",
    "benchmark_config",
    "solve_antiblockade_V",
    "target_unitary",
]

__version__ = "0.1.0"
