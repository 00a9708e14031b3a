"""Proof-of-Work difficulty algorithm laboratory."""

from ._backend import BACKEND
from .da import ChainHeader, DifficultyParams, NefdaState, difficulty_series, next_difficulty
from .miners import MinerPopulation
from .sim import HashrateShock, SimConfig, SimResult, run_simulation

__all__ = [
    "BACKEND",
    "ChainHeader",
    "DifficultyParams",
    "HashrateShock",
    "MinerPopulation",
    "NefdaState",
    "SimConfig",
    "SimResult",
    "difficulty_series",
    "next_difficulty",
    "run_simulation",
]

__version__ = "0.1.0"
