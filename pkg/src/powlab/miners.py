"""Hash-rate supply under coin hopping.

Three miner classes share the chain: a loyal base that always mines, greedy
hoppers that join with everything once profitability is at least 5% above
its starting value, and variable hoppers that follow a logistic curve in the
profitability change x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DEFAULT_THRESHOLD = 0.05
DEFAULT_STEEPNESS = 6 / 0.15


@dataclass(frozen=True)
class MinerPopulation:
    base_hashrate: float = 1.0
    greedy_hashrate: float = 4.0
    variable_hashrate: float = 4.0
    greedy_threshold: float = DEFAULT_THRESHOLD
    logistic_steepness: float = DEFAULT_STEEPNESS

    def __post_init__(self):
        if not self.base_hashrate > 0:
            raise ValueError("base_hashrate must be > 0")
        if self.greedy_hashrate < 0 or self.variable_hashrate < 0:
            raise ValueError("hopper hash rates must be >= 0")
        if not self.logistic_steepness > 0:
            raise ValueError("logistic_steepness must be > 0")

    @classmethod
    def scaled(cls, base: float = 1.0, greedy_mult: float = 4.0, variable_mult: float = 4.0, **kw):
        """Population with hopper hash rates given as multiples of the base."""
        return cls(base, greedy_mult * base, variable_mult * base, **kw)

    @property
    def max_hashrate(self) -> float:
        return self.base_hashrate + self.greedy_hashrate + self.variable_hashrate


def profitability_change(current_difficulty: float, initial_difficulty: float) -> float:
    """x = D_0 / D - 1: reward per unit of work relative to the start.

    Block reward and coin price are held constant, so profitability is
    inversely proportional to difficulty.
    """
    if not current_difficulty > 0 or not initial_difficulty > 0:
        raise ValueError("difficulties must be positive")
    return initial_difficulty / current_difficulty - 1.0


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def greedy_allocation(x: float, pop: MinerPopulation) -> float:
    return pop.greedy_hashrate if x >= pop.greedy_threshold else 0.0


def logistic_allocation(x: float, pop: MinerPopulation) -> float:
    """H_V / (1 + e^{-k x}), computed without overflow for any x."""
    z = pop.logistic_steepness * x
    if math.isinf(z):
        return pop.variable_hashrate if z > 0 else 0.0
    return pop.variable_hashrate * _logistic(z)


def total_hashrate(x: float, pop: MinerPopulation) -> float:
    return pop.base_hashrate + greedy_allocation(x, pop) + logistic_allocation(x, pop)


def equilibrium_difficulty(pop: MinerPopulation, ideal_block_time: float) -> float:
    """Difficulty at which the scenario starts with x = 0 in balance."""
    return total_hashrate(0.0, pop) * ideal_block_time
