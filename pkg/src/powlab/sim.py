"""Event-driven mining simulator.

Blocks arrive as a Poisson process whose rate H/D changes whenever the hash
rate or the difficulty does. Hash rate is piecewise constant: hoppers look at
profitability at every block arrival and every ``strategy_tick`` seconds.
Under real-time NEFDA the difficulty also decays continuously while a block
is being mined, so arrivals are drawn by inverting the integrated intensity.

Randomness comes from one numpy ``PCG64`` stream per run; a run is a pure
function of its :class:`SimConfig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from ._backend import BACKEND
from .da import (
    EXP_GUARD,
    ChainHeader,
    DifficultyParams,
    ExponentOverflowError,
    canonical_da,
)
from .miners import MinerPopulation, equilibrium_difficulty

RNG_ALGORITHM = "numpy.PCG64"
TAG_NAMES = {
    _kernels.TAG_BASE: "base",
    _kernels.TAG_GREEDY: "greedy",
    _kernels.TAG_VARIABLE: "variable",
}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class HashrateShock:
    """Multiply total hash rate by ``factor`` during [start, end)."""

    start: float
    end: float
    factor: float

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("shock end must be after its start")
        if not self.factor > 0:
            raise ValueError("shock factor must be > 0")


@dataclass(frozen=True)
class SimConfig:
    da: str = "nefda"
    params: DifficultyParams = field(default_factory=DifficultyParams)
    population: MinerPopulation = field(default_factory=MinerPopulation)
    initial_difficulty: Optional[float] = None
    n_blocks: int = 100_000
    seed: int = 1
    strategy_tick: float = 60.0
    start_time: float = 0.0
    max_solve_time: float = 30 * 86400.0
    shock: Optional[HashrateShock] = None

    def __post_init__(self):
        object.__setattr__(self, "da", canonical_da(self.da))
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if not self.strategy_tick > 0:
            raise ValueError("strategy_tick must be > 0")
        if self.initial_difficulty is not None and not self.initial_difficulty > 0:
            raise ValueError("initial_difficulty must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.max_solve_time > 0:
            raise ValueError("max_solve_time must be > 0")

    @property
    def genesis_difficulty(self) -> float:
        if self.initial_difficulty is not None:
            return float(self.initial_difficulty)
        return equilibrium_difficulty(self.population, self.params.ideal_block_time)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SimResult:
    """Output of :func:`run_simulation`.

    Header columns are numpy arrays; ``headers`` materialises them as
    :class:`ChainHeader` values. Index 0 is the genesis block.
    """

    config: SimConfig
    timestamps: np.ndarray
    difficulties: np.ndarray
    miner_tags: np.ndarray
    hashrate_times: np.ndarray
    hashrate_values: np.ndarray
    rng_algorithm: str = RNG_ALGORITHM
    backend: str = BACKEND

    @property
    def heights(self) -> np.ndarray:
        return np.arange(self.timestamps.size)

    @property
    def difficulty_trace(self) -> np.ndarray:
        return self.difficulties

    @property
    def miner_ids(self) -> list:
        return [TAG_NAMES.get(int(c)) for c in self.miner_tags]

    @property
    def headers(self) -> list:
        return [
            ChainHeader(i, float(t), float(d), m)
            for i, (t, d, m) in enumerate(zip(self.timestamps, self.difficulties, self.miner_ids))
        ]

    def __len__(self):
        return self.timestamps.size


def open_uniforms(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform draws strictly inside (0, 1) with 53 random bits."""
    return (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) * 2.0**-53


def sample_solve_time_fixed(difficulty: float, hashrate: float, u: float) -> float:
    """Exponential solve time -(D/H) ln u for a fixed difficulty and hash rate."""
    if not difficulty > 0 or not hashrate > 0:
        raise ValueError("difficulty and hash rate must be positive")
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in the open interval (0, 1)")
    return -(difficulty / hashrate) * math.log(u)


def integrated_intensity(delta: float, prev_target: float, hashrate: float, smoothing: float) -> float:
    """Expected arrivals in [0, delta] when the target decays as D e^{-u/S}."""
    return hashrate * smoothing / prev_target * math.expm1(delta / smoothing)


def sample_arrival_rtt(prev_target: float, hashrate: float, smoothing: float, budget: float) -> float:
    """Time until an arrival under a decaying target, given a unit-exponential budget.

    Inverts Lambda(delta) = (H S / D)(e^{delta/S} - 1) = budget.
    """
    if not (prev_target > 0 and hashrate > 0 and smoothing > 0 and budget > 0):
        raise ValueError("all inputs must be positive")
    if math.isinf(smoothing):
        return budget * prev_target / hashrate
    delta = smoothing * math.log1p(budget * prev_target / (hashrate * smoothing))
    if delta / smoothing > EXP_GUARD:
        raise ExponentOverflowError(f"arrival exponent {delta / smoothing!r} exceeds guard")
    return delta


def run_simulation(config: SimConfig) -> SimResult:
    params = config.params
    pop = config.population
    d0 = config.genesis_difficulty
    rng = np.random.Generator(np.random.PCG64(config.seed))
    m = config.n_blocks - 1
    draws = np.empty((m, 2))
    draws[:, 0] = -np.log(open_uniforms(rng, m))
    draws[:, 1] = open_uniforms(rng, m)
    shock = config.shock
    lo, hi = params.retarget_clamp
    el_lo, el_hi = params.elapsed_clamp

    times, diffs, tags, hr_t, hr_h, status, height = _kernels.simulate_chain(
        _kernels.DA_CODES[config.da],
        _kernels.TS_CODES[params.timestamp_source],
        float(params.ideal_block_time),
        float(params.smoothing),
        int(params.window_for(config.da)),
        float(lo), float(hi), float(el_lo), float(el_hi),
        float(params.eda_span_threshold),
        float(1.0 - params.eda_drop),
        int(params.eda_blocks),
        int(params.mtp_window),
        float(pop.base_hashrate),
        float(pop.greedy_hashrate),
        float(pop.variable_hashrate),
        float(pop.greedy_threshold),
        float(pop.logistic_steepness),
        float(d0),
        float(d0),
        draws,
        float(config.strategy_tick),
        float(config.start_time),
        float(shock.start) if shock else 0.0,
        float(shock.end) if shock else 0.0,
        float(shock.factor) if shock else 1.0,
        float(config.max_solve_time),
    )
    if status == _kernels.STATUS_OVERFLOW:
        raise ExponentOverflowError(f"difficulty exponent left the guard band at height {height}")
    if status == _kernels.STATUS_RUNAWAY:
        raise SimulationError(
            f"solve time at height {height} exceeded {config.max_solve_time:g} s; "
            "difficulty has run away from the available hash rate"
        )
    return SimResult(config, times, diffs, tags, hr_t, hr_h)


def simulate_rtt_thinning(
    n_blocks: int,
    hashrate: float,
    initial_difficulty: float,
    params: DifficultyParams,
    seed: int = 0,
    step: float = 0.1,
    start_time: float = 0.0,
    chunk: int = 1 << 22,
) -> np.ndarray:
    """Real-time NEFDA chain under constant hash rate via small-step Bernoulli trials.

    Each ``step`` seconds a block is found with probability H*step/D(t). This
    is a deliberately naive sampler kept as an independent check on the
    inversion sampler used by :func:`run_simulation`. Returns the timestamps
    of the genesis plus ``n_blocks - 1`` mined blocks.
    """
    if not hashrate * step / initial_difficulty < 0.01:
        raise ValueError("step too coarse: per-step success probability must stay small")
    rng = np.random.Generator(np.random.PCG64(seed))
    out = np.empty(n_blocks - 1)
    steps_done, mined = 0, 0
    while mined < out.size:
        u = rng.random(chunk)
        steps_done, mined = _kernels.thinning_scan(
            u, steps_done, mined, out,
            float(initial_difficulty), float(start_time),
            float(params.ideal_block_time), float(params.smoothing),
            float(hashrate), float(step),
        )
    return np.concatenate(([start_time], out))
