"""Difficulty algorithms.

Every function here is pure: it takes an immutable view of recent headers
(plus, for real-time targeting, the current clock) and returns the next
block's difficulty. Difficulties are expected hashes per block, kept as
64-bit floats throughout; there is no compact target encoding.

Algorithms:

* ``btc2016`` -- retarget every N=2016 blocks, ratio clamped to [1/4, 4].
* ``cw144``   -- chain work over the last 144 blocks divided by the elapsed
  time (clamped to half a day .. 2 days), times T.
* ``eda``     -- ``btc2016`` plus a 20% drop whenever the last six
  timestamps span more than 12 hours.
* ``nefda``   -- negative exponential filter, D_n = D_0 exp((t_0 + nT - t_n)/S),
  evaluated at real time, at the parent block, or at median-time-past.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DA_NAMES = ("btc2016", "cw144", "eda", "nefda")
_DA_ALIASES = {
    "btc": "btc2016",
    "cw-144": "cw144",
    "eda-composite": "eda",
}

TIMESTAMP_SOURCES = ("real-time", "last-block", "mtp")
_TS_ALIASES = {
    "rtt": "real-time",
    "realtime": "real-time",
    "median-time-past": "mtp",
}

EXP_GUARD = 700.0


class DifficultyError(ValueError):
    """Invalid input to a difficulty algorithm."""


class ExponentOverflowError(DifficultyError):
    """An exponential argument left the [-700, 700] guard band."""


def canonical_da(name: str) -> str:
    key = name.strip().lower()
    key = _DA_ALIASES.get(key, key)
    if key not in DA_NAMES:
        raise DifficultyError(f"unknown difficulty algorithm {name!r}; expected one of {DA_NAMES}")
    return key


def canonical_timestamp_source(name: str) -> str:
    key = name.strip().lower()
    key = _TS_ALIASES.get(key, key)
    if key not in TIMESTAMP_SOURCES:
        raise DifficultyError(
            f"unknown timestamp source {name!r}; expected one of {TIMESTAMP_SOURCES}"
        )
    return key


def guarded_exp(x: float) -> float:
    if not abs(x) <= EXP_GUARD:
        raise ExponentOverflowError(f"exponent {x!r} outside +/-{EXP_GUARD}")
    return math.exp(x)


@dataclass(frozen=True)
class ChainHeader:
    height: int
    timestamp: float
    difficulty: float
    miner_id: Optional[str] = None

    def __post_init__(self):
        if self.height < 0:
            raise DifficultyError(f"height must be non-negative, got {self.height}")
        if not self.difficulty > 0 or not math.isfinite(self.difficulty):
            raise DifficultyError(f"difficulty must be positive, got {self.difficulty!r}")


@dataclass(frozen=True)
class DifficultyParams:
    """Constants shared by all difficulty algorithms.

    ``window`` is None by default and resolved per algorithm: 144 for cw144,
    2016 for the Bitcoin retarget and the EDA composite.
    """

    ideal_block_time: float = 600.0
    smoothing: float = 43200.0
    window: Optional[int] = None
    retarget_clamp: tuple = (0.25, 4.0)
    elapsed_clamp: tuple = (43200.0, 172800.0)
    eda_span_threshold: float = 43200.0
    eda_drop: float = 0.20
    eda_blocks: int = 6
    timestamp_source: str = "real-time"
    mtp_window: int = 11

    def __post_init__(self):
        object.__setattr__(self, "retarget_clamp", tuple(float(v) for v in self.retarget_clamp))
        object.__setattr__(self, "elapsed_clamp", tuple(float(v) for v in self.elapsed_clamp))
        object.__setattr__(
            self, "timestamp_source", canonical_timestamp_source(self.timestamp_source)
        )
        if not self.ideal_block_time > 0:
            raise DifficultyError("ideal_block_time must be > 0")
        if not self.smoothing > 0:
            raise DifficultyError("smoothing must be > 0")
        if self.window is not None and self.window < 1:
            raise DifficultyError("window must be >= 1")
        lo, hi = self.retarget_clamp
        if not lo < 1.0 < hi:
            raise DifficultyError("retarget_clamp must satisfy min < 1 < max")
        lo, hi = self.elapsed_clamp
        if not 0 < lo < hi:
            raise DifficultyError("elapsed_clamp must satisfy 0 < min < max")
        if not 0.0 < self.eda_drop < 1.0:
            raise DifficultyError("eda_drop must lie in (0, 1)")
        if not self.eda_span_threshold > 0:
            raise DifficultyError("eda_span_threshold must be > 0")
        if self.eda_blocks < 2:
            raise DifficultyError("eda_blocks must be >= 2")
        if self.mtp_window < 1 or self.mtp_window % 2 == 0:
            raise DifficultyError("mtp_window must be a positive odd integer")

    def window_for(self, da: str) -> int:
        if self.window is not None:
            return int(self.window)
        return 144 if canonical_da(da) == "cw144" else 2016


@dataclass(frozen=True)
class RetargetWindow:
    chain_work: float
    elapsed: float
    raw_elapsed: float
    start_height: int
    end_height: int


@dataclass(frozen=True)
class NefdaState:
    """Anchor of the absolute NEFDA form.

    ``correction`` is e^{T/S}; the per-block growth factor that makes the
    geometric mean difficulty ratio equal 1 at steady state.
    """

    anchor_difficulty: float
    anchor_time: float
    anchor_height: int = 0
    correction: float = field(default=math.e)

    @classmethod
    def from_anchor(cls, header: ChainHeader, params: DifficultyParams) -> "NefdaState":
        return cls(
            anchor_difficulty=header.difficulty,
            anchor_time=header.timestamp,
            anchor_height=header.height,
            correction=math.exp(params.ideal_block_time / params.smoothing),
        )


# -- Bitcoin ---------------------------------------------------------------


def btc_retarget(prev_difficulty: float, params: DifficultyParams, actual_elapsed: float) -> float:
    """Difficulty after a 2016-block retarget: D * clamp(N*T / T_A, 1/4, 4)."""
    if not prev_difficulty > 0:
        raise DifficultyError(f"difficulty must be positive, got {prev_difficulty!r}")
    if not actual_elapsed > 0:
        raise DifficultyError(f"elapsed time must be positive, got {actual_elapsed!r}")
    lo, hi = params.retarget_clamp
    n = params.window_for("btc2016")
    ratio = n * params.ideal_block_time / actual_elapsed
    return prev_difficulty * max(min(ratio, hi), lo)


# -- cw-144 ----------------------------------------------------------------


def _check_contiguous(headers: Sequence[ChainHeader]):
    for prev, cur in zip(headers, headers[1:]):
        if cur.height != prev.height + 1:
            raise DifficultyError(
                f"window is not height-contiguous at {prev.height} -> {cur.height}"
            )


def cw144_window(window: Sequence[ChainHeader], params: DifficultyParams) -> RetargetWindow:
    """Chain work and clamped elapsed time over ``window`` (N+1 headers, N intervals)."""
    if len(window) < 2:
        raise DifficultyError("cw144 window needs at least 2 headers")
    _check_contiguous(window)
    first, last = window[0], window[-1]
    raw = last.timestamp - first.timestamp
    lo, hi = params.elapsed_clamp
    work = math.fsum(h.difficulty for h in window[1:])
    return RetargetWindow(
        chain_work=work,
        elapsed=min(max(raw, lo), hi),
        raw_elapsed=raw,
        start_height=first.height,
        end_height=last.height,
    )


def cw144_difficulty(window: Sequence[ChainHeader], params: DifficultyParams) -> float:
    w = cw144_window(window, params)
    return w.chain_work / w.elapsed * params.ideal_block_time


# -- EDA -------------------------------------------------------------------


def eda_adjust(recent: Sequence[ChainHeader], current_difficulty: float, params: DifficultyParams) -> float:
    """Drop the difficulty by ``eda_drop`` if the last six timestamps span > 12 h."""
    k = params.eda_blocks
    if len(recent) < k:
        raise DifficultyError(f"EDA needs at least {k} headers, got {len(recent)}")
    if not current_difficulty > 0:
        raise DifficultyError(f"difficulty must be positive, got {current_difficulty!r}")
    span = recent[-1].timestamp - recent[-k].timestamp
    if span > params.eda_span_threshold:
        return current_difficulty * (1.0 - params.eda_drop)
    return current_difficulty


# -- NEFDA -----------------------------------------------------------------


def nefda_step(prev_difficulty: float, solve_time: float, smoothing: float, correction: float) -> float:
    """One step of the filter recurrence D_n = D_{n-1} * c * e^{-st/S}.

    With c = e^{T/S} this is :func:`nefda_relative`; with c = 1 + T/S it is
    the uncorrected discrete-sum estimator.
    """
    return prev_difficulty * correction * guarded_exp(-solve_time / smoothing)


def nefda_relative(prev_difficulty: float, solve_time: float, params: DifficultyParams) -> float:
    if not prev_difficulty > 0:
        raise DifficultyError(f"difficulty must be positive, got {prev_difficulty!r}")
    return prev_difficulty * guarded_exp((params.ideal_block_time - solve_time) / params.smoothing)


def nefda_absolute(state: NefdaState, n: float, t_n: float, params: DifficultyParams) -> float:
    """D_0 * e^{(t_0 + nT - t_n)/S}; ``n`` counts blocks since the anchor."""
    x = (state.anchor_time + n * params.ideal_block_time - t_n) / params.smoothing
    return state.anchor_difficulty * guarded_exp(x)


def nefda_target_at(state: NefdaState, next_height: int, t: float, params: DifficultyParams) -> float:
    """Real-time target for block ``next_height`` (absolute height) at clock ``t``."""
    return nefda_absolute(state, next_height - state.anchor_height, t, params)


def nefda_mtp_timestamp(recent: Sequence[ChainHeader], k: int) -> float:
    """Median of the last ``k`` timestamps (all of them if fewer are available)."""
    if not recent:
        raise DifficultyError("median-time-past needs at least one header")
    tail = [h.timestamp for h in recent[-k:]]
    return float(np.median(tail))


def smoothing_from_window(n: int, ideal_block_time: float) -> float:
    """Smoothing that matches a simple moving average over ``n`` blocks: (n+1)/2 * T."""
    if n < 1:
        raise DifficultyError("window must be >= 1")
    return (n + 1) / 2 * ideal_block_time


def nefda_reference(recent: Sequence[ChainHeader], params: DifficultyParams) -> tuple:
    """(height, time) pair at which the non-real-time NEFDA variants evaluate.

    ``last-block`` uses the parent; ``mtp`` uses the median timestamp together
    with the height of the median block, so a steady chain is not biased by
    the (k-1)/2-block lag of the median.
    """
    source = params.timestamp_source
    if source == "last-block":
        last = recent[-1]
        return float(last.height), last.timestamp
    if source == "mtp":
        m = min(params.mtp_window, len(recent))
        return recent[-1].height - (m - 1) / 2, nefda_mtp_timestamp(recent, m)
    raise DifficultyError("real-time NEFDA has no fixed reference; use nefda_target_at")


# -- dispatch --------------------------------------------------------------


def next_difficulty(
    chain: Sequence[ChainHeader],
    da: str,
    params: DifficultyParams,
    now: Optional[float] = None,
) -> float:
    """Difficulty of the block that extends ``chain``.

    ``chain[0]`` is the genesis (anchor); ``now`` is required for real-time
    NEFDA and ignored otherwise.
    """
    da = canonical_da(da)
    if not chain:
        raise DifficultyError("empty chain")
    _check_contiguous(chain[-2:])
    genesis, last = chain[0], chain[-1]
    height = last.height + 1
    if da == "nefda":
        state = NefdaState.from_anchor(genesis, params)
        if params.timestamp_source == "real-time":
            if now is None:
                raise DifficultyError("real-time NEFDA needs the current time")
            return nefda_target_at(state, height, now, params)
        ref_height, ref_time = nefda_reference(chain, params)
        return nefda_absolute(state, ref_height - state.anchor_height, ref_time, params)
    n = params.window_for(da)
    offset = height - genesis.height
    if da == "cw144":
        if offset <= n:
            return genesis.difficulty
        return cw144_difficulty(chain[-(n + 1):], params)
    d = last.difficulty
    if offset % n == 0 and offset >= n:
        d = btc_retarget(d, params, last.timestamp - chain[-n].timestamp)
    if da == "eda" and len(chain) >= params.eda_blocks:
        d = eda_adjust(chain, d, params)
    return d


def difficulty_series(
    timestamps,
    difficulties,
    da: str,
    params: DifficultyParams,
) -> np.ndarray:
    """Replay ``da`` over a recorded chain.

    Returns, for every height, the difficulty the algorithm would have
    demanded given the recorded history before it. Index 0 is the anchor
    and is returned unchanged. Real-time NEFDA is evaluated at each block's
    own timestamp.
    """
    da = canonical_da(da)
    t = np.asarray(timestamps, dtype=float)
    d = np.asarray(difficulties, dtype=float)
    if t.shape != d.shape or t.ndim != 1 or t.size == 0:
        raise DifficultyError("timestamps and difficulties must be equal-length 1-d arrays")
    out = np.empty_like(d)
    out[0] = d[0]
    if t.size == 1:
        return out
    T = params.ideal_block_time
    S = params.smoothing
    idx = np.arange(t.size, dtype=float)

    if da == "nefda":
        source = params.timestamp_source
        if source == "real-time":
            x = (t[0] + idx[1:] * T - t[1:]) / S
        elif source == "last-block":
            x = (t[0] + idx[:-1] * T - t[:-1]) / S
        else:
            k = params.mtp_window
            ref_t = np.empty(t.size - 1)
            ref_n = np.empty(t.size - 1)
            for n in range(1, t.size):
                m = min(k, n)
                ref_t[n - 1] = np.median(t[n - m:n])
                ref_n[n - 1] = (n - 1) - (m - 1) / 2
            x = (t[0] + ref_n * T - ref_t) / S
        if np.any(np.abs(x) > EXP_GUARD):
            raise ExponentOverflowError("NEFDA exponent outside the guard band during replay")
        out[1:] = d[0] * np.exp(x)
        return out

    n = params.window_for(da)
    if da == "cw144":
        lo, hi = params.elapsed_clamp
        heights = np.arange(1, t.size)
        out[1:] = d[0]
        ready = heights > n
        if np.any(ready):
            h = heights[ready]
            work = np.lib.stride_tricks.sliding_window_view(d, n)[h - n].sum(axis=1)
            elapsed = np.clip(t[h - 1] - t[h - 1 - n], lo, hi)
            out[h] = work / elapsed * T
        return out

    k = params.eda_blocks
    for h in range(1, t.size):
        cur = d[h - 1]
        if h % n == 0 and h >= n:
            cur = btc_retarget(cur, params, t[h - 1] - t[h - n])
        if da == "eda" and h >= k and t[h - 1] - t[h - k] > params.eda_span_threshold:
            cur *= 1.0 - params.eda_drop
        out[h] = cur
    return out
