"""Throughput and profitability statistics for simulated or recorded chains.

Functions that take ``headers`` accept either a sequence of
:class:`~powlab.da.ChainHeader` or any object exposing ``timestamps`` and
``difficulties`` arrays (such as :class:`~powlab.sim.SimResult`). Where only
times matter, a bare array of timestamps is accepted too.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DESERT_MAX = 1
SPIKE_MIN = 12


class AnalysisError(ValueError):
    pass


def _timestamps(headers) -> np.ndarray:
    if isinstance(headers, np.ndarray):
        return headers.astype(float, copy=False)
    if hasattr(headers, "timestamps"):
        return np.asarray(headers.timestamps, dtype=float)
    return np.fromiter((h.timestamp for h in headers), dtype=float)


def _difficulties(headers) -> np.ndarray:
    if hasattr(headers, "difficulties"):
        return np.asarray(headers.difficulties, dtype=float)
    return np.fromiter((h.difficulty for h in headers), dtype=float)


def _miner_ids(headers) -> list:
    if hasattr(headers, "miner_ids"):
        return list(headers.miner_ids)
    return [h.miner_id for h in headers]


# -- throughput ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ThroughputSeries:
    bucket_seconds: float
    counts: np.ndarray
    origin_time: float

    def __len__(self):
        return self.counts.size

    @property
    def bucket_starts(self) -> np.ndarray:
        return self.origin_time + self.bucket_seconds * np.arange(self.counts.size)


def bucket_index(timestamps, origin_time: float, bucket_seconds: float) -> np.ndarray:
    return np.floor((np.asarray(timestamps, dtype=float) - origin_time) / bucket_seconds).astype(np.int64)


def bucket_blocks(headers, bucket_seconds: float = 3600) -> ThroughputSeries:
    """Blocks per bucket, buckets aligned to the first header's timestamp.

    Headers stamped before the origin (possible in recorded chains) are
    counted in the first bucket.
    """
    t = _timestamps(headers)
    if t.size == 0:
        raise AnalysisError("no headers to bucket")
    if not bucket_seconds > 0:
        raise AnalysisError("bucket_seconds must be > 0")
    origin = float(t[0])
    idx = np.maximum(bucket_index(t, origin, bucket_seconds), 0)
    return ThroughputSeries(bucket_seconds, np.bincount(idx), origin)


class PeriodClass(enum.Enum):
    DESERT = "desert"
    NORMAL = "normal"
    SPIKE = "spike"


@dataclass(frozen=True, eq=False)
class PeriodSummary:
    classes: list
    desert: float
    normal: float
    spike: float

    @property
    def codes(self) -> np.ndarray:
        lookup = {PeriodClass.DESERT: 0, PeriodClass.NORMAL: 1, PeriodClass.SPIKE: 2}
        return np.array([lookup[c] for c in self.classes], dtype=np.int8)


def classify_periods(series: ThroughputSeries, desert_max: int = DESERT_MAX, spike_min: int = SPIKE_MIN) -> PeriodSummary:
    counts = np.asarray(series.counts)
    if counts.size == 0:
        raise AnalysisError("empty throughput series")
    desert = counts <= desert_max
    spike = counts >= spike_min
    classes = [
        PeriodClass.DESERT if d else PeriodClass.SPIKE if s else PeriodClass.NORMAL
        for d, s in zip(desert, spike)
    ]
    n = counts.size
    n_desert = int(desert.sum())
    n_spike = int(spike.sum())
    return PeriodSummary(classes, n_desert / n, (n - n_desert - n_spike) / n, n_spike / n)


# -- Poisson reference -----------------------------------------------------


def poisson_pmf(k: int, lam: float) -> float:
    """e^-lam lam^k / k!, built up by the ratio recurrence in log space."""
    if k < 0:
        return 0.0
    if not lam > 0:
        raise AnalysisError("lambda must be > 0")
    log_p = -lam
    log_lam = math.log(lam)
    for i in range(1, k + 1):
        log_p += log_lam - math.log(i)
    return math.exp(log_p)


def poisson_cdf(k: int, lam: float) -> float:
    if k < 0:
        return 0.0
    if not lam > 0:
        raise AnalysisError("lambda must be > 0")
    p = math.exp(-lam)
    total = p
    for i in range(1, k + 1):
        p *= lam / i
        total += p
    return min(total, 1.0)


@dataclass(frozen=True)
class PoissonModel:
    """Blocks per bucket for a chain that hits its ideal block time exactly."""

    lam: float

    @classmethod
    def for_bucket(cls, bucket_seconds: float = 3600, ideal_block_time: float = 600) -> "PoissonModel":
        return cls(bucket_seconds / ideal_block_time)

    def pmf(self, k: int) -> float:
        return poisson_pmf(k, self.lam)

    def cdf(self, k: int) -> float:
        return poisson_cdf(k, self.lam)

    def class_probabilities(self, desert_max: int = DESERT_MAX, spike_min: int = SPIKE_MIN) -> dict:
        desert = self.cdf(desert_max)
        spike = 1.0 - self.cdf(spike_min - 1)
        return {"desert": desert, "normal": 1.0 - desert - spike, "spike": spike}


# -- autocorrelation -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AcfSeries:
    coefficients: np.ndarray
    confidence_band: float

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.coefficients.size)

    def above_band(self, first: int = 1, last=None) -> np.ndarray:
        """Lags in [first, last] whose coefficient exceeds +band."""
        last = self.coefficients.size - 1 if last is None else last
        lags = np.arange(first, last + 1)
        return lags[self.coefficients[lags] > self.confidence_band]


def acf(series, max_lag: int) -> AcfSeries:
    """Biased sample autocorrelation with global mean removed.

    r(h) = sum (c_t - m)(c_{t+h} - m) / sum (c_t - m)^2, band +/-1.96/sqrt(n).
    """
    c = np.asarray(series.counts if isinstance(series, ThroughputSeries) else series, dtype=float)
    n = c.size
    if not 1 <= max_lag < n:
        raise AnalysisError(f"need 1 <= max_lag < series length ({n}), got {max_lag}")
    dev = c - c.mean()
    denom = float(np.dot(dev, dev))
    if denom == 0.0:
        raise AnalysisError("zero-variance series has no autocorrelation")
    coef = np.empty(max_lag + 1)
    coef[0] = 1.0
    for h in range(1, max_lag + 1):
        coef[h] = np.dot(dev[:-h], dev[h:]) / denom
    return AcfSeries(coef, 1.96 / math.sqrt(n))


# -- solve times and hash rate ---------------------------------------------


@dataclass(frozen=True)
class SolveTimeStats:
    mean: float
    median: float
    p05: float
    p95: float
    count: int
    excluded: int = 0


def solve_time_stats(headers) -> SolveTimeStats:
    """Statistics of consecutive timestamp differences; negative ones are dropped and counted."""
    t = _timestamps(headers)
    if t.size < 2:
        raise AnalysisError("need at least 2 headers")
    st = np.diff(t)
    keep = st >= 0
    st = st[keep]
    if st.size == 0:
        raise AnalysisError("no non-negative solve times")
    p05, med, p95 = np.percentile(st, [5, 50, 95])
    return SolveTimeStats(float(st.mean()), float(med), float(p05), float(p95), int(st.size), int((~keep).sum()))


def estimate_hashrate_ma(headers, window: int = 6) -> tuple:
    """Moving-average hash rate: work of the last ``window`` blocks over their span.

    Returns ``(times, estimates)``. Points whose span is not positive are
    skipped with a warning.
    """
    t = _timestamps(headers)
    d = _difficulties(headers)
    if t.size <= window:
        raise AnalysisError(f"need more than {window} headers")
    work = np.lib.stride_tricks.sliding_window_view(d[1:], window).sum(axis=1)
    span = t[window:] - t[:-window]
    ok = span > 0
    if not ok.all():
        warnings.warn(f"skipped {int((~ok).sum())} hash-rate points with non-positive elapsed time")
    return t[window:][ok], work[ok] / span[ok]


def exp_weighted_difficulties(headers, smoothing: float, t_now: float) -> tuple:
    """Weights D_i e^{(t_i - t_now)/S} and the hash-rate estimate sum(w)/S."""
    t = _timestamps(headers)
    d = _difficulties(headers)
    if np.any(t > t_now):
        raise AnalysisError("t_now precedes some timestamps")
    w = d * np.exp((t - t_now) / smoothing)
    return w, float(w.sum() / smoothing)


def geometric_mean_ratio(difficulties) -> float:
    """(D_n / D_m)^{1/(n-m)} over the given run, computed in log space."""
    d = np.asarray(difficulties, dtype=float)
    if d.size < 2:
        raise AnalysisError("need at least two difficulties")
    if np.any(d <= 0):
        raise AnalysisError("difficulties must be positive")
    return math.exp((math.log(d[-1]) - math.log(d[0])) / (d.size - 1))


def log_ratio_standard_error(difficulties) -> float:
    """Standard error of the mean of log(D_i / D_{i-1})."""
    r = np.diff(np.log(np.asarray(difficulties, dtype=float)))
    return float(r.std(ddof=1) / math.sqrt(r.size))


# -- profitability ---------------------------------------------------------


@dataclass(frozen=True)
class DariPoint:
    time: float
    reward: float
    price: float
    difficulty: float

    @property
    def dari(self) -> float:
        return self.reward * self.price / self.difficulty


def dari_series(rewards, prices, difficulties, timestamps) -> list:
    """Difficulty-adjusted reward index: reward * price / difficulty at each time."""
    arrays = [np.broadcast_to(np.asarray(a, dtype=float), np.shape(timestamps)) for a in (rewards, prices, difficulties)]
    t = np.asarray(timestamps, dtype=float)
    if t.size == 0:
        raise AnalysisError("empty DARI input")
    return [DariPoint(float(ti), float(r), float(p), float(d)) for ti, r, p, d in zip(t, *arrays)]


def locf(times, values, at) -> np.ndarray:
    """Last observation carried forward: value of the latest sample at or before each ``at``."""
    times = np.asarray(times, dtype=float)
    idx = np.searchsorted(times, np.asarray(at, dtype=float), side="right") - 1
    if np.any(idx < 0):
        raise AnalysisError("query precedes the first observation")
    return np.asarray(values, dtype=float)[idx]


def dari_ratio(a: Sequence[DariPoint], b: Sequence[DariPoint], bucket: float = 60.0) -> tuple:
    """DARI(a) / DARI(b) on a common grid of ``bucket``-second points.

    Both series are sampled by last observation carried forward over the
    span where they overlap. Returns ``(grid_times, ratios)``.
    """
    ta = np.array([p.time for p in a])
    tb = np.array([p.time for p in b])
    if ta.size == 0 or tb.size == 0:
        raise AnalysisError("empty DARI series")
    oa, ob = np.argsort(ta, kind="stable"), np.argsort(tb, kind="stable")
    va = np.array([p.dari for p in a])[oa]
    vb = np.array([p.dari for p in b])[ob]
    ta, tb = ta[oa], tb[ob]
    start, end = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    if start > end:
        raise AnalysisError("DARI series do not overlap in time")
    grid = start + bucket * np.arange(int(math.floor((end - start) / bucket)) + 1)
    return grid, locf(ta, va, grid) / locf(tb, vb, grid)


# -- miners ----------------------------------------------------------------


def miner_shares(headers, series: ThroughputSeries, summary: PeriodSummary) -> dict:
    """Share of all blocks mined by each miner, split by the class of the block's bucket.

    Returns ``{miner: {"normal": %, "spike": %, "desert": %, "total": %}}``
    sorted by total share, largest first.
    """
    ids = _miner_ids(headers)
    if not any(m for m in ids):
        raise AnalysisError("miner_id is not populated in the input")
    t = _timestamps(headers)
    idx = np.maximum(bucket_index(t, series.origin_time, series.bucket_seconds), 0)
    if idx.size and idx.max() >= len(summary.classes):
        raise AnalysisError("header falls outside the classified buckets")
    codes = summary.codes[idx]
    names = ("desert", "normal", "spike")
    n = len(ids)
    table = {}
    for m, c in zip(ids, codes):
        row = table.setdefault(m or "unknown", {"normal": 0, "spike": 0, "desert": 0})
        row[names[c]] += 1
    out = {}
    for m, row in table.items():
        pct = {k: 100.0 * v / n for k, v in row.items()}
        pct["total"] = 100.0 * sum(row.values()) / n
        out[m] = pct
    return dict(sorted(out.items(), key=lambda kv: (-kv[1]["total"], kv[0])))
