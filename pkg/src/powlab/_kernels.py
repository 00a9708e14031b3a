"""Numeric inner loops.

Everything here takes and returns plain floats, ints and numpy arrays so it
compiles under numba ``nopython`` mode. The public, validated API lives in
:mod:`powlab.sim`; nothing outside that module should call these directly.

DA codes: 0 btc2016, 1 cw144, 2 eda, 3 nefda.
Timestamp codes: 0 real-time, 1 last-block, 2 median-time-past.
"""

import math

import numpy as np

from ._backend import HAVE_NUMBA, kernel

DA_CODES = {"btc2016": 0, "cw144": 1, "eda": 2, "nefda": 3}
TS_CODES = {"real-time": 0, "last-block": 1, "mtp": 2}

STATUS_OK = 0
STATUS_RUNAWAY = 1
STATUS_OVERFLOW = 2

TAG_NONE = -1
TAG_BASE = 0
TAG_GREEDY = 1
TAG_VARIABLE = 2

_EXP_GUARD = 700.0


@kernel
def _logistic(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@kernel
def _fixed_difficulty(k, times, diffs, da, ts_source, T, S, window,
                      clamp_lo, clamp_hi, el_lo, el_hi,
                      eda_span, eda_factor, eda_blocks, mtp_k):
    # difficulty of block k, which stays constant while it is mined
    t0 = times[0]
    d0 = diffs[0]
    if da == 3:
        if ts_source == 1:
            ref_n = k - 1.0
            ref_t = times[k - 1]
        else:
            m = min(mtp_k, k)
            ref_t = np.median(times[k - m:k])
            ref_n = (k - 1.0) - (m - 1.0) / 2.0
        arg = (t0 + ref_n * T - ref_t) / S
        if abs(arg) > _EXP_GUARD:
            return 0.0, STATUS_OVERFLOW
        return d0 * math.exp(arg), STATUS_OK
    if da == 1:
        if k <= window:
            return d0, STATUS_OK
        work = 0.0
        for i in range(k - window, k):
            work += diffs[i]
        elapsed = times[k - 1] - times[k - 1 - window]
        elapsed = min(max(elapsed, el_lo), el_hi)
        return work / elapsed * T, STATUS_OK
    d = diffs[k - 1]
    if k % window == 0 and k >= window:
        ratio = window * T / (times[k - 1] - times[k - window])
        d *= max(min(ratio, clamp_hi), clamp_lo)
    if da == 2 and k >= eda_blocks:
        if times[k - 1] - times[k - eda_blocks] > eda_span:
            d *= eda_factor
    return d, STATUS_OK


@kernel
def simulate_chain(da, ts_source, T, S, window, clamp_lo, clamp_hi, el_lo, el_hi,
                   eda_span, eda_factor, eda_blocks, mtp_k,
                   h_base, h_greedy, h_var, threshold, steepness,
                   d0, d_ref, draws, tick, t0,
                   shock_start, shock_end, shock_factor, max_solve):
    """Mine ``draws.shape[0]`` blocks on top of a genesis at (t0, d0).

    ``draws[:, 0]`` are unit-exponential work budgets, one per block; the
    unused part of a budget carries across hash-rate changes, which is exact
    for a piecewise inhomogeneous Poisson process. ``draws[:, 1]`` are
    uniforms used to attribute each block to a miner class.

    Returns (times, difficulties, tags, hr_times, hr_values, status, height).
    """
    n = draws.shape[0] + 1
    times = np.empty(n)
    diffs = np.empty(n)
    tags = np.full(n, TAG_NONE, dtype=np.int8)
    times[0] = t0
    diffs[0] = d0

    cap = 1024
    hr_t = np.empty(cap)
    hr_h = np.empty(cap)
    n_hr = 0
    last_h = -1.0

    rtt = da == 3 and ts_source == 0
    has_shock = shock_end > shock_start
    prev_ms = math.floor(t0 * 1000.0 + 0.5)
    status = STATUS_OK
    k = 1
    while k < n:
        start = times[k - 1]
        t = start
        budget = draws[k - 1, 0]
        d = 0.0
        if not rtt:
            d, status = _fixed_difficulty(k, times, diffs, da, ts_source, T, S, window,
                                          clamp_lo, clamp_hi, el_lo, el_hi,
                                          eda_span, eda_factor, eda_blocks, mtp_k)
            if status != STATUS_OK:
                break
        j = math.floor((t - t0) / tick) + 1.0
        g = 0.0
        scale = 1.0
        h = 0.0
        while True:
            seg_end = math.inf
            if rtt:
                while t0 + j * tick <= t:
                    j += 1.0
                seg_end = t0 + j * tick
            if has_shock:
                if t < shock_start:
                    seg_end = min(seg_end, shock_start)
                elif t < shock_end:
                    seg_end = min(seg_end, shock_end)
            if rtt:
                arg = (t0 + k * T - t) / S
                if abs(arg) > _EXP_GUARD:
                    status = STATUS_OVERFLOW
                    break
                d = d0 * math.exp(arg)
            x = d_ref / d - 1.0
            g = h_greedy if x >= threshold else 0.0
            v = h_var * _logistic(steepness * x)
            scale = shock_factor if (has_shock and shock_start <= t < shock_end) else 1.0
            h = (h_base + g + v) * scale
            if h != last_h:
                if n_hr == cap:
                    cap *= 2
                    grown_t = np.empty(cap)
                    grown_h = np.empty(cap)
                    grown_t[:n_hr] = hr_t[:n_hr]
                    grown_h[:n_hr] = hr_h[:n_hr]
                    hr_t = grown_t
                    hr_h = grown_h
                hr_t[n_hr] = t
                hr_h[n_hr] = h
                n_hr += 1
                last_h = h
            rate = h / d
            if rtt:
                hazard = rate * S * math.expm1((seg_end - t) / S)
                if budget <= hazard:
                    t = t + S * math.log1p(budget / (rate * S))
                    break
                budget -= hazard
            else:
                need = budget / rate
                if t + need <= seg_end:
                    t = t + need
                    break
                budget -= (seg_end - t) * rate
            t = seg_end
            if t - start > max_solve:
                status = STATUS_RUNAWAY
                break
        if status != STATUS_OK:
            break
        if t - start > max_solve:
            status = STATUS_RUNAWAY
            break

        u = draws[k - 1, 1] * h
        if u < h_base * scale:
            tags[k] = TAG_BASE
        elif u < (h_base + g) * scale:
            tags[k] = TAG_GREEDY
        else:
            tags[k] = TAG_VARIABLE

        # honest timestamps at millisecond resolution, strictly increasing
        ms = math.floor(t * 1000.0 + 0.5)
        if ms <= prev_ms:
            ms = prev_ms + 1.0
        prev_ms = ms
        times[k] = ms / 1000.0
        if rtt:
            arg = (t0 + k * T - times[k]) / S
            if abs(arg) > _EXP_GUARD:
                status = STATUS_OVERFLOW
                break
            diffs[k] = d0 * math.exp(arg)
        else:
            diffs[k] = d
        k += 1
    return times, diffs, tags, hr_t[:n_hr].copy(), hr_h[:n_hr].copy(), status, k


@kernel
def _thinning_loop(uniforms, steps_done, mined, out, d0, t0, T, S, h, step):
    n_target = out.shape[0]
    i = 0
    while i < uniforms.shape[0] and mined < n_target:
        steps_done += 1
        t = t0 + steps_done * step
        p = h * step / (d0 * math.exp((t0 + (mined + 1) * T - t) / S))
        if uniforms[i] < p:
            out[mined] = t
            mined += 1
        i += 1
    return steps_done, mined


def _thinning_numpy(uniforms, steps_done, mined, out, d0, t0, T, S, h, step, span=16384):
    # same arithmetic as _thinning_loop, vectorised between successive hits
    n_target = out.shape[0]
    i = 0
    while i < uniforms.shape[0] and mined < n_target:
        w = min(span, uniforms.shape[0] - i)
        s = steps_done + 1 + np.arange(w)
        t = t0 + s * step
        p = h * step / (d0 * np.exp((t0 + (mined + 1) * T - t) / S))
        hits = np.flatnonzero(uniforms[i:i + w] < p)
        if hits.size == 0:
            steps_done += w
            i += w
            continue
        first = int(hits[0])
        steps_done += first + 1
        i += first + 1
        out[mined] = t[first]
        mined += 1
    return steps_done, mined


thinning_scan = _thinning_loop if HAVE_NUMBA else _thinning_numpy
