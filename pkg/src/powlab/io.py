"""File formats: header CSV, price CSV, generic series CSV, run config (JSON).

Header files::

    # powlab-format: 1          (optional)
    height,time,difficulty,miner_id
    0,0.000,1800,
    1,612.250,1800,greedy

Times are written with 3 decimals, difficulties and other reals with up to
12 significant digits, ``\\n`` line endings. Writers are deterministic.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .da import ChainHeader, DifficultyError, DifficultyParams
from .miners import MinerPopulation
from .sim import HashrateShock, SimConfig

FORMAT_VERSION = 1
FORMAT_LINE = f"# powlab-format: {FORMAT_VERSION}"
HEADER_COLUMNS = ("height", "time", "difficulty", "miner_id")
PRICE_COLUMNS = ("time", "price")


class FormatError(ValueError):
    """Malformed input file; the message carries path and line number."""


def fmt_time(t: float) -> str:
    return f"{t:.3f}"


def fmt_real(x: float) -> str:
    return f"{x:.12g}"


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_real(float(v))
    return str(v)


def _data_lines(path: Path, expected: tuple):
    """Yield (line_number, fields) for data rows after validating the column header."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header_seen = False
        for row in reader:
            lineno = reader.line_num
            if not header_seen:
                if row and row[0].startswith("#") and lineno == 1:
                    continue
                if tuple(c.strip() for c in row) != expected:
                    raise FormatError(f"{path}:{lineno}: expected header {','.join(expected)!r}")
                header_seen = True
                continue
            if not row:
                continue
            yield lineno, row
        if not header_seen:
            raise FormatError(f"{path}: missing header line {','.join(expected)!r}")


def read_headers(path) -> list:
    path = Path(path)
    headers = []
    seen = set()
    for lineno, row in _data_lines(path, HEADER_COLUMNS):
        if len(row) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        try:
            height = int(row[0])
            t = float(row[1])
            d = float(row[2])
            if not math.isfinite(t):
                raise ValueError("non-finite time")
            header = ChainHeader(height, t, d, row[3] or None)
        except (ValueError, DifficultyError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        if height in seen:
            raise FormatError(f"{path}:{lineno}: duplicate height {height}")
        seen.add(height)
        headers.append(header)
    return headers


def write_headers(headers, path) -> None:
    """Write a header CSV from a sequence of ChainHeader or a SimResult."""
    if hasattr(headers, "timestamps"):
        rows = zip(headers.heights.tolist(), headers.timestamps.tolist(),
                   headers.difficulties.tolist(), headers.miner_ids)
    else:
        rows = ((h.height, h.timestamp, h.difficulty, h.miner_id) for h in headers)
    lines = [",".join(HEADER_COLUMNS)]
    lines.extend(f"{h},{fmt_time(t)},{fmt_real(d)},{m or ''}" for h, t, d, m in rows)
    _write_text(path, "\n".join(lines) + "\n")


def write_series(path, columns, rows) -> None:
    """Write rows of values under a fixed column header."""
    lines = [",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} values, expected {len(columns)}")
        lines.append(",".join(_fmt_cell(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def read_prices(path) -> tuple:
    path = Path(path)
    times, prices = [], []
    for lineno, row in _data_lines(path, PRICE_COLUMNS):
        try:
            if len(row) != 2:
                raise ValueError(f"expected 2 fields, got {len(row)}")
            t, p = float(row[0]), float(row[1])
            if not p > 0:
                raise ValueError(f"price must be positive, got {row[1]!r}")
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        times.append(t)
        prices.append(p)
    return np.array(times), np.array(prices)


def write_prices(times, prices, path) -> None:
    lines = [",".join(PRICE_COLUMNS)]
    lines.extend(f"{fmt_time(t)},{fmt_real(p)}" for t, p in zip(times, prices))
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"{path}: {exc.strerror}") from exc


# -- run configuration -----------------------------------------------------

# key -> (default, type); order here is the canonical serialisation order
CONFIG_KEYS = {
    "da": ("nefda", str),
    "T": (600.0, float),
    "S": (43200.0, float),
    "N": (None, int),
    "retarget_clamp_min": (0.25, float),
    "retarget_clamp_max": (4.0, float),
    "elapsed_clamp_min": (43200.0, float),
    "elapsed_clamp_max": (172800.0, float),
    "eda_span_threshold": (43200.0, float),
    "eda_drop": (0.2, float),
    "timestamp_source": ("real-time", str),
    "mtp_window": (11, int),
    "H_B": (1.0, float),
    "H_G": (4.0, float),
    "H_V": (4.0, float),
    "greedy_threshold": (0.05, float),
    "logistic_steepness": (6 / 0.15, float),
    "D0": (None, float),
    "n_blocks": (100_000, int),
    "seed": (1, int),
    "strategy_tick": (60.0, float),
    "start_time": (0.0, float),
    "max_solve_time": (30 * 86400.0, float),
    "shock_start": (None, float),
    "shock_end": (None, float),
    "shock_factor": (None, float),
}


class ConfigError(ValueError):
    pass


def _coerce(key, value, kind):
    if value is None:
        return None
    if kind is int:
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"config key {key!r} must be a string, got {value!r}")
    return value


def config_from_dict(doc: dict) -> SimConfig:
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    v = {k: _coerce(k, doc.get(k, default), kind) for k, (default, kind) in CONFIG_KEYS.items()}
    shock_keys = (v["shock_start"], v["shock_end"], v["shock_factor"])
    if any(x is not None for x in shock_keys) and not all(x is not None for x in shock_keys):
        raise ConfigError("shock_start, shock_end and shock_factor must be given together")
    try:
        params = DifficultyParams(
            ideal_block_time=v["T"],
            smoothing=v["S"],
            window=v["N"],
            retarget_clamp=(v["retarget_clamp_min"], v["retarget_clamp_max"]),
            elapsed_clamp=(v["elapsed_clamp_min"], v["elapsed_clamp_max"]),
            eda_span_threshold=v["eda_span_threshold"],
            eda_drop=v["eda_drop"],
            timestamp_source=v["timestamp_source"],
            mtp_window=v["mtp_window"],
        )
        population = MinerPopulation(
            v["H_B"], v["H_G"], v["H_V"], v["greedy_threshold"], v["logistic_steepness"]
        )
        return SimConfig(
            da=v["da"],
            params=params,
            population=population,
            initial_difficulty=v["D0"],
            n_blocks=v["n_blocks"],
            seed=v["seed"],
            strategy_tick=v["strategy_tick"],
            start_time=v["start_time"],
            max_solve_time=v["max_solve_time"],
            shock=HashrateShock(*shock_keys) if shock_keys[0] is not None else None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(config: SimConfig) -> dict:
    p, m, s = config.params, config.population, config.shock
    return {
        "da": config.da,
        "T": p.ideal_block_time,
        "S": p.smoothing,
        "N": p.window,
        "retarget_clamp_min": p.retarget_clamp[0],
        "retarget_clamp_max": p.retarget_clamp[1],
        "elapsed_clamp_min": p.elapsed_clamp[0],
        "elapsed_clamp_max": p.elapsed_clamp[1],
        "eda_span_threshold": p.eda_span_threshold,
        "eda_drop": p.eda_drop,
        "timestamp_source": p.timestamp_source,
        "mtp_window": p.mtp_window,
        "H_B": m.base_hashrate,
        "H_G": m.greedy_hashrate,
        "H_V": m.variable_hashrate,
        "greedy_threshold": m.greedy_threshold,
        "logistic_steepness": m.logistic_steepness,
        "D0": config.initial_difficulty,
        "n_blocks": config.n_blocks,
        "seed": config.seed,
        "strategy_tick": config.strategy_tick,
        "start_time": config.start_time,
        "max_solve_time": config.max_solve_time,
        "shock_start": s.start if s else None,
        "shock_end": s.end if s else None,
        "shock_factor": s.factor if s else None,
    }


def dumps_config(config: SimConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2) + "\n"


def read_config(path) -> SimConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_config(config: SimConfig, path) -> None:
    _write_text(path, dumps_config(config))
