"""powlab command line: simulate, analyze, trace, compare.

Machine output always goes to files; stdout gets a short human summary.
Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, io
from .da import DA_NAMES, TIMESTAMP_SOURCES, DifficultyParams, difficulty_series
from .sim import SimConfig, SimResult, run_simulation

REPORTS = ("throughput", "acf", "classes", "hashrate", "dari", "miners", "solvetimes")
DA_CHOICES = DA_NAMES + ("eda-composite",)

# flag dest -> config key; flags override the config file, which overrides defaults
_PARAM_FLAGS = {
    "ideal_time": "T",
    "smoothing": "S",
    "window": "N",
    "timestamp_source": "timestamp_source",
    "mtp_window": "mtp_window",
}
_SCENARIO_FLAGS = {
    "blocks": "n_blocks",
    "seed": "seed",
    "base_hashrate": "H_B",
    "greedy_threshold": "greedy_threshold",
    "steepness": "logistic_steepness",
    "initial_difficulty": "D0",
    "strategy_tick": "strategy_tick",
}


class UsageError(Exception):
    pass


def _default(key):
    value = io.CONFIG_KEYS[key][0]
    if value is None:
        return {"N": "per DA (144 for cw144, else 2016)", "D0": "equilibrium (H_B + H_V/2) * T"}.get(key, "none")
    return f"{value:g}" if isinstance(value, float) else str(value)


def _add_param_flags(p):
    p.add_argument("--ideal-time", type=float, metavar="SECS", help=f"ideal block time T (default: {_default('T')})")
    p.add_argument("--smoothing", type=float, metavar="SECS", help=f"NEFDA smoothing S (default: {_default('S')})")
    p.add_argument("--window", type=int, metavar="N", help=f"window N (default: {_default('N')})")
    p.add_argument("--timestamp-source", choices=TIMESTAMP_SOURCES,
                   help=f"NEFDA evaluation time (default: {_default('timestamp_source')})")
    p.add_argument("--mtp-window", type=int, metavar="K", help=f"median-time-past window (default: {_default('mtp_window')})")


def _add_scenario_flags(p):
    p.add_argument("--config", type=Path, metavar="PATH", help="JSON run config; flags override its values")
    p.add_argument("--blocks", type=int, metavar="N", help=f"blocks including genesis (default: {_default('n_blocks')})")
    p.add_argument("--seed", type=int, metavar="U64", help=f"PRNG seed (default: {_default('seed')})")
    _add_param_flags(p)
    p.add_argument("--base-hashrate", type=float, metavar="F", help=f"loyal hash rate H_B (default: {_default('H_B')})")
    p.add_argument("--greedy-mult", type=float, metavar="F", help="greedy hash rate as a multiple of H_B (default: 4)")
    p.add_argument("--variable-mult", type=float, metavar="F", help="variable hash rate as a multiple of H_B (default: 4)")
    p.add_argument("--greedy-threshold", type=float, metavar="F",
                   help=f"profitability change that triggers greedy miners (default: {_default('greedy_threshold')})")
    p.add_argument("--steepness", type=float, metavar="F",
                   help=f"logistic steepness for variable miners (default: {_default('logistic_steepness')})")
    p.add_argument("--initial-difficulty", type=float, metavar="D", help=f"genesis difficulty D0 (default: {_default('D0')})")
    p.add_argument("--strategy-tick", type=float, metavar="SECS",
                   help=f"hopper re-evaluation period (default: {_default('strategy_tick')})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="powlab", description="Proof-of-Work difficulty algorithm laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a coin-hopping mining simulation")
    p.add_argument("--da", choices=DA_CHOICES, help=f"difficulty algorithm (default: {_default('da')})")
    _add_scenario_flags(p)
    p.add_argument("--out", type=Path, required=True, metavar="PATH", help="header CSV to write; metadata goes to PATH.meta.json")

    p = sub.add_parser("analyze", help="compute a report over a header CSV")
    p.add_argument("--input", type=Path, required=True, metavar="PATH", help="header CSV")
    p.add_argument("--report", choices=REPORTS, required=True, help="report to produce")
    p.add_argument("--out", type=Path, required=True, metavar="PATH", help="report CSV to write")
    p.add_argument("--bucket", type=float, default=3600.0, metavar="SECS", help="bucket width (default: 3600)")
    p.add_argument("--max-lag", type=int, default=50, metavar="N", help="largest ACF lag (default: 50)")
    p.add_argument("--ideal-time", type=float, default=600.0, metavar="SECS",
                   help="ideal block time for Poisson expectations (default: 600)")
    p.add_argument("--ma-window", type=int, default=6, metavar="N", help="hash-rate moving average window (default: 6)")
    p.add_argument("--prices", type=Path, metavar="PATH", help="price CSV (time,price); required for dari")
    p.add_argument("--reward", type=float, default=1.0, metavar="COINS", help="block reward for dari (default: 1)")
    p.add_argument("--input-b", type=Path, metavar="PATH", help="second chain for a dari ratio")
    p.add_argument("--prices-b", type=Path, metavar="PATH", help="price CSV of the second chain")
    p.add_argument("--reward-b", type=float, default=1.0, metavar="COINS", help="block reward of the second chain (default: 1)")

    p = sub.add_parser("trace", help="replay a difficulty algorithm over recorded headers")
    p.add_argument("--input", type=Path, required=True, metavar="PATH", help="header CSV")
    p.add_argument("--da", choices=DA_CHOICES, required=True, help="difficulty algorithm to replay")
    p.add_argument("--config", type=Path, metavar="PATH", help="JSON run config supplying DA parameters")
    _add_param_flags(p)
    p.add_argument("--out", type=Path, required=True, metavar="PATH", help="trace CSV to write")

    p = sub.add_parser("compare", help="run two DAs on the same scenario and seed")
    p.add_argument("--da-a", choices=DA_CHOICES, required=True, help="first difficulty algorithm")
    p.add_argument("--da-b", choices=DA_CHOICES, required=True, help="second difficulty algorithm")
    _add_scenario_flags(p)
    p.add_argument("--max-lag", type=int, default=50, metavar="N", help="largest ACF lag in the summary (default: 50)")
    p.add_argument("--out", type=Path, required=True, metavar="PREFIX",
                   help="writes PREFIX_a.csv, PREFIX_b.csv and PREFIX_summary.csv")
    return parser


# -- config resolution -----------------------------------------------------


def _base_doc(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    doc = io.config_to_dict(io.read_config(args.config))
    return doc


def resolve_config(args, da=None) -> SimConfig:
    doc = _base_doc(args)
    if da is not None:
        doc["da"] = da
    for flag, key in {**_PARAM_FLAGS, **_SCENARIO_FLAGS}.items():
        value = getattr(args, flag, None)
        if value is not None:
            doc[key] = value
    if getattr(args, "blocks", None) is not None and args.blocks < 1:
        raise UsageError("--blocks must be >= 1")
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    base = doc.get("H_B", io.CONFIG_KEYS["H_B"][0])
    if getattr(args, "greedy_mult", None) is not None:
        doc["H_G"] = args.greedy_mult * base
    if getattr(args, "variable_mult", None) is not None:
        doc["H_V"] = args.variable_mult * base
    return io.config_from_dict(doc)


def resolve_params(args) -> DifficultyParams:
    doc = _base_doc(args)
    for flag, key in _PARAM_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            doc[key] = value
    return io.config_from_dict(doc).params


# -- summaries -------------------------------------------------------------


def summarize(result, max_lag: int = 50, bucket: float = 3600.0) -> dict:
    stats = analysis.solve_time_stats(result)
    series = analysis.bucket_blocks(result, bucket)
    classes = analysis.classify_periods(series)
    summary = {
        "blocks": len(result.timestamps),
        "mean_solve_time": stats.mean,
        "median_solve_time": stats.median,
        "desert_pct": 100 * classes.desert,
        "normal_pct": 100 * classes.normal,
        "spike_pct": 100 * classes.spike,
    }
    if len(series) > max_lag:
        a = analysis.acf(series, max_lag)
        summary.update(
            acf_lag1=a.coefficients[1],
            acf_lag24=a.coefficients[24] if max_lag >= 24 else None,
            acf_lag48=a.coefficients[48] if max_lag >= 48 else None,
            max_abs_acf_beyond_lag1=float(np.abs(a.coefficients[2:]).max()) if max_lag >= 2 else None,
            band=a.confidence_band,
        )
    return summary


def write_metadata(result: SimResult, summary: dict, path: Path) -> None:
    doc = {
        "format": io.FORMAT_VERSION,
        "config": io.config_to_dict(result.config),
        "seed": result.config.seed,
        "rng": result.rng_algorithm,
        "backend": result.backend,
        "summary": {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in summary.items()},
    }
    io._write_text(path, json.dumps(doc, indent=2) + "\n")


# -- commands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = resolve_config(args, da=args.da)
    result = run_simulation(config)
    io.write_headers(result, args.out)
    summary = summarize(result)
    write_metadata(result, summary, Path(str(args.out) + ".meta.json"))
    print(f"{config.da}: {summary['blocks']} blocks, mean solve time {summary['mean_solve_time']:.2f} s, "
          f"deserts {summary['desert_pct']:.2f}%, spikes {summary['spike_pct']:.2f}%")
    return 0


def _prices_for(headers, prices_path, reward):
    times, prices = io.read_prices(prices_path)
    order = np.argsort(times, kind="stable")
    t = analysis._timestamps(headers)
    d = analysis._difficulties(headers)
    keep = t >= times[order][0]
    if not keep.any():
        raise analysis.AnalysisError("price series starts after the last block")
    p = analysis.locf(times[order], prices[order], t[keep])
    return analysis.dari_series(reward, p, d[keep], t[keep])


def cmd_analyze(args) -> int:
    if args.report == "dari" and args.prices is None:
        raise UsageError("prices required: --report dari needs --prices")
    if (args.input_b is None) != (args.prices_b is None):
        raise UsageError("--input-b and --prices-b must be given together")
    headers = io.read_headers(args.input)
    report = args.report
    if report == "throughput":
        series = analysis.bucket_blocks(headers, args.bucket)
        io.write_series(args.out, ("bucket_start", "count"), zip(series.bucket_starts.tolist(), series.counts.tolist()))
        print(f"{len(series)} buckets, mean {series.counts.mean():.3f} blocks per bucket")
    elif report == "acf":
        a = analysis.acf(analysis.bucket_blocks(headers, args.bucket), args.max_lag)
        io.write_series(args.out, ("lag", "coefficient", "band"),
                        [(int(h), float(c), a.confidence_band) for h, c in zip(a.lags, a.coefficients)])
        print(f"band +/-{a.confidence_band:.4f}; lags above band: {a.above_band().tolist()}")
    elif report == "classes":
        series = analysis.bucket_blocks(headers, args.bucket)
        summary = analysis.classify_periods(series)
        io.write_series(args.out, ("bucket_start", "count", "class"),
                        [(s, int(c), k.value) for s, c, k in zip(series.bucket_starts.tolist(), series.counts, summary.classes)])
        expected = analysis.PoissonModel.for_bucket(args.bucket, args.ideal_time).class_probabilities()
        for name in ("desert", "spike", "normal"):
            print(f"{name:7s} observed {100 * getattr(summary, name):6.2f}%  poisson {100 * expected[name]:6.2f}%")
    elif report == "hashrate":
        t, h = analysis.estimate_hashrate_ma(headers, args.ma_window)
        io.write_series(args.out, ("time", "hashrate"), zip(t.tolist(), h.tolist()))
        print(f"{t.size} points, median {np.median(h):.6g} H/s")
    elif report == "dari":
        points = _prices_for(headers, args.prices, args.reward)
        if args.input_b is not None:
            other = _prices_for(io.read_headers(args.input_b), args.prices_b, args.reward_b)
            grid, ratio = analysis.dari_ratio(points, other, bucket=60.0)
            io.write_series(args.out, ("time", "dari_ratio"), zip(grid.tolist(), ratio.tolist()))
            print(f"{grid.size} minutes, mean DARI ratio {ratio.mean():.4f}")
        else:
            io.write_series(args.out, ("time", "dari"), [(p.time, p.dari) for p in points])
            print(f"{len(points)} DARI points")
    elif report == "miners":
        if not any(h.miner_id for h in headers):
            raise analysis.AnalysisError("miner_id column is not populated")
        series = analysis.bucket_blocks(headers, args.bucket)
        table = analysis.miner_shares(headers, series, analysis.classify_periods(series))
        io.write_series(args.out, ("miner", "normal", "spike", "desert", "total"),
                        [(m, r["normal"], r["spike"], r["desert"], r["total"]) for m, r in table.items()])
        print(f"{len(table)} miners")
    elif report == "solvetimes":
        s = analysis.solve_time_stats(headers)
        io.write_series(args.out, ("stat", "value"),
                        [("mean", s.mean), ("median", s.median), ("p05", s.p05), ("p95", s.p95),
                         ("count", s.count), ("excluded", s.excluded)])
        print(f"mean {s.mean:.2f} s over {s.count} solve times ({s.excluded} negative excluded)")
    return 0


def trace_rows(headers, da: str, params: DifficultyParams) -> list:
    t = np.array([h.timestamp for h in headers])
    d = np.array([h.difficulty for h in headers])
    rec = difficulty_series(t, d, da, params)
    return [(h.height, a, r, r / a) for h, a, r in zip(headers, d.tolist(), rec.tolist())]


def cmd_trace(args) -> int:
    params = resolve_params(args)
    headers = io.read_headers(args.input)
    if not headers:
        raise analysis.AnalysisError("input has no headers")
    heights = [h.height for h in headers]
    if heights != list(range(heights[0], heights[0] + len(heights))):
        raise analysis.AnalysisError("trace needs a height-contiguous chain in ascending order")
    rows = trace_rows(headers, args.da, params)
    io.write_series(args.out, ("height", "actual_difficulty", "recomputed_difficulty", "ratio"), rows)
    worst = max(abs(r[3] - 1.0) for r in rows)
    print(f"{len(rows)} heights, max |ratio - 1| = {worst:.3g}")
    return 0


def _num(v) -> float:
    return float("nan") if v is None else float(v)


def cmd_compare(args) -> int:
    configs = [resolve_config(args, da=args.da_a), resolve_config(args, da=args.da_b)]
    with ThreadPoolExecutor(max_workers=2) as pool:
        results = list(pool.map(run_simulation, configs))
    prefix = str(args.out)
    rows = []
    for side, result in zip("ab", results):
        io.write_headers(result, f"{prefix}_{side}.csv")
        s = summarize(result, args.max_lag)
        rows.append((side, result.config.da, s["blocks"], s["mean_solve_time"], s["median_solve_time"],
                     s["desert_pct"], s["normal_pct"], s["spike_pct"], s.get("acf_lag1"), s.get("acf_lag24"),
                     s.get("acf_lag48"), s.get("max_abs_acf_beyond_lag1"), s.get("band")))
        print(f"{side} {result.config.da}: mean {s['mean_solve_time']:.2f} s, deserts {s['desert_pct']:.2f}%, "
              f"spikes {s['spike_pct']:.2f}%, acf(24) {_num(s.get('acf_lag24')):.3f}")
    io.write_series(f"{prefix}_summary.csv",
                    ("side", "da", "blocks", "mean_solve_time", "median_solve_time", "desert_pct", "normal_pct",
                     "spike_pct", "acf_lag1", "acf_lag24", "acf_lag48", "max_abs_acf_beyond_lag1", "band"),
                    rows)
    return 0


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "trace": cmd_trace, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"powlab {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
