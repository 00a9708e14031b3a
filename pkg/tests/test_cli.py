import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from powlab import io
from powlab.cli import build_parser, main
from powlab.da import ChainHeader, DifficultyParams
from powlab.sim import run_simulation

from conftest import scenario_config


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def chain_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "nefda.csv"
    assert main(["simulate", "--da", "nefda", "--smoothing", "43200", "--blocks", "20000",
                 "--seed", "1", "--out", str(out)]) == 0
    return out


def test_simulate_writes_headers_and_meta(chain_csv, capsys):
    hs = io.read_headers(chain_csv)
    assert len(hs) == 20000
    meta = json.loads(chain_csv.with_name(chain_csv.name + ".meta.json").read_text())
    assert meta["seed"] == 1 and meta["config"]["S"] == 43200.0
    assert abs(meta["summary"]["mean_solve_time"] - 600) < 15


def test_simulate_matches_library(chain_csv):
    # CLI is a thin binding over run_simulation
    r = run_simulation(scenario_config("nefda", n_blocks=20000))
    np.testing.assert_array_equal([h.timestamp for h in io.read_headers(chain_csv)], r.timestamps)


def test_simulate_deterministic(tmp_path):
    for name in ("a.csv", "b.csv"):
        assert main(["simulate", "--da", "cw144", "--blocks", "3000", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv.meta.json").read_bytes() == (tmp_path / "b.csv.meta.json").read_bytes()


def test_flag_overrides_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"da": "cw144", "n_blocks": 50, "seed": 3}))
    out = tmp_path / "o.csv"
    assert main(["simulate", "--config", str(cfg), "--blocks", "80", "--out", str(out)]) == 0
    meta = json.loads((tmp_path / "o.csv.meta.json").read_text())
    assert meta["config"]["n_blocks"] == 80 and meta["config"]["da"] == "cw144" and meta["seed"] == 3


def test_multipliers_scale_base(tmp_path):
    out = tmp_path / "o.csv"
    main(["simulate", "--blocks", "10", "--base-hashrate", "2", "--greedy-mult", "3", "--out", str(out)])
    cfg = json.loads((tmp_path / "o.csv.meta.json").read_text())["config"]
    assert cfg["H_G"] == 6.0 and cfg["H_V"] == 4.0


@pytest.mark.parametrize("argv", [
    ["simulate", "--blocks", "0", "--out", "x.csv"],
    ["simulate", "--da", "aserti3", "--out", "x.csv"],
    ["trace", "--input", "x.csv", "--out", "y.csv"],
    ["analyze", "--input", "x.csv", "--report", "dari", "--out", "y.csv"],
])
def test_usage_errors_exit_2(tmp_path, argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_dari_without_prices_message(chain_csv, tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["analyze", "--input", str(chain_csv), "--report", "dari", "--out", str(tmp_path / "d.csv")])
    assert "prices required" in capsys.readouterr().err


def test_runtime_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("height,time,difficulty,miner_id\n0,0,0,\n")
    assert main(["analyze", "--input", str(bad), "--report", "throughput", "--out", str(tmp_path / "o.csv")]) == 1
    assert "bad.csv:2" in capsys.readouterr().err


def test_analyze_acf(chain_csv, tmp_path):
    out = tmp_path / "acf.csv"
    assert main(["analyze", "--input", str(chain_csv), "--report", "acf", "--max-lag", "50", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 52
    assert lines[1].startswith("0,1,")


def test_analyze_classes_prints_expectations(chain_csv, tmp_path, capsys):
    assert main(["analyze", "--input", str(chain_csv), "--report", "classes", "--out", str(tmp_path / "c.csv")]) == 0
    text = capsys.readouterr().out
    assert "poisson   1.74%" in text and "poisson   2.01%" in text and "poisson  96.26%" in text


@pytest.mark.parametrize("report", ["throughput", "hashrate", "miners", "solvetimes"])
def test_analyze_reports(chain_csv, tmp_path, report):
    out = tmp_path / f"{report}.csv"
    assert main(["analyze", "--input", str(chain_csv), "--report", report, "--out", str(out)]) == 0
    assert len(rows(out)) > 0


def test_analyze_miners_needs_ids(tmp_path, capsys):
    f = tmp_path / "h.csv"
    io.write_headers([ChainHeader(0, 0.0, 600.0), ChainHeader(1, 600.0, 600.0)], f)
    assert main(["analyze", "--input", str(f), "--report", "miners", "--out", str(tmp_path / "m.csv")]) == 1
    assert "miner_id" in capsys.readouterr().err


def test_analyze_dari_ratio(chain_csv, tmp_path):
    prices = tmp_path / "p.csv"
    io.write_prices([0.0], [100.0], prices)
    out = tmp_path / "d.csv"
    assert main(["analyze", "--input", str(chain_csv), "--report", "dari", "--prices", str(prices),
                 "--input-b", str(chain_csv), "--prices-b", str(prices), "--out", str(out)]) == 0
    assert {float(r["dari_ratio"]) for r in rows(out)} == {1.0}


def test_trace_own_output(chain_csv, tmp_path):
    out = tmp_path / "t.csv"
    assert main(["trace", "--input", str(chain_csv), "--da", "nefda", "--smoothing", "43200", "--out", str(out)]) == 0
    ratios = np.array([float(r["ratio"]) for r in rows(out)])
    assert ratios.size == 20000 and np.max(np.abs(ratios - 1)) < 1e-9


def test_trace_constant_file_closed_form(tmp_path):
    # blocks every 300 s at a constant recorded difficulty: NEFDA must climb as D0 e^{n(T - 300)/S}
    f = tmp_path / "h.csv"
    io.write_headers([ChainHeader(i, 300.0 * i, 600.0) for i in range(200)], f)
    out = tmp_path / "t.csv"
    assert main(["trace", "--input", str(f), "--da", "nefda", "--smoothing", "6000", "--out", str(out)]) == 0
    rec = np.array([float(r["recomputed_difficulty"]) for r in rows(out)])
    expected = 600.0 * np.exp(np.arange(200) * 300.0 / 6000.0)
    np.testing.assert_allclose(rec, expected, rtol=1e-11)
    assert np.all(np.diff(rec) > 0)


def test_compare(tmp_path, capsys):
    prefix = tmp_path / "cmp"
    assert main(["compare", "--da-a", "nefda", "--da-b", "nefda", "--blocks", "3000", "--max-lag", "10",
                 "--out", str(prefix)]) == 0
    a, b = rows(f"{prefix}_summary.csv")
    assert {k: v for k, v in a.items() if k != "side"} == {k: v for k, v in b.items() if k != "side"}
    assert (tmp_path / "cmp_a.csv").read_bytes() == (tmp_path / "cmp_b.csv").read_bytes()


def test_help_lists_flags_with_defaults():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    text = sub["simulate"].format_help()
    for flag in ("--da", "--blocks", "--seed", "--ideal-time", "--smoothing", "--base-hashrate",
                 "--greedy-mult", "--variable-mult", "--out", "--config"):
        assert flag in text
    assert "default: 43200" in text
    assert "--max-lag" in sub["analyze"].format_help()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "powlab", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout
