import math
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import integrate, stats

from powlab import BACKEND, _kernels
from powlab.analysis import bucket_blocks, geometric_mean_ratio, log_ratio_standard_error
from powlab.cli import main
from powlab.da import DifficultyParams, ExponentOverflowError, difficulty_series
from powlab.miners import MinerPopulation
from powlab.sim import (
    HashrateShock,
    SimConfig,
    SimulationError,
    integrated_intensity,
    open_uniforms,
    run_simulation,
    sample_arrival_rtt,
    sample_solve_time_fixed,
    simulate_rtt_thinning,
)

from conftest import constant_config, scenario_config


# -- samplers ----------------------------------------------------------------


def test_fixed_sampler_quantile():
    assert sample_solve_time_fixed(1200.0, 2.0, math.exp(-1)) == pytest.approx(600.0, rel=1e-15)
    assert sample_solve_time_fixed(600.0, 1.0, math.nextafter(1.0, 0.0)) < 1e-9
    with pytest.raises(ValueError):
        sample_solve_time_fixed(600.0, 1.0, 1.0)


def test_fixed_sampler_mean():
    u = open_uniforms(np.random.default_rng(5), 1_000_000)
    mean = (-600.0 * np.log(u)).mean()
    assert abs(mean - 600) < 3 * 600 / 1000
    assert sample_solve_time_fixed(600.0, 1.0, float(u[0])) == pytest.approx(-600 * math.log(u[0]))


def test_open_uniforms_never_hit_endpoints():
    u = open_uniforms(np.random.default_rng(0), 100_000)
    assert u.min() > 0 and u.max() < 1


def test_rtt_inversion_identity():
    d, h, s = 1800.0, 3.0, 43200.0
    budget = (math.e - 1) * h * s / d
    assert sample_arrival_rtt(d, h, s, budget) == pytest.approx(s, rel=1e-14)
    assert integrated_intensity(s, d, h, s) == pytest.approx(budget, rel=1e-14)


def test_rtt_infinite_smoothing_limit():
    assert sample_arrival_rtt(1800.0, 3.0, math.inf, 2.0) == 1200.0
    assert sample_arrival_rtt(1800.0, 3.0, 1e15, 2.0) == pytest.approx(1200.0, rel=1e-9)


def test_rtt_sampler_overflow_guard():
    with pytest.raises(ExponentOverflowError):
        sample_arrival_rtt(1e300, 1e-300, 1.0, 1e10)


def test_rtt_sampler_matches_numerical_cdf():
    d, h, s = 1800.0, 3.0, 1200.0
    rng = np.random.default_rng(17)
    draws = np.array([sample_arrival_rtt(d, h, s, e) for e in rng.exponential(size=20_000)])

    def cdf(x):
        lam, _ = integrate.quad(lambda u: h / d * math.exp(u / s), 0.0, x)
        return 1.0 - math.exp(-lam)

    res = stats.kstest(draws, np.vectorize(cdf))
    assert res.statistic < 0.01


# -- runs --------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_blocks=0)
    with pytest.raises(ValueError):
        SimConfig(strategy_tick=0)
    with pytest.raises(ValueError):
        SimConfig(seed=-1)
    with pytest.raises(ValueError):
        SimConfig(da="aserti3")
    assert SimConfig(da="eda-composite").da == "eda"


def test_default_genesis_is_equilibrium():
    assert SimConfig().genesis_difficulty == 1800.0
    assert SimConfig(initial_difficulty=5.0).genesis_difficulty == 5.0


@pytest.mark.parametrize("da", ["btc2016", "cw144", "eda", "nefda"])
def test_run_shape_and_determinism(da):
    cfg = scenario_config(da, n_blocks=3000, seed=42)
    a, b = run_simulation(cfg), run_simulation(cfg)
    assert len(a) == 3000
    assert np.all(np.diff(a.timestamps) > 0)
    assert np.array_equal(a.timestamps, b.timestamps)
    assert np.array_equal(a.difficulties, b.difficulties)
    assert np.array_equal(a.hashrate_values, b.hashrate_values)
    assert np.array_equal(a.timestamps, np.round(a.timestamps, 3))
    assert a.miner_ids[0] is None


def test_different_seeds_differ():
    a = run_simulation(scenario_config("nefda", n_blocks=200, seed=1))
    b = run_simulation(scenario_config("nefda", n_blocks=200, seed=2))
    assert not np.array_equal(a.timestamps, b.timestamps)


def test_single_block_run_is_genesis():
    r = run_simulation(SimConfig(n_blocks=1))
    assert r.timestamps.tolist() == [0.0]
    assert r.difficulties.tolist() == [1800.0]


@pytest.mark.parametrize("da, source", [
    ("btc2016", "real-time"),
    ("cw144", "real-time"),
    ("eda", "real-time"),
    ("nefda", "real-time"),
    ("nefda", "last-block"),
    ("nefda", "mtp"),
])
def test_replay_consistency(da, source):
    params = DifficultyParams(timestamp_source=source, window=300 if da in ("btc2016", "eda") else None)
    cfg = SimConfig(da=da, params=params, n_blocks=5000, seed=3)
    r = run_simulation(cfg)
    replay = difficulty_series(r.timestamps, r.difficulties, da, params)
    np.testing.assert_allclose(replay, r.difficulties, rtol=1e-9)


def test_constant_difficulty_mean_solve_time():
    # window longer than the run: the Bitcoin rule never retargets
    cfg = constant_config("btc2016", 100_000, window=10**6)
    r = run_simulation(cfg)
    assert np.all(r.difficulties == 600.0)
    mean = np.diff(r.timestamps).mean()
    assert abs(mean - 600.0) < 3 * 600.0 / math.sqrt(100_000)


@pytest.mark.parametrize("da, source", [
    ("btc2016", "real-time"),
    ("cw144", "real-time"),
    ("eda", "real-time"),
    ("nefda", "real-time"),
    ("nefda", "last-block"),
    ("nefda", "mtp"),
])
def test_equilibrium_throughput(da, source):
    r = run_simulation(constant_config(da, 50_001, seed=9, timestamp_source=source))
    mean = np.diff(r.timestamps).mean()
    assert abs(mean - 600.0) / 600.0 < 0.01


def test_steady_state_geometric_mean_ratio():
    r = run_simulation(constant_config("nefda", 20_001, seed=4))
    ratio = geometric_mean_ratio(r.difficulties[1:])
    se = log_ratio_standard_error(r.difficulties[1:])
    assert abs(math.log(ratio)) < 3 * se


def test_hashrate_trace_within_population_bounds(nefda_run):
    h = nefda_run.hashrate_values
    assert h.min() >= 1.0 and h.max() <= 9.0
    assert np.all(np.diff(nefda_run.hashrate_times) >= 0)


def test_miner_tags_follow_population():
    r = run_simulation(constant_config("nefda", 2000))
    assert set(r.miner_ids[1:]) == {"base"}


def test_greedy_blocks_only_when_profitable(cw144_run):
    ids = np.array(cw144_run.miner_ids[1:], dtype=object)
    x = cw144_run.config.genesis_difficulty / cw144_run.difficulties[1:] - 1
    assert np.all(x[ids == "greedy"] >= 0.05)
    assert (ids == "greedy").any()


def test_runaway_is_reported():
    cfg = SimConfig(da="cw144", population=MinerPopulation(1.0, 0.0, 0.0), initial_difficulty=1e12,
                    n_blocks=10, max_solve_time=86400.0)
    with pytest.raises(SimulationError):
        run_simulation(cfg)


def test_shock_scales_hashrate():
    shock = HashrateShock(3600.0, 7200.0, 0.5)
    cfg = constant_config("btc2016", 100).with_(shock=shock)
    r = run_simulation(cfg)
    inside = (r.hashrate_times >= 3600) & (r.hashrate_times < 7200)
    assert np.all(r.hashrate_values[inside] == 0.5)
    with pytest.raises(ValueError):
        HashrateShock(5.0, 5.0, 1.0)


def test_thinning_matches_inversion():
    params = DifficultyParams()
    n = 10_000
    inv = run_simulation(constant_config("nefda", n, seed=21))
    thin = simulate_rtt_thinning(n, 1.0, 600.0, params, seed=22, step=0.1)
    assert thin.size == n and np.all(np.diff(thin) > 0)
    m_inv = bucket_blocks(inv).counts.mean()
    m_thin = bucket_blocks(thin).counts.mean()
    assert abs(m_inv - m_thin) / m_inv < 0.02


def test_thinning_backends_agree():
    params = DifficultyParams(smoothing=6000.0)
    u = np.random.default_rng(1).random(300_000)
    out_a, out_b = np.empty(40), np.empty(40)
    ra = _kernels._thinning_loop.py_func(u, 0, 0, out_a, 600.0, 0.0, 600.0, 6000.0, 1.0, 1.0)
    rb = _kernels._thinning_numpy(u, 0, 0, out_b, 600.0, 0.0, 600.0, 6000.0, 1.0, 1.0)
    assert ra == rb
    np.testing.assert_array_equal(out_a, out_b)


@pytest.mark.parametrize("da", ["cw144", "eda", "nefda"])
def test_python_kernel_matches_compiled(da):
    cfg = scenario_config(da, n_blocks=1500, seed=8)
    compiled = run_simulation(cfg)
    p, pop = cfg.params, cfg.population
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    m = cfg.n_blocks - 1
    draws = np.empty((m, 2))
    draws[:, 0] = -np.log(open_uniforms(rng, m))
    draws[:, 1] = open_uniforms(rng, m)
    out = _kernels.simulate_chain.py_func(
        _kernels.DA_CODES[cfg.da], 0, p.ideal_block_time, p.smoothing, p.window_for(cfg.da),
        0.25, 4.0, 43200.0, 172800.0, 43200.0, 0.8, 6, 11,
        pop.base_hashrate, pop.greedy_hashrate, pop.variable_hashrate, pop.greedy_threshold,
        pop.logistic_steepness, 1800.0, 1800.0, draws, 60.0, 0.0, 0.0, 0.0, 1.0, 30 * 86400.0,
    )
    np.testing.assert_allclose(out[0], compiled.timestamps, rtol=0, atol=2e-3)
    np.testing.assert_allclose(out[1], compiled.difficulties, rtol=1e-9)


def test_env_flag_forces_python_backend(tmp_path):
    args = ["simulate", "--da", "nefda", "--blocks", "2000", "--seed", "4"]
    assert main([*args, "--out", str(tmp_path / "fast.csv")]) == 0
    env = {**os.environ, "POWLAB_DISABLE_NUMBA": "1"}
    subprocess.run([sys.executable, "-m", "powlab", *args, "--out", str(tmp_path / "slow.csv")],
                   env=env, check=True, capture_output=True)
    meta = (tmp_path / "slow.csv.meta.json").read_text()
    assert '"backend": "python"' in meta
    assert f'"backend": "{BACKEND}"' in (tmp_path / "fast.csv.meta.json").read_text()
    assert (tmp_path / "fast.csv").read_bytes() == (tmp_path / "slow.csv").read_bytes()
