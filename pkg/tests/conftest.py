import pytest

from powlab.da import DifficultyParams
from powlab.miners import MinerPopulation
from powlab.sim import SimConfig, run_simulation

# documented seed for the coin-hopping reproduction runs
SCENARIO_SEED = 1
SCENARIO_BLOCKS = 100_000


def scenario_config(da, seed=SCENARIO_SEED, n_blocks=SCENARIO_BLOCKS, **kw):
    """Coin-hopping stress scenario: H_G = H_V = 4 H_B, 5% greedy threshold, S = 12 h."""
    return SimConfig(
        da=da,
        params=DifficultyParams(smoothing=43200.0),
        population=MinerPopulation.scaled(1.0, 4.0, 4.0),
        n_blocks=n_blocks,
        seed=seed,
        **kw,
    )


def constant_config(da, n_blocks, seed=SCENARIO_SEED, **params):
    """Loyal miners only, so hash rate never moves."""
    return SimConfig(
        da=da,
        params=DifficultyParams(**params),
        population=MinerPopulation(1.0, 0.0, 0.0),
        n_blocks=n_blocks,
        seed=seed,
    )


@pytest.fixture(scope="session")
def nefda_run():
    return run_simulation(scenario_config("nefda"))


@pytest.fixture(scope="session")
def cw144_run():
    return run_simulation(scenario_config("cw144"))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
