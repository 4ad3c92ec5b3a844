import pytest

from metroflow.simulation import SCENARIO_NAMES, named_scenario, run_scenario


@pytest.fixture(scope="session")
def scenario_logs():
    """One full horizon run per named control scenario, shared across tests."""
    return {name: run_scenario(named_scenario(name)) for name in SCENARIO_NAMES}


@pytest.fixture(scope="session")
def no_control_log(scenario_logs):
    return scenario_logs["no-control"]
