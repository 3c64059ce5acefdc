import numpy as np
import pytest

from crrmisc.simulate import Scenario, analysis_gamma, analysis_model, generate_dataset


@pytest.fixture(scope="session")
def scenario1():
    return Scenario.preset(1, -2.0)


@pytest.fixture(scope="session")
def scenario1_data(scenario1):
    data, true_cause = generate_dataset(scenario1, 400, seed=2024)
    return data, true_cause


@pytest.fixture(scope="session")
def analysis(scenario1):
    gamma, _ = analysis_gamma(scenario1)
    return analysis_model(), gamma


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per acceptance criterion for the summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
