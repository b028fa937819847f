import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def level_m():
    """Level-M dataset and inversion model, built once."""
    from plumeinv import experiments
    from plumeinv.config import ScenarioConfig

    cfg = ScenarioConfig()
    data = experiments.simulate(cfg)
    model = experiments.inversion_model(cfg, data)
    return cfg, data, model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
