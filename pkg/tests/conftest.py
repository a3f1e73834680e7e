import sys

import numpy as np
import pytest

from kcontact import core, uniform


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance gate's one-line-per-criterion results."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None) if mod else None
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    """Trigger jit compilation of the uniform stepper before any timed test."""
    uniform.simulate_uniform(core.ModelParams(1, 2.0), [0.9, 0.1], 0.1, dt=1e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
