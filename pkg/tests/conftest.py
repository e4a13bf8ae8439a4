import os
import tempfile

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

os.environ.setdefault("FLIPBOUND_TABLE_CACHE", os.path.join(tempfile.gettempdir(), "flipbound-table-cache"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def poisson100():
    from flipbound.sparse_la import gen_poisson
    return gen_poisson(100)


@pytest.fixture(scope="session")
def poisson100_eq(poisson100):
    from flipbound.sparse_la import equilibrate
    return equilibrate(poisson100)


@pytest.fixture(scope="session")
def poisson100_norms(poisson100):
    from flipbound.sparse_la import norms
    return norms(poisson100)


@pytest.fixture(scope="session")
def poisson100_eq_norms(poisson100_eq):
    from flipbound.sparse_la import norms
    return norms(poisson100_eq[0])


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)
