import numpy as np
import pytest
from hypothesis import strategies as st

from swss.fixtures import N_FIXTURE_P, n_fixture
from swss.network import Model
from swss.random_trees import random_corpus, random_instance

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def instance_from_seed(seed, **kwargs):
    return random_instance(np.random.default_rng(seed), **kwargs)


@pytest.fixture
def n_model():
    return Model.from_spec(n_fixture())


@pytest.fixture
def n_p():
    return N_FIXTURE_P.copy()


@pytest.fixture(scope="session")
def corpus():
    return random_corpus(20240611, 100)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
