import random
from pathlib import Path

import pytest

from xwarehouse.generate import random_queries, synthetic_store

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden():
    return GOLDEN


@pytest.fixture(scope="session")
def store_200():
    return synthetic_store(200, seed=11)


@pytest.fixture(scope="session")
def store_1k():
    return synthetic_store(1000, seed=5)


@pytest.fixture(scope="session")
def queries_1k(store_1k):
    return random_queries(store_1k, 60, seed=3)


@pytest.fixture
def rng():
    return random.Random(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
