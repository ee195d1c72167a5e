import numpy as np
import pytest

from gtsaga.harness.data import generate_dataset, partition
from gtsaga.objectives import make_glm_problem

# Lines appended by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def small_glm(n=2, m=3, p=3, seed=0):
    ds = generate_dataset(n * m, p, seed=seed)
    shards = partition(ds, n, "uniform")
    return make_glm_problem(shards.features, shards.labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
