import numpy as np
import pytest

from sparsecca.model import ParamSpace, build_model

ACCEPTANCE_LINES: list[str] = []


def record(line: str) -> None:
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20150101)


@pytest.fixture
def small_space():
    return ParamSpace(p=8, m=8, r=1, s_u=2, s_v=2, lam=0.9)


@pytest.fixture
def sparse_model(small_space):
    return build_model(small_space, "identity", [0.9], [1, 5], [2, 6], seed=11)
