import numpy as np
import pytest

from kkholonomy.catalog import get_scenario

_ACCEPTANCE = []


def record_criterion(number: int, title: str, passed: bool, detail: str = ""):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    _ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def hopf():
    return get_scenario("hopf")


@pytest.fixture(scope="session")
def hopf_double():
    return get_scenario("hopf-double")


@pytest.fixture
def rng():
    return np.random.default_rng(7)
