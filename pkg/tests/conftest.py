import numpy as np
import pytest

from picdtc.trellis import build_trellis


@pytest.fixture(scope="session")
def rsc1():
    return build_trellis("5", None, "7")


@pytest.fixture(scope="session")
def rsc2():
    return build_trellis("5", "3", "7")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """Record a one-line acceptance verdict, echoed in the terminal summary."""

    def _report(criterion: str, passed: bool, detail: str):
        line = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
        request.config.stash[_ACCEPTANCE].append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
