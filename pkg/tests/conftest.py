import pytest

from quboalloc.qubo import CoefficientForm
from quboalloc.synthetic import random_circuit

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def melbourne_instance():
    from quboalloc.device import builtin_device
    from quboalloc.pipeline import prepare_instance

    circ = random_circuit(7, 500, seed=11)
    return prepare_instance(circ, builtin_device("melbourne"), CoefficientForm())


@pytest.fixture
def detail(request):
    """Dict an acceptance test fills with the measured values shown on its verdict line."""
    found: dict = {}
    request.node.acceptance_detail = found
    return found


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    report = outcome.get_result()
    measured = ", ".join(f"{k}={v}" for k, v in getattr(item, "acceptance_detail", {}).items())
    verdict = "PASS" if report.passed else "FAIL"
    line = f"{verdict} [{number}] {title}" + (f": {measured}" if measured else "")
    _VERDICTS[number] = line
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
