import pytest

from osaas_probe.sim import default_calibrated_params
from osaas_probe.spectrum import default_plan

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def plan():
    return default_plan()


@pytest.fixture(scope="session")
def params():
    return default_calibrated_params()


@pytest.fixture
def record_criterion():
    """Record a pass/fail line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> None:
        prev = ACCEPTANCE_RESULTS.get(number)
        if prev is not None and not prev[0]:
            return
        if prev is not None and ok:
            detail = f"{prev[1]}; {detail}"
        ACCEPTANCE_RESULTS[number] = (ok, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
