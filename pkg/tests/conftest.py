import os

import pytest
from hypothesis import HealthCheck, settings

from expansive.model import Constant, ExpansiveSpec, LogPower

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ref_spec():
    """alpha = 1, rho = 1/2, h = 1, m = 1: c_n = 2^n."""
    return ExpansiveSpec(1, "1/2", Constant(1), 1)


@pytest.fixture(scope="session")
def log_spec():
    return ExpansiveSpec(1, "1/2", LogPower(1), 1)


@pytest.fixture
def acceptance_report():
    def report(label: str, ok: bool, detail: str = ""):
        ACCEPTANCE_LINES.append(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip())
        print(ACCEPTANCE_LINES[-1])

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
