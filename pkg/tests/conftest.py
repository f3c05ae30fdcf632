import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ground truth of the default gate-study noise, a concrete high-fidelity parameter vector
GATE_STUDY_TRUTH = (0.9983, 0.9957, 0.3185, 0.5012)
PRIOR_MEAN = (0.95, 0.95, 0.3, 0.5)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion.

    Lines are printed immediately (visible with ``-s``) and again in the
    terminal summary.
    """

    def report(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"CRITERION {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
