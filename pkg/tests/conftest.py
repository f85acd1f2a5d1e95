import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maphdr.imaging import ResponseCurve

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# lines recorded by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: l.split("] ", 1)[1]):  # by criterion id
            terminalreporter.write_line(line)


def log_response(z_max: int = 255, z_th: int = 13, channels: int = 1) -> ResponseCurve:
    """``g(z) = ln(z + 1)``: radiance is ``(z + 1) / dt``."""
    g = np.log(np.arange(z_max + 1, dtype=float) + 1.0)
    return ResponseCurve(np.repeat(g[:, None], channels, axis=1), z_th, z_max)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
