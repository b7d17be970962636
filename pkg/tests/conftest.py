import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pdiqt.aperture import SlitGeometry, roi_rectangles
from pdiqt.field import GridSpec

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

CRITERIA_LINES: list[str] = []


@pytest.fixture(scope="session")
def geom():
    return SlitGeometry()


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


@pytest.fixture(scope="session")
def rois(geom, grid):
    return roi_rectangles(geom, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
