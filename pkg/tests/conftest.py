import numpy as np
import pytest

from irrigsim.doe import SOILS, generate_design, run_campaign
from irrigsim.soil_dynamics import CropParams, SoilParams

# loam-like column used across the unit tests
LOAM = SoilParams(
    wilting_point=0.1,
    field_capacity=0.3,
    saturation=0.45,
    percolation_rate=0.01,
    max_infiltration_rate=0.5,
    runoff_coeff=0.2,
    root_zone=1000.0,
    p_fraction=0.5,
)
CROP = CropParams(kcb=0.9, ke=0.2)


@pytest.fixture
def loam():
    return LOAM


@pytest.fixture
def crop():
    return CROP


@pytest.fixture(scope="session")
def design():
    return generate_design()


@pytest.fixture(scope="session")
def campaigns(design):
    """Full 256-run campaigns for every soil, simulated once per session."""
    return {soil: run_campaign(soil, design, seed=0, jobs=1) for soil in SOILS}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one pass/fail line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
