import os

import pytest
from hypothesis import HealthCheck, settings

from covplan.env import CoverageEnv

settings.register_profile("default", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Lines collected by the acceptance tests, echoed at the end of the run.
ACCEPTANCE_LINES: dict = {}


def tiny_env(**kw) -> CoverageEnv:
    """4x4 grid, four boundary points, three camera angles."""
    params = dict(extent=8.0, n_cells=4, fov_range=4.0, camera_angles=(-60.0, 0.0, 60.0),
                  n_headings=4, object_params=(4.0, 4.0, 0.5), n_points=4,
                  coverage_encoding="mask", seed=0)
    params.update(kw)
    return CoverageEnv(**params)


@pytest.fixture
def default_env():
    env = CoverageEnv()
    env.reset()
    return env


@pytest.fixture
def small_env():
    env = tiny_env()
    env.reset()
    return env


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
