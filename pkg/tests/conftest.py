import numpy as np
import pytest

from dritz import DGSpace, build_interval_mesh, build_unit_square_tri_mesh

ACCEPTANCE_LINES = {}


def random_function(space, rng, scale=1.0):
    return space.function(scale * rng.standard_normal(space.ndof))


def make_space(dim, n, degree, gamma=10.0):
    if dim == 1:
        return DGSpace(build_interval_mesh(n, 0.0, 1.0, gamma), degree)
    return DGSpace(build_unit_square_tri_mesh(n, gamma), degree)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES.values():
        terminalreporter.write_line(line)


_STUDIES = {}


def study(problem, **overrides):
    """Run a built-in study once per session and cache the table."""
    from dritz.harness import StudyConfig, run_study

    key = (problem, tuple(sorted(overrides.items())))
    if key not in _STUDIES:
        _STUDIES[key] = run_study(StudyConfig.for_problem(problem, **overrides))
    return _STUDIES[key]
