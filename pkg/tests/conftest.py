import functools

import numpy as np
import pytest

from multiscat.multiscatter import solve_scene
from multiscat.scenes import example1_scene, example5_scene

# criterion lines collected by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def solved(name, kappa, p, tol=1e-11, mode=None):
    """Cached (W, report, evaluator) for the two-scatterer scenes."""
    scene = (example1_scene if name == "example1" else example5_scene)(kappa, p, tol=tol)
    if mode is not None:
        scene = scene.replace(mode=mode)
    return solve_scene(scene)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
