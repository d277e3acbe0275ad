import numpy as np
import pytest

from ctstereo.core import CameraIntrinsics, LightSet, LightSpec, MaterialParams
from ctstereo.renderer import Scene, analytic_surfaces, render_dataset

# well-spread directional lights (about 39 degrees off the view axis)
SPREAD = ((0.8, 0.0, 1.0), (-0.4, 0.7, 1.0), (-0.4, -0.7, 1.0))


def directional_lights(dirs=SPREAD, intensity=1.0) -> LightSet:
    return LightSet(tuple(LightSpec.directional(d, intensity) for d in dirs))


def render_surface(name, size, material, lights=None, params=None):
    lights = lights or directional_lights()
    s = analytic_surfaces(name, size, params)
    K = CameraIntrinsics.default(size, size)
    scene = Scene(s.depth, K, material, lights, s.mask, s.gradient)
    return s, K, lights, render_dataset(scene)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def shiny_sphere():
    mat = MaterialParams((0.5, 0.5, 0.5), 0.5, 0.3, 0.04)
    return (mat,) + render_surface("sphere", 48, mat)


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE: dict = {}
ACCEPTANCE_COUNT = 9


@pytest.fixture
def criterion():
    """``criterion(n, passed, detail)`` records and prints one verdict line."""
    def record(n, passed, detail):
        line = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[n] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        terminalreporter.write_line(ACCEPTANCE.get(n, f"criterion {n}: FAIL  did not complete"))
