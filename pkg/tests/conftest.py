import numpy as np
import pytest

from hsifuse.scene import Scene
from hsifuse.synth import jasper_like


@pytest.fixture(scope="session")
def jasper():
    return jasper_like(seed=0)


def make_scene(C=8, H=16, W=16, L=3, seed=0, wavelengths=None, name="toy"):
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0, 100, size=(C, H, W)).astype(np.float32)
    labels = rng.integers(0, L, size=(H, W)).astype(np.uint8)
    return Scene.from_raw(name, raw, labels, [f"c{i}" for i in range(L)], wavelengths)


@pytest.fixture
def toy_scene():
    return make_scene()


ACCEPTANCE_LINES = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
