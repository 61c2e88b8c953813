import numpy as np
import pytest

from roughsee import FbmSpec, KernelModel, TimeGrid, sample_fbm

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def model4():
    return KernelModel(4, amplitude=0.5)


@pytest.fixture(scope="session")
def small_u0():
    u = np.zeros(4)
    u[0] = 0.05
    return u


@pytest.fixture(scope="session")
def fbm4():
    return sample_fbm(FbmSpec.power_law(0.45, 4, scale=0.3, seed=7), TimeGrid(0.0, 1.0, 64))
