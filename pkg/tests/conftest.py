import numpy as np
import pytest

from varattitude.estimator import EstimatorGains
from varattitude.measurement import choose_weights, ref_directions

import oracles
from scenarios import DenseFrames


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ref_E():
    return ref_directions(9)


@pytest.fixture(scope="session")
def ref_W(ref_E):
    return choose_weights(ref_E)


@pytest.fixture(scope="session")
def ref_gains():
    return EstimatorGains.reference()


@pytest.fixture(scope="session")
def dense_frames(ref_E, ref_W):
    # 1/8000 s grid resolves every RK4 stage used by the order and dissipation checks
    return DenseFrames(ref_E, ref_W, oracles.REF_BETA, 1.0 / 8000.0, 12.0)


_ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record one acceptance line: ``report(n, ok, text)``."""

    def _report(n, ok, text):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}"
        _ACCEPTANCE[n] = line
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
