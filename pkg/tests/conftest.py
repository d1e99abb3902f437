import numpy as np
import pytest

from gptomo.core_model import tp_complete
from gptomo.phase_space import make_grid


def random_tp_vector(rng, scale=0.5):
    """Admissible 9-vector with a comfortable discriminant margin."""
    a2 = rng.uniform(0.6, 1.5)
    c2 = rng.uniform(0, 0.35 * a2) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    b2 = rng.normal(scale=scale, size=2)
    g = rng.normal(scale=scale, size=4)
    return np.array([a2, b2[0], b2[1], c2.real, c2.imag, *g])


def random_tp_process(rng, scale=0.5):
    return tp_complete(random_tp_vector(rng, scale))


@pytest.fixture
def grid():
    return make_grid(20, 5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""

    def _report(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
