import numpy as np
import pytest

from supou.model import BigJumps, CharacteristicQuadruple, SmallJumps
from supou.stable_dist import PiGamma


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def quad(gamma=None, alpha=0.7, beta=None, b=0.0, w=(1.0, 1.0), c=(0.5, 0.5), rate=1.0, a=None):
    """Shorthand constructor used across the test modules."""
    return CharacteristicQuadruple(
        pi=PiGamma(alpha, rate), b=b,
        big_jumps=None if gamma is None else BigJumps(gamma, *w),
        small_jumps=None if beta is None else SmallJumps(beta, *c), a=a)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
