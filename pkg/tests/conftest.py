import numpy as np
import pytest
from hypothesis import settings

from ptmoments.linalg import Bipartition, DensityOperator, random_state

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bell_state() -> DensityOperator:
    """(|01> + |10>)/sqrt(2): one excitation shared across the cut."""
    psi = np.zeros(4, dtype=complex)
    psi[1] = psi[2] = 1 / np.sqrt(2)
    return DensityOperator(np.outer(psi, psi.conj()), Bipartition(1, 1))


def random_symmetric_state(bp: Bipartition, rng, rank=None) -> DensityOperator:
    """Random state commuting with the total excitation number."""
    from ptmoments.symmetry import symmetrize

    return symmetrize(random_state(bp, rng, rank))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
