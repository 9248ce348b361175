import numpy as np
import pytest

from stardiff.corpus import MarkovChain, sticky_chain
from stardiff.denoiser import MarkovOracleDenoiser


@pytest.fixture
def chain09():
    """Uniform start, stay with probability 0.9."""
    return sticky_chain(2, 0.9)


@pytest.fixture
def chain_asym():
    return MarkovChain(np.array([0.6, 0.4]), np.array([[0.8, 0.2], [0.3, 0.7]]))


@pytest.fixture
def chain3():
    return MarkovChain(
        np.array([0.5, 0.3, 0.2]),
        np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.25, 0.25, 0.5]]),
    )


@pytest.fixture
def oracle_asym(chain_asym):
    return MarkovOracleDenoiser(chain_asym)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Log one acceptance criterion's outcome for the end-of-run summary."""

    def put(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (bool(ok), detail)
        return bool(ok)

    return put


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
