import numpy as np
import pytest

from collective_twa import AtomEnsemble, build_matrices, build_square_lattice

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record an acceptance verdict; printed as one line per criterion at the end of the run."""

    def record(criterion, passed, detail):
        _VERDICTS.append((criterion, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in _VERDICTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")


@pytest.fixture
def lattice_2x2():
    return AtomEnsemble(build_square_lattice(2, 2, 0.8))


@pytest.fixture
def couplings_2x2(lattice_2x2):
    return build_matrices(lattice_2x2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
