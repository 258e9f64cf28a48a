import numpy as np
import pytest
from hypothesis import settings

from frigibbs import AcquisitionConfig, FriSignal
from frigibbs.experiment import find_spec_file, load_spec

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def table1_spec():
    return load_spec(find_spec_file("table1"))


@pytest.fixture(scope="session")
def table1_signal(table1_spec) -> FriSignal:
    """The fixed five-Dirac signal used for the demonstration runs."""
    tr = table1_spec.truth
    return FriSignal(tr.weights, tr.locations)


@pytest.fixture(scope="session")
def table1_acq() -> AcquisitionConfig:
    return AcquisitionConfig(sigma_h=5.0, T=1.0, N=30)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Append ``PASS``/``FAIL`` lines that are echoed at the end of the run."""

    def report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
