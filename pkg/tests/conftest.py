import pytest

from wgpdc.dispersion import PolingGrating
from wgpdc.modesolver import WaveguideSpec
from wgpdc.pdc import PumpSpec, cluster_triplets, enumerate_triplets

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def fitted_spec():
    return WaveguideSpec(4.1, 9.3, 0.008, PolingGrating(8.92), length_mm=10.0)


@pytest.fixture(scope="session")
def pump():
    return PumpSpec()


@pytest.fixture(scope="session")
def triplets(fitted_spec, pump):
    return enumerate_triplets(fitted_spec, pump)


@pytest.fixture(scope="session")
def clusters(triplets):
    return cluster_triplets(triplets)


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion, then assert it."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}"
        if detail:
            line += f" :: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
