import pytest

from positon_kdv.scattering import Params

ACCEPTANCE_LINES = []


@pytest.fixture
def params():
    return Params(1.0)


@pytest.fixture
def report_line():
    def add(line):
        ACCEPTANCE_LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def q_oracle():
    """Pseudospectral evolution of tapered Q to t = 0.25 on [-400, 400], N = 2^15."""
    from positon_kdv import pde_oracle as po

    T = 0.25
    g = po.PeriodicGrid(400.0, 2**15)
    cfg = po.IntegratorConfig(1e-4, T, lowpass=po.radiation_cutoff(g.L, T))
    return g, po.evolve(po.initial_samples("Q", g, 1.0), g, cfg)
