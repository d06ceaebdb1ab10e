import numpy as np
import pytest

from flowplace.netlist import make_netlist
from flowplace.synth import SynthSpec, generate_synthetic


def toy(cells, nets, fixed, core=(-10.0, -10.0, 10.0, 10.0), sizes=None):
    """Netlist from cell names, nets as name lists and {terminal: (x, y)}."""
    n = len(cells)
    idx = {c: i for i, c in enumerate(cells)}
    xy = np.full((n, 2), np.nan)
    term = np.zeros(n, dtype=bool)
    for c, p in fixed.items():
        xy[idx[c]] = p
        term[idx[c]] = True
    pc, pn = [], []
    for k, net in enumerate(nets):
        for c in net:
            pc.append(idx[c])
            pn.append(k)
    w = np.ones(n) if sizes is None else np.asarray(sizes, float)[:, 0]
    h = np.ones(n) if sizes is None else np.asarray(sizes, float)[:, 1]
    return make_netlist(cells, w, h, term, xy, [f"n{k}" for k in range(len(nets))],
                        pc, pn, core=core)


@pytest.fixture
def star():
    return toy(["t", "a", "b"], [["t", "a", "b"]], {"t": (1.0, 0.0)})


@pytest.fixture
def chain():
    return toy(["t", "a", "b"], [["t", "a"], ["a", "b"]], {"t": (1.0, 0.0)})


@pytest.fixture(scope="session")
def small():
    return generate_synthetic(SynthSpec(50, 8, seed=3))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
