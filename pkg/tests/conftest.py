import numpy as np
import pytest

from nlb.stream import LinkStream


def make_stream(n_events, n_nodes, seed=0, self_loops=True, max_gap=3):
    rng = np.random.default_rng(seed)
    src = rng.integers(0, n_nodes, size=n_events)
    dst = rng.integers(0, n_nodes, size=n_events)
    if not self_loops:
        dst = (src + rng.integers(1, n_nodes, size=n_events)) % n_nodes
    ts = np.cumsum(rng.integers(0, max_gap, size=n_events))
    return LinkStream.from_arrays(src, dst, ts, n_nodes=n_nodes)


@pytest.fixture
def small_stream():
    return make_stream(200, 12, seed=3)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
