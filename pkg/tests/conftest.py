import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rmask.datasets import path_p3, random_graph, star_s4, triangle_k3

# JIT compilation on first call makes per-example deadlines meaningless
settings.register_profile("rmask", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("rmask")


@pytest.fixture
def p3():
    return path_p3()


@pytest.fixture
def k3():
    return triangle_k3()


@pytest.fixture
def s4():
    return star_s4()


def oracle_graphs(count, max_nodes=200, seed=0):
    """Random graphs of varying size and density for oracle comparisons."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(2, max_nodes + 1))
        avg = float(rng.choice([1.5, 3.0, 6.0, 12.0]))
        out.append(random_graph(n, min(1.0, avg / max(n - 1, 1)), seed=seed * 1000 + i))
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not (mod.RESULTS or mod.DIAGNOSTICS):
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(mod.RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    for line in mod.DIAGNOSTICS:
        terminalreporter.write_line(f"diagnostic: {line}")
