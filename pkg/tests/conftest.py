import math

import numpy as np
import pytest

_VERDICTS = pytest.StashKey[list]()


def monte_carlo_moment(kernel, i, j, d, n=10**6, seed=0):
    """Uniform sampling of the cube [-1, 1]^d; returns (estimate, standard error)."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=(n, d))
    r = np.linalg.norm(u, axis=1)
    vals = np.where(r <= 1.0, kernel(np.minimum(r, 1.0)) ** i * r ** j, 0.0) * 2.0 ** d
    return vals.mean(), vals.std(ddof=1) / math.sqrt(n)


@pytest.fixture
def mc_moment():
    return monte_carlo_moment


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(number: int, ok: bool, summary: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {summary}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
