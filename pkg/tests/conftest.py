"""Shared fixtures: zero-temperature relaxations are expensive, so they are
computed once per session and reused by the analysis and acceptance tests."""
from functools import lru_cache

import pytest

from realginibre.core import STREAM_GAS_INIT, k_for_alpha, rng_stream
from realginibre.gasdyn import initial_configuration, relax_to_minimum


@lru_cache(maxsize=None)
def _relaxed(alpha: float, n: int, seed: int = 0):
    c0 = initial_configuration(n, k_for_alpha(alpha, n), rng_stream(seed, STREAM_GAS_INIT, n))
    return relax_to_minimum(c0)


@pytest.fixture(scope="session")
def relaxed():
    """``relaxed(alpha, n, seed=0) -> (config, stats)``, memoized."""
    return _relaxed


# -- acceptance verdicts ---------------------------------------------------------
# each acceptance test records one line; they are printed as the test runs
# (visible with -s) and repeated in the terminal summary.

_VERDICTS: dict[int, str] = {}


def record_verdict(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    _VERDICTS[criterion] = line
    print("\n" + line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for c in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[c])
