import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pwfnet import runtime

settings.register_profile("pwf", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "pwf"))

# single-threaded so every numeric result is reproducible run to run
runtime.set_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines, printed once at the end of the run
_ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(n, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} | {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
