import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""

    def record(number: int, passed: bool, detail: str, part: str = ""):
        key = (number, part)
        _CRITERIA[key] = (bool(passed), detail)
        label = f"criterion {number:2d}{' ' + part if part else ''}"
        print(f"{label}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, part), (ok, detail) in sorted(_CRITERIA.items()):
        label = f"{num:2d}{' ' + part if part else ''}"
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}")
