import os

import numpy as np
import pytest

from enantiocav.params import reference_params

ACCEPTANCE = []

FULL = os.environ.get("ENANTIOCAV_FULL", "") not in ("", "0")


def record_acceptance(number, ok, detail):
    ACCEPTANCE.append((number, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE, key=lambda r: str(r[0])):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ref():
    return reference_params()
