import os
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"
TABLE1 = ROOT / "configs" / "table1.yaml"

settings.register_profile(
    "kitsim", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "kitsim"))

#: (criterion number, PASS/FAIL, detail) lines collected by the acceptance suite
ACCEPTANCE: list = []


@pytest.fixture(scope="session")
def table1_config():
    from kitsim.config import load_config

    return load_config(TABLE1)


@pytest.fixture(scope="session")
def table1_spec(table1_config):
    return table1_config.device_spec()


@pytest.fixture(scope="session")
def table1_spectrum(table1_spec):
    from kitsim.cascade import s21_spectrum

    return s21_spectrum(table1_spec, np.linspace(1e9, 20e9, 1901))


@pytest.fixture(scope="session")
def table1_bloch(table1_spec):
    from kitsim.gainsim import bloch_dispersion

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return bloch_dispersion(table1_spec, 20e9)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")
