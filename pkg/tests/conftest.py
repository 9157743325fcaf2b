import functools
import warnings

import numpy as np
import pytest

from lagrangian_sbl import systems
from lagrangian_sbl.dictionary import PRESETS
from lagrangian_sbl.discovery import discover
from lagrangian_sbl.sbl import Hyperparameters

SYSTEMS = ("duffing", "penning", "chain", "string", "beam")


@functools.lru_cache(maxsize=None)
def clean_data(name: str):
    return systems.simulate(systems.paper_spec(name))


@functools.lru_cache(maxsize=None)
def discovered(name: str, seed: int = 0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return discover(clean_data(name), PRESETS[name], Hyperparameters(seed=seed))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance results, filled in by test_acceptance.py and echoed at the end of the run.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
