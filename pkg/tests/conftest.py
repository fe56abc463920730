import importlib

import numpy as np
import pytest

from nasbo import _core_py
from nasbo.search_space import build_paper_space


def _backends():
    out = [pytest.param(_core_py, id="python")]
    try:
        out.append(pytest.param(importlib.import_module("nasbo._core"), id="cython"))
    except ImportError:
        pass
    return out


@pytest.fixture(params=_backends())
def kernels(request):
    """Each available implementation of the Pareto kernels."""
    return request.param


@pytest.fixture(scope="session")
def paper_space():
    return build_paper_space()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_acceptance_lines = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_acceptance_lines] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion; the lines are repeated in the summary."""
    lines = request.config.stash[_acceptance_lines]

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_acceptance_lines, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
