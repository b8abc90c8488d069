from __future__ import annotations

import pytest

from hdkde.kernels import GammaKernel
from hdkde.spectral import SpectralDensity

_LOG_KEY = pytest.StashKey[list]()


@pytest.fixture
def identity():
    return SpectralDensity.identity()


@pytest.fixture
def two_atom():
    return SpectralDensity.from_atoms([(0.5, 0.5), (1.5, 0.5)])


@pytest.fixture
def gauss():
    return GammaKernel(1.0)


def pytest_configure(config):
    config.stash[_LOG_KEY] = []


@pytest.fixture
def criterion_log(request):
    """Append ``(name, passed, detail)``; lines are printed in the terminal summary."""
    return request.config.stash[_LOG_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_LOG_KEY, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in log:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
