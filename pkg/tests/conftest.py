"""Shared fixtures for the gapmor tests."""

import numpy as np
import pytest

from gapmor.lti import StateSpace
from gapmor.models import random_stabilizable
from gapmor.sysfile import write_system


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def symmetric_stable(n: int, seed: int = 0) -> StateSpace:
    """SISO system with symmetric negative definite A and C = B^T."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = q @ np.diag(-np.linspace(1.0, 20.0, n)) @ q.T
    b = rng.standard_normal((n, 1))
    return StateSpace(a, b, b.T)


@pytest.fixture
def stable_system():
    """Stable SISO system of order 8."""
    return random_stabilizable(8, seed=3)


@pytest.fixture
def unstable_system():
    """SISO system of order 8 with two unstable eigenvalues."""
    return random_stabilizable(8, n_unstable=2, seed=11)


@pytest.fixture
def mimo_system():
    """Two-input, two-output system of order 7 with one unstable eigenvalue."""
    return random_stabilizable(7, m=2, p=2, n_unstable=1, seed=5)


@pytest.fixture
def system_file(tmp_path, unstable_system):
    """The unstable SISO system written to disk."""
    path = tmp_path / "sys.coo"
    write_system(unstable_system, str(path), "test system")
    return path


@pytest.fixture
def symmetric_system():
    """State-space symmetric SISO system of order 12."""
    return symmetric_stable(12, seed=2)
