import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from livetalk.kernel import boot
from livetalk.memory import GCConfig


def small_config(**overrides):
    base = dict(eden_size=64 * 1024, survivor_size=16 * 1024,
                old_area_size=16 * 1024, initial_full_threshold=96 * 1024,
                growth_factor=1.5)
    base.update(overrides)
    return GCConfig(**base)


@pytest.fixture(scope="session")
def shared_rt():
    """One booted runtime for read-mostly tests."""
    return boot(config=small_config())


@pytest.fixture()
def rt():
    """A fresh runtime per test that mutates global state."""
    return boot(config=small_config())
