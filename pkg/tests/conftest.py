"""Shared fixtures for the FedDistr test suite."""

import numpy as np
import pytest

from feddistr.core.mixture import make_mixture_spec, partition_for_xi
from feddistr.core.run_config import RunConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_spec(rng):
    """Six well-separated 2-D bases, three labels."""
    return make_mixture_spec(6, 2, rng, subclasses_per_label=2, mean_spread=20.0, min_separation=10.0)


@pytest.fixture
def disjoint_shards(small_spec):
    """Three clients owning two bases each (ξ = 0)."""
    return partition_for_xi(6, 3, 0.0, 300, small_spec, np.random.default_rng(7))


@pytest.fixture
def overlapping_shards(small_spec):
    """Three clients sharing all six bases almost uniformly."""
    return partition_for_xi(6, 3, 0.999, 1200, small_spec, np.random.default_rng(8))


@pytest.fixture
def small_run_config():
    """A quick FedDistr configuration."""
    return RunConfig(
        seed=3,
        clients=3,
        bases=6,
        dim=4,
        samples_per_client=300,
        test_size=400,
        epochs=5,
        max_rounds=5,
    )
