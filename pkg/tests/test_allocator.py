from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prpm.allocator import DurationDist, ResourcePool, sample_duration, try_acquire
from prpm.errors import ConfigError

FIXED = DurationDist()


def test_idle_pool_acquires_for_sixty_seconds():
    pool = ResourcePool(1)
    assert try_acquire(pool, 100.0, FIXED, np.random.default_rng(0)) == (0, 160.0)


def test_saturated_pool_refuses():
    pool = ResourcePool(1)
    rng = np.random.default_rng(0)
    try_acquire(pool, 0.0, DurationDist(value=10.0), rng)
    assert try_acquire(pool, 5.0, FIXED, rng) is None


def test_release_is_inclusive():
    pool = ResourcePool(1)
    rng = np.random.default_rng(0)
    _, release = try_acquire(pool, 0.0, FIXED, rng)
    assert try_acquire(pool, release, FIXED, rng) == (0, release + 60.0)


def test_zero_capacity_and_negative_capacity():
    assert try_acquire(ResourcePool(0), 0.0, FIXED, np.random.default_rng(0)) is None
    with pytest.raises(ConfigError):
        ResourcePool(-1)


def test_fixed_duration_is_sixty():
    assert sample_duration(FIXED, np.random.default_rng(0)) == 60.0


@given(st.integers(0, 2**32 - 1))
def test_stochastic_durations_stay_in_bounds(seed):
    rng = np.random.default_rng(seed)
    for kind in ("normal", "exponential"):
        assert 1.0 <= sample_duration(DurationDist(kind), rng) <= 60.0


def test_normal_duration_regression_value():
    # captured once from the seeded generator and pinned
    assert sample_duration(DurationDist("normal"), np.random.default_rng(42)) == pytest.approx(33.04717079754431,
                                                                                               abs=1e-12)


def test_heavy_tail_falls_back_to_clamp():
    d = DurationDist("exponential", mean=1e6, low=1.0, high=2.0)
    assert sample_duration(d, np.random.default_rng(0)) == 2.0


def test_bad_distributions_rejected():
    with pytest.raises(ConfigError):
        DurationDist("uniform")
    with pytest.raises(ConfigError):
        DurationDist("normal", low=5.0, high=1.0)
    with pytest.raises(ConfigError):
        DurationDist(value=0.0)


def test_capacity_equal_to_demand_never_refuses():
    pool = ResourcePool(50)
    rng = np.random.default_rng(0)
    assert all(try_acquire(pool, float(t), FIXED, rng) is not None for t in range(50))
    assert pool.free == 0


def test_same_seed_same_trace():
    def trace(seed):
        pool, rng, out = ResourcePool(3), np.random.default_rng(seed), []
        for t in range(200):
            out.append(try_acquire(pool, t * 7.0, DurationDist("exponential"), rng))
        return out

    assert trace(9) == trace(9)
