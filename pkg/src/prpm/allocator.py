"""Bounded pool of intervention resources with sampled treatment durations."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from prpm.errors import ConfigError

FIXED, NORMAL, EXPONENTIAL = "fixed", "normal", "exponential"
MAX_RESAMPLES = 64


@dataclass(frozen=True)
class DurationDist:
    """Treatment duration in seconds.

    Stochastic kinds are truncated to ``[low, high]`` by resampling, falling
    back to clamping after 64 draws.
    """

    kind: str = FIXED
    value: float = 60.0
    mean: float = 30.0
    std: float = 10.0
    low: float = 1.0
    high: float = 60.0

    def __post_init__(self):
        if self.kind not in (FIXED, NORMAL, EXPONENTIAL):
            raise ConfigError(f"unknown duration kind {self.kind!r}")
        if not 0 < self.low <= self.high:
            raise ConfigError(f"bad truncation bounds [{self.low}, {self.high}]")
        if self.kind == FIXED and not self.value > 0:
            raise ConfigError("fixed duration must be positive")


def sample_duration(dist: DurationDist, rng: np.random.Generator) -> float:
    if dist.kind == FIXED:
        return float(dist.value)
    for _ in range(MAX_RESAMPLES):
        if dist.kind == NORMAL:
            d = rng.normal(dist.mean, dist.std)
        else:
            d = rng.exponential(dist.mean)
        if dist.low <= d <= dist.high:
            return float(d)
    return float(min(max(d, dist.low), dist.high))


@dataclass
class ResourcePool:
    capacity: int
    busy: list = field(default_factory=list)  # heap of (release_time, resource_id)
    released: list = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 0:
            raise ConfigError(f"capacity must be >= 0, got {self.capacity}")

    def release_due(self, now: float) -> list[tuple[float, int]]:
        """Free every resource whose release time is at or before ``now``."""
        out = []
        while self.busy and self.busy[0][0] <= now:
            out.append(heapq.heappop(self.busy))
        self.released.extend(out)
        return out

    @property
    def free(self) -> int:
        return self.capacity - len(self.busy)

    def _free_id(self) -> int:
        taken = {rid for _, rid in self.busy}
        return next(i for i in range(self.capacity) if i not in taken)


def try_acquire(pool: ResourcePool, now: float, dist: DurationDist, rng: np.random.Generator):
    """Return ``(resource_id, release_time)`` or ``None`` when saturated."""
    pool.release_due(now)
    if len(pool.busy) >= pool.capacity:
        return None
    rid = pool._free_id()
    release = now + sample_duration(dist, rng)
    heapq.heappush(pool.busy, (release, rid))
    return rid, release
