"""Water-filling over parallel streams and the modified (stream-releasing) variant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PowerAllocation:
    """Per-stream transmit powers (W) for the streams listed in ``streams``."""

    powers: np.ndarray
    budget: float
    streams: tuple[int, ...] = ()
    water_level: float = 0.0
    silent: bool = False  # no stream can carry power (all gains zero)

    def __post_init__(self):
        object.__setattr__(self, "powers", np.asarray(self.powers, dtype=float))
        if not self.streams:
            object.__setattr__(self, "streams", tuple(range(self.powers.size)))

    @property
    def active(self) -> list[int]:
        return [s for s, p in zip(self.streams, self.powers) if p > 0]

    @property
    def total(self) -> float:
        return float(self.powers.sum())

    @classmethod
    def uniform(cls, budget: float, n: int) -> "PowerAllocation":
        return cls(np.full(n, budget / n), budget)


@dataclass(frozen=True)
class StreamCondition:
    stream: int
    gain: float
    interference_plus_noise: float
    sir: float


def waterfill(gains, noise: float, budget: float) -> PowerAllocation:
    """Rate-maximising split P_d = max(0, mu - noise/g_d) with sum P_d = budget.

    The water level is found exactly: streams are sorted by noise/g and the
    largest active prefix consistent with mu is kept.
    """
    g = np.asarray(gains, dtype=float)
    if g.size == 0:
        raise ValueError("gains must be non-empty")
    if np.any(g < 0) or budget <= 0 or noise <= 0:
        raise ValueError("gains must be >= 0, noise and budget > 0")
    powers = np.zeros_like(g)
    usable = np.flatnonzero(g > 0)
    if usable.size == 0:
        return PowerAllocation(powers, budget, silent=True)
    floor = noise / g[usable]
    order = np.argsort(floor, kind="stable")
    sorted_floor = floor[order]
    csum = np.cumsum(sorted_floor)
    mu = 0.0
    for k in range(usable.size, 0, -1):
        mu = (budget + csum[k - 1]) / k
        if mu > sorted_floor[k - 1]:
            break
    powers[usable] = np.maximum(0.0, mu - floor)
    # remove rounding drift so the budget is met exactly
    powers *= budget / powers.sum()
    return PowerAllocation(powers, budget, water_level=mu)


def stream_rate(conds: list[StreamCondition], powers, split: int | None = None) -> float:
    """Sum over streams of log2(1 + (P_d / n) g_d / (I+N)_d), n = streams in use."""
    n = split if split is not None else len(conds)
    return float(sum(math.log2(1.0 + (p / n) * c.gain / c.interference_plus_noise)
                     for c, p in zip(conds, powers)))


def _allocate(conds: list[StreamCondition], budget: float, mode: str) -> PowerAllocation:
    if mode == "uniform":
        alloc = PowerAllocation.uniform(budget, len(conds))
    elif mode == "waterfill":
        n = len(conds)
        alloc = waterfill([c.gain / (c.interference_plus_noise * n) for c in conds], 1.0, budget)
    else:
        raise ValueError(f"unknown allocation mode {mode!r}")
    return PowerAllocation(alloc.powers, budget, tuple(c.stream for c in conds),
                           alloc.water_level, alloc.silent)


def modified_waterfill(conds: list[StreamCondition], budget: float, delta: float, d_n: int,
                       mode: str = "waterfill", tol: float = 1e-12
                       ) -> tuple[PowerAllocation, list[int]]:
    """Release low-SIR streams while doing so strictly raises the rate.

    Streams whose SIR is below ``delta / d_n`` are candidates; they are dropped
    one at a time, worst SIR first, and the budget is re-spread over the
    survivors. The first release that does not improve the rate stops the
    search, so the result never rates below the allocation over all streams.
    At least one stream is always kept.
    """
    if not conds:
        raise ValueError("no streams")
    if delta <= 0:
        raise ValueError("delta must be positive")
    kept = list(conds)
    alloc = _allocate(kept, budget, mode)
    rate = stream_rate(kept, alloc.powers)
    threshold = delta / d_n
    candidates = sorted((c for c in conds if c.sir < threshold), key=lambda c: (c.sir, c.stream))
    released: list[int] = []
    for cand in candidates:
        if len(kept) == 1:
            break
        trial = [c for c in kept if c.stream != cand.stream]
        trial_alloc = _allocate(trial, budget, mode)
        trial_rate = stream_rate(trial, trial_alloc.powers)
        if trial_rate <= rate + tol * max(1.0, rate):
            break
        kept, alloc, rate = trial, trial_alloc, trial_rate
        released.append(cand.stream)
    return alloc, released
