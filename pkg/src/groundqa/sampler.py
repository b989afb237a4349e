"""Frame-timestamp selection: uniform, seeded random, interval-focused, hybrid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidSamplingError
from .intervals import TimeInterval

STRATEGIES = ("uniform", "random", "focused", "hybrid")
FRAME_BUDGETS = (1, 2, 4, 8, 16, 32, 48)
DEDUP_TOL = 1e-6


@dataclass(frozen=True)
class SamplingPlan:
    strategy: str = "hybrid"
    k_frames: int = 8
    seed: int = 0
    hybrid_focus_ratio: float = 0.5

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.k_frames < 1:
            raise ValueError("k_frames must be >= 1")
        if not 0.0 <= self.hybrid_focus_ratio <= 1.0:
            raise ValueError("hybrid_focus_ratio must lie in [0, 1]")


def _check(duration_s: float, k: int) -> None:
    if not (duration_s > 0 and math.isfinite(duration_s)):
        raise InvalidSamplingError(f"duration must be positive and finite, got {duration_s}")
    if k < 1:
        raise InvalidSamplingError(f"frame count must be >= 1, got {k}")


def _midpoints(start: float, end: float, k: int) -> list[float]:
    width = (end - start) / k
    return [start + (i + 0.5) * width for i in range(k)]


def _dedup(ts: Sequence[float]) -> list[float]:
    out: list[float] = []
    for t in sorted(ts):
        if not out or t - out[-1] > DEDUP_TOL:
            out.append(t)
    return out


def sample_uniform(duration_s: float, k: int) -> list[float]:
    """Midpoints of ``k`` equal-width bins spanning the whole video."""
    _check(duration_s, k)
    return _midpoints(0.0, float(duration_s), k)


def sample_random(duration_s: float, k: int, seed: int) -> list[float]:
    _check(duration_s, k)
    rng = np.random.default_rng(seed)
    return sorted(float(t) for t in rng.uniform(0.0, float(duration_s), size=k))


def allocate(lengths: Sequence[float], k: int) -> list[int]:
    """Split ``k`` frames proportionally to ``lengths`` by largest remainder.

    When ``k`` covers every positive-length interval, each of them receives at
    least one frame; the extra frame is taken from the currently largest
    allocation (ties: the later interval). The result always sums to ``k``.
    """
    total = math.fsum(lengths)
    if total <= 0:
        raise InvalidSamplingError("cannot allocate across zero total length")
    quotas = [k * length / total for length in lengths]
    alloc = [math.floor(q) for q in quotas]
    left = k - sum(alloc)
    by_remainder = sorted(range(len(lengths)), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in by_remainder[:left]:
        alloc[i] += 1
    positive = [i for i, length in enumerate(lengths) if length > 0]
    if k >= len(positive):
        for i in positive:
            if alloc[i] == 0:
                donor = max(range(len(alloc)), key=lambda j: (alloc[j], j))
                alloc[donor] -= 1
                alloc[i] += 1
    return alloc


def sample_focused(fused: Sequence[TimeInterval], k: int, duration_s: float) -> list[float]:
    """Bin midpoints inside the fused intervals, frames split by interval length.

    Zero-length intervals are ignored; with nothing left to sample from, this
    falls back to :func:`sample_uniform`.
    """
    _check(duration_s, k)
    spans = [iv for iv in fused if iv.length > 0]
    if not spans:
        return sample_uniform(duration_s, k)
    counts = allocate([iv.length for iv in spans], k)
    ts: list[float] = []
    for iv, c in zip(spans, counts):
        if c:
            ts.extend(_midpoints(iv.t_start, iv.t_end, c))
    return _dedup(min(max(t, 0.0), duration_s) for t in ts)


def sample_hybrid(
    fused: Sequence[TimeInterval], k: int, duration_s: float, focus_ratio: float = 0.5
) -> list[float]:
    """Focused frames (``ceil(k * focus_ratio)``) plus uniform frames for the rest."""
    _check(duration_s, k)
    if k < 2:
        raise InvalidSamplingError("hybrid sampling needs at least two frames")
    n_focus = min(k - 1, max(1, math.ceil(k * focus_ratio)))
    focused = sample_focused(fused, n_focus, duration_s)
    uniform = sample_uniform(duration_s, k - n_focus)
    return _dedup(focused + uniform)


def sample(plan: SamplingPlan, fused: Sequence[TimeInterval], duration_s: float) -> list[float]:
    if plan.strategy == "uniform":
        return sample_uniform(duration_s, plan.k_frames)
    if plan.strategy == "random":
        return sample_random(duration_s, plan.k_frames, plan.seed)
    if plan.strategy == "focused":
        return sample_focused(fused, plan.k_frames, duration_s)
    return sample_hybrid(fused, plan.k_frames, duration_s, plan.hybrid_focus_ratio)


def to_frame_indices(timestamps: Sequence[float], fps: float) -> list[int]:
    """Nearest frame index per timestamp (halves round up)."""
    if fps <= 0:
        raise InvalidSamplingError("fps must be positive")
    return [int(math.floor(t * fps + 0.5)) for t in timestamps]
