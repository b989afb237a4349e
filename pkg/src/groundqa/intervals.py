"""Exact 1-D interval algebra: overlap, IoU/IoP, merging, NMS and fusion.

Threshold decisions (``iou >= tau``) are made in exact rational arithmetic on
the shortest decimal form of each endpoint, so ``0.1 + 0.2``-style float noise
never flips a merge. Returned ratios are plain floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import DegenerateIntervalError

__all__ = [
    "TimeInterval",
    "GroundedProposal",
    "FusionConfig",
    "FusedSegment",
    "overlap",
    "iou",
    "iop",
    "iou_at_least",
    "merge_pair",
    "fuse_intervals",
    "fuse_segments",
    "nms",
    "fuse_question",
    "fuse_question_segments",
]


@dataclass(frozen=True, order=True)
class TimeInterval:
    t_start: float
    t_end: float

    def __post_init__(self):
        s, e = float(self.t_start), float(self.t_end)
        if not (math.isfinite(s) and math.isfinite(e)):
            raise ValueError(f"interval endpoints must be finite, got [{s}, {e}]")
        if s < 0:
            raise ValueError(f"interval start must be non-negative, got {s}")
        if s > e:
            raise ValueError(f"interval start {s} exceeds end {e}")
        object.__setattr__(self, "t_start", s)
        object.__setattr__(self, "t_end", e)

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    def contains(self, other: "TimeInterval") -> bool:
        return self.t_start <= other.t_start and other.t_end <= self.t_end

    def to_list(self) -> list[float]:
        return [self.t_start, self.t_end]

    @classmethod
    def from_seq(cls, pair: Sequence[float]) -> "TimeInterval":
        if len(pair) != 2:
            raise ValueError(f"interval must have two endpoints, got {list(pair)!r}")
        return cls(pair[0], pair[1])


@dataclass(frozen=True)
class GroundedProposal:
    interval: TimeInterval
    score: float
    option_index: int = 0
    rank: int = 0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"proposal score must lie in [0, 1], got {self.score}")
        if self.option_index < 0 or self.rank < 0:
            raise ValueError("option_index and rank must be non-negative")


@dataclass(frozen=True)
class FusionConfig:
    """Thresholds for proposal suppression and two-stage fusion.

    ``tau_inter`` defaults to ``tau_intra`` when left as ``None``.
    """

    tau_intra: float = 0.5
    tau_inter: float | None = None
    top_k: int = 5
    nms_threshold: float = 0.7

    def __post_init__(self):
        if self.tau_inter is None:
            object.__setattr__(self, "tau_inter", self.tau_intra)
        for name in ("tau_intra", "tau_inter", "nms_threshold"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")


@dataclass(frozen=True)
class FusedSegment:
    """A fused interval plus the provenance kept for diagnostics."""

    interval: TimeInterval
    score: float = 0.0
    options: frozenset[int] = field(default_factory=frozenset)


@lru_cache(maxsize=65536)
def _exact(x: float) -> Fraction:
    return Fraction(repr(x))


def overlap(a: TimeInterval, b: TimeInterval) -> float:
    return max(0.0, min(a.t_end, b.t_end) - max(a.t_start, b.t_start))


def _union(a: TimeInterval, b: TimeInterval) -> float:
    # never below either length, even after rounding, which keeps iou <= iop
    return max(a.length + b.length - overlap(a, b), a.length, b.length)


def iou(a: TimeInterval, b: TimeInterval) -> float:
    """Temporal intersection over union.

    Raises:
        DegenerateIntervalError: if the union has zero length.
    """
    union = _union(a, b)
    if union <= 0.0:
        raise DegenerateIntervalError(f"IoU undefined for zero-length union of {a} and {b}")
    return min(1.0, overlap(a, b) / union)


def iop(pred: TimeInterval, gt: TimeInterval) -> float:
    """Intersection over the prediction's own length."""
    if pred.length <= 0.0:
        raise DegenerateIntervalError(f"IoP undefined for zero-length prediction {pred}")
    if gt.contains(pred):
        return 1.0
    return min(1.0, overlap(pred, gt) / pred.length)


def iou_at_least(a: TimeInterval, b: TimeInterval, tau: float) -> bool:
    """Exact test of ``iou(a, b) >= tau``; identical intervals always pass."""
    if a == b:
        return True
    sa, ea, sb, eb = _exact(a.t_start), _exact(a.t_end), _exact(b.t_start), _exact(b.t_end)
    inter = min(ea, eb) - max(sa, sb)
    if inter <= 0:
        return False
    union = (ea - sa) + (eb - sb) - inter
    return inter >= _exact(tau) * union


def _check_tau(tau: float) -> None:
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {tau}")


def _hull(a: TimeInterval, b: TimeInterval) -> TimeInterval:
    return TimeInterval(min(a.t_start, b.t_start), max(a.t_end, b.t_end))


def merge_pair(
    a: TimeInterval, b: TimeInterval, tau: float
) -> tuple[TimeInterval] | tuple[TimeInterval, TimeInterval]:
    """Merge two intervals into their hull when their IoU reaches ``tau``."""
    _check_tau(tau)
    if a != b:
        iou(a, b)  # surfaces the degenerate-input error
    if iou_at_least(a, b, tau):
        return (_hull(a, b),)
    return (a, b)


def _seg_key(seg: FusedSegment):
    return (seg.interval.t_start, seg.interval.t_end)


def _first_mergeable(segs: list[FusedSegment], tau: float) -> tuple[int, int] | None:
    for i in range(len(segs)):
        a = segs[i].interval
        for j in range(i + 1, len(segs)):
            b = segs[j].interval
            # sorted by start: nothing further right can overlap a
            if b.t_start > a.t_end:
                break
            if iou_at_least(a, b, tau):
                return i, j
    return None


def fuse_segments(items: Iterable[FusedSegment], tau: float) -> list[FusedSegment]:
    """Repeatedly merge segments until no pair reaches IoU ``tau``.

    Segments are kept sorted by ``(t_start, t_end)``; each step merges the
    lexicographically first qualifying index pair and re-sorts. Merged
    segments take the max score and the union of option provenance.
    """
    _check_tau(tau)
    segs = sorted(items, key=_seg_key)
    while True:
        pair = _first_mergeable(segs, tau)
        if pair is None:
            return segs
        i, j = pair
        a, b = segs[i], segs[j]
        merged = FusedSegment(
            _hull(a.interval, b.interval), max(a.score, b.score), a.options | b.options
        )
        del segs[j]
        segs[i] = merged
        segs.sort(key=_seg_key)


def fuse_intervals(items: Iterable[TimeInterval], tau: float) -> list[TimeInterval]:
    return [s.interval for s in fuse_segments((FusedSegment(iv) for iv in items), tau)]


def _nms_key(p: GroundedProposal):
    return (-p.score, p.interval.t_start, p.interval.length)


def nms(proposals: Iterable[GroundedProposal], threshold: float) -> list[GroundedProposal]:
    """Greedy 1-D non-maximum suppression.

    Ties on score are broken by earlier start, then shorter length. A
    remaining proposal is dropped when its IoU with a kept one is
    ``>= threshold``.
    """
    _check_tau(threshold)
    remaining = sorted(proposals, key=_nms_key)
    kept: list[GroundedProposal] = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [p for p in remaining if not iou_at_least(best.interval, p.interval, threshold)]
    return kept


def fuse_question_segments(
    per_option: Sequence[Sequence[GroundedProposal]], cfg: FusionConfig
) -> list[FusedSegment]:
    """Intra-option fusion, then inter-option fusion over the pooled result."""
    pooled: list[FusedSegment] = []
    for proposals in per_option:
        segs = [FusedSegment(p.interval, p.score, frozenset({p.option_index})) for p in proposals]
        pooled.extend(fuse_segments(segs, cfg.tau_intra))
    return fuse_segments(pooled, cfg.tau_inter)


def fuse_question(
    per_option: Sequence[Sequence[GroundedProposal]], cfg: FusionConfig
) -> list[TimeInterval]:
    return [s.interval for s in fuse_question_segments(per_option, cfg)]
