from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatchError

SPACING_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ClipSequence:
    """Precomputed per-clip features for one video.

    ``timestamps`` are clip centers, uniformly spaced by ``clip_duration_s``.
    """

    video_id: str
    clip_duration_s: float
    timestamps: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        feats = np.asarray(self.features, dtype=np.float64)
        if not self.clip_duration_s > 0:
            raise ValueError(f"clip_duration_s must be positive, got {self.clip_duration_s}")
        if ts.ndim != 1 or ts.size < 1:
            raise ValueError("timestamps must be a non-empty 1-D sequence")
        if feats.ndim != 2 or feats.shape[0] != ts.size:
            raise DimensionMismatchError(
                f"features must be L_v x d_in with L_v={ts.size}, got shape {feats.shape}"
            )
        if ts.size > 1:
            gaps = np.diff(ts)
            if np.any(np.abs(gaps - self.clip_duration_s) > SPACING_TOLERANCE):
                raise ValueError("timestamps must be strictly increasing with spacing clip_duration_s")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        ts.setflags(write=False)
        feats.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "features", feats)

    @property
    def num_clips(self) -> int:
        return int(self.timestamps.size)

    @property
    def duration_s(self) -> float:
        return self.num_clips * self.clip_duration_s


@dataclass(frozen=True)
class QueryTokens:
    query_id: str
    tokens: np.ndarray

    def __post_init__(self):
        toks = np.asarray(self.tokens, dtype=np.float64)
        if toks.ndim != 2 or toks.shape[0] < 1:
            raise ValueError(f"tokens must be a non-empty L_q x d_in matrix, got shape {toks.shape}")
        if not np.all(np.isfinite(toks)):
            raise ValueError("query tokens must be finite")
        toks.setflags(write=False)
        object.__setattr__(self, "tokens", toks)


@dataclass(frozen=True)
class ClipPrediction:
    """Head outputs for a single clip: foreground, (start, end) offsets, saliency."""

    foreground: float
    offsets: tuple[float, float]
    saliency: float

    def __post_init__(self):
        if not 0.0 <= self.foreground <= 1.0:
            raise ValueError(f"foreground must lie in [0, 1], got {self.foreground}")
        if not 0.0 <= self.saliency <= 1.0:
            raise ValueError(f"saliency must lie in [0, 1], got {self.saliency}")
        ds, de = (float(x) for x in self.offsets)
        if not (math.isfinite(ds) and math.isfinite(de)) or ds > 0.0 or de < 0.0:
            raise ValueError(f"offsets must satisfy start <= 0 <= end, got ({ds}, {de})")
        object.__setattr__(self, "offsets", (ds, de))
