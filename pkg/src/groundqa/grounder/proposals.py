from __future__ import annotations

from typing import Sequence

from ..intervals import FusionConfig, GroundedProposal, TimeInterval, nms
from .types import ClipPrediction, ClipSequence

SCORE_MODES = ("fg_sal", "fg")


def proposal_score(pred: ClipPrediction, mode: str = "fg_sal") -> float:
    if mode == "fg_sal":
        return pred.foreground * pred.saliency
    if mode == "fg":
        return pred.foreground
    raise ValueError(f"unknown score mode {mode!r}; expected one of {SCORE_MODES}")


def generate_proposals(
    preds: Sequence[ClipPrediction],
    clips: ClipSequence,
    cfg: FusionConfig,
    *,
    fg_cutoff: float = 0.5,
    score_mode: str = "fg_sal",
    option_index: int = 0,
) -> list[GroundedProposal]:
    """Turn per-clip head outputs into ranked, NMS-filtered proposals.

    Clips with foreground probability above ``fg_cutoff`` emit the segment
    ``[t_i + d_start, t_i + d_end]`` clamped to the video. Segments that
    collapse to zero length after clamping are dropped.
    """
    if len(preds) != clips.num_clips:
        raise ValueError(f"got {len(preds)} predictions for {clips.num_clips} clips")
    duration = clips.duration_s
    candidates = []
    for center, pred in zip(clips.timestamps, preds):
        if pred.foreground <= fg_cutoff:
            continue
        start = min(max(float(center) + pred.offsets[0], 0.0), duration)
        end = min(max(float(center) + pred.offsets[1], 0.0), duration)
        if end <= start:
            continue
        candidates.append(
            GroundedProposal(TimeInterval(start, end), proposal_score(pred, score_mode), option_index)
        )
    kept = nms(candidates, cfg.nms_threshold)[: cfg.top_k]
    return [
        GroundedProposal(p.interval, p.score, option_index, rank) for rank, p in enumerate(kept)
    ]
