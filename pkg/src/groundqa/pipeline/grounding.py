"""Grounding backends that turn (question, option, description) into proposals."""

from __future__ import annotations

import hashlib
import threading
from typing import Protocol, Sequence

import numpy as np

from ..dataset import QuestionRecord
from ..errors import SchemaError
from ..grounder.features import hash_tokens, query_id
from ..grounder.model import GroundingModel
from ..grounder.proposals import generate_proposals
from ..grounder.types import ClipSequence, QueryTokens
from ..intervals import FusionConfig, GroundedProposal, TimeInterval, nms

PLANTED_ANSWER_SCORE = 0.9
PLANTED_DISTRACTOR_SCORE = 0.4


class Grounder(Protocol):
    calls: int

    def ground(
        self, record: QuestionRecord, option_index: int, description: str, cfg: FusionConfig
    ) -> list[GroundedProposal]: ...


def _seed(*parts) -> int:
    return int.from_bytes(hashlib.sha256("\x1f".join(map(str, parts)).encode()).digest()[:8], "little")


class _Counted:
    """Thread-safe invocation counter shared by the concrete grounders."""

    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def _tick(self) -> None:
        with self._lock:
            self.calls += 1


class PlantedGrounder(_Counted):
    """Offline stand-in that proposes the planted ground-truth spans plus noise.

    The answer option gets higher scores than the distractors. Endpoint noise
    is Gaussian with standard deviation ``noise_s`` seconds, seeded per
    (question, option), so runs are reproducible.
    """

    def __init__(self, noise_s: float = 0.0, seed: int = 0):
        super().__init__()
        self.noise_s = noise_s
        self.seed = seed

    def ground(self, record, option_index, description, cfg):
        self._tick()
        rng = np.random.default_rng(_seed(self.seed, record.question_id, option_index))
        base = PLANTED_ANSWER_SCORE if option_index == record.answer_index else PLANTED_DISTRACTOR_SCORE
        candidates = []
        for rank, span in enumerate(record.gt_spans):
            s, e = span.t_start, span.t_end
            if self.noise_s > 0:
                s, e = s + self.noise_s * rng.standard_normal(), e + self.noise_s * rng.standard_normal()
            s = min(max(s, 0.0), record.duration_s)
            e = min(max(e, 0.0), record.duration_s)
            if e < s:
                s, e = e, s
            if e - s <= 0:
                continue
            score = max(0.0, base - 0.05 * rank)
            candidates.append(GroundedProposal(TimeInterval(s, e), score, option_index))
        kept = nms(candidates, cfg.nms_threshold)[: cfg.top_k]
        return [GroundedProposal(p.interval, p.score, option_index, r) for r, p in enumerate(kept)]


class ModelGrounder(_Counted):
    """Runs the grounding network on precomputed clip features.

    Query tokens come from a token file keyed ``"<question_id>:<option>"``
    when given, otherwise from the hashing featurizer applied to the
    rewritten description.
    """

    def __init__(
        self,
        model: GroundingModel,
        videos: dict[str, ClipSequence],
        queries: dict[str, QueryTokens] | None = None,
        *,
        fg_cutoff: float = 0.5,
        score_mode: str = "fg_sal",
        max_query_tokens: int = 16,
    ):
        self.model = model
        self.videos = videos
        self.queries = queries
        self.fg_cutoff = fg_cutoff
        self.score_mode = score_mode
        self.max_query_tokens = max_query_tokens
        super().__init__()

    def _query(self, record, option_index, description) -> QueryTokens:
        qid = query_id(record.question_id, option_index)
        if self.queries is not None:
            if qid not in self.queries:
                raise SchemaError(f"no query tokens for {qid!r}", field="query_id")
            return self.queries[qid]
        limit = min(self.max_query_tokens, self.model.weights.max_len - 1)
        return hash_tokens(description, self.model.weights.d_in, limit, query=qid)

    def ground(self, record, option_index, description, cfg):
        self._tick()
        clips = self.videos.get(record.video_id)
        if clips is None:
            raise SchemaError(f"no clip features for video {record.video_id!r}", field="video_id")
        room = self.model.weights.max_len - clips.num_clips
        query = self._query(record, option_index, description)
        if query.tokens.shape[0] > room:
            query = QueryTokens(query.query_id, query.tokens[: max(room, 1)])
        preds = self.model.forward(clips, query)
        return generate_proposals(
            preds, clips, cfg, fg_cutoff=self.fg_cutoff, score_mode=self.score_mode, option_index=option_index
        )


class FixedGrounder(_Counted):
    """Returns pre-built proposal lists; handy for tests and replaying runs."""

    def __init__(self, table: dict[tuple[str, int], Sequence[GroundedProposal]]):
        super().__init__()
        self.table = table

    def ground(self, record, option_index, description, cfg):
        self._tick()
        props = sorted(self.table.get((record.question_id, option_index), ()), key=lambda p: p.rank)
        return [GroundedProposal(p.interval, p.score, option_index, r) for r, p in enumerate(props[: cfg.top_k])]
