"""Answer generation behind a client boundary: a deterministic stub or an external command."""

from __future__ import annotations

import json
import subprocess
from typing import Protocol, Sequence

from ..dataset import QuestionRecord
from ..errors import TransportError
from ..intervals import FusedSegment, GroundedProposal, overlap


class AnswerClient(Protocol):
    def answer(
        self,
        record: QuestionRecord,
        descriptions: Sequence[str],
        timestamps: Sequence[float],
        proposals: Sequence[Sequence[GroundedProposal]],
        fused: Sequence[FusedSegment],
    ) -> int: ...


def option_support(proposals: Sequence[GroundedProposal], fused: Sequence[FusedSegment]) -> float:
    """Sum of ``proposal.score * fused.score * overlap / proposal length``."""
    total = 0.0
    for p in proposals:
        if p.interval.length <= 0:
            continue
        for seg in fused:
            total += p.score * seg.score * overlap(p.interval, seg.interval) / p.interval.length
    return total


class StubAnswerer:
    """Picks the option whose grounded proposals best agree with the fused evidence.

    Ties (including no evidence at all) go to the lowest option index.
    """

    def answer(self, record, descriptions, timestamps, proposals, fused):
        best, best_score = 0, float("-inf")
        for i in range(len(record.options)):
            props = proposals[i] if i < len(proposals) else ()
            score = option_support(props, fused)
            if score > best_score:
                best, best_score = i, score
        return best


class ExternalCommandAnswerer:
    """Spawns ``command`` per question.

    The request ``{question, options, timestamps, descriptions}`` is written
    to stdin as JSON; stdout must hold ``{"answer_index": int}``.
    """

    def __init__(self, command: Sequence[str], timeout_s: float = 120.0):
        self.command = list(command)
        self.timeout_s = timeout_s

    def answer(self, record, descriptions, timestamps, proposals, fused):
        request = {
            "question": record.question,
            "options": list(record.options),
            "timestamps": list(timestamps),
            "descriptions": list(descriptions),
        }
        try:
            proc = subprocess.run(
                self.command,
                input=json.dumps(request),
                capture_output=True,
                text=True,
                timeout=self.timeout_s,
                check=False,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise TransportError(f"answer command failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise TransportError(f"answer command exited {proc.returncode}: {proc.stderr.strip()[:200]}")
        try:
            idx = json.loads(proc.stdout)["answer_index"]
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(f"answer command returned malformed output: {proc.stdout[:200]!r}") from exc
        if not isinstance(idx, int) or isinstance(idx, bool) or not 0 <= idx < len(record.options):
            raise TransportError(f"answer command returned invalid answer_index {idx!r}")
        return idx
