from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..dataset import QuestionRecord
from ..errors import EmptyCompletionError, GroundQAError
from ..jsonl import atomic_write_text
from .client import ChatClient
from .prompt import PromptTemplate, render_prompt

logger = logging.getLogger(__name__)

SOURCES = ("llm", "cache", "stub")


@dataclass(frozen=True)
class RewrittenQuery:
    question_id: str
    option_index: int
    description: str
    source: str

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError("description must be non-empty")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "option_index": self.option_index,
            "description": self.description,
            "source": self.source,
        }


class CompletionCache:
    """One raw-text file per completion at ``<root>/<aa>/<sha256>.txt``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @staticmethod
    def key(prompt: str, model: str) -> str:
        return hashlib.sha256(f"{model}\n{prompt}".encode("utf-8")).hexdigest()

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.txt"

    def get(self, key: str) -> str | None:
        p = self.path(key)
        if not p.is_file():
            return None
        text = p.read_text(encoding="utf-8")
        return text if text.strip() else None

    def put(self, key: str, text: str) -> None:
        atomic_write_text(self.path(key), text)


def rewrite(
    q: QuestionRecord,
    option_index: int,
    client: ChatClient,
    cache: CompletionCache | None = None,
    template: PromptTemplate | None = None,
) -> RewrittenQuery:
    prompt = render_prompt(q, option_index, template)
    key = CompletionCache.key(prompt, client.model)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return RewrittenQuery(q.question_id, option_index, hit.strip(), "cache")
    text = client.complete(prompt).strip()
    if not text:
        raise EmptyCompletionError(f"{q.question_id}[{option_index}]: empty completion")
    if cache is not None:
        cache.put(key, text)
    return RewrittenQuery(q.question_id, option_index, text, client.source)


@dataclass
class CorpusRewrite:
    rewrites: list[RewrittenQuery]
    failures: list[tuple[str, int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def rewrite_corpus(
    records: Sequence[QuestionRecord],
    client: ChatClient,
    parallelism: int = 1,
    cache: CompletionCache | None = None,
    template: PromptTemplate | None = None,
) -> CorpusRewrite:
    """Rewrite every option of every record, collecting per-item failures.

    Output is sorted by ``(question_id, option_index)`` whatever the
    completion order.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    jobs = [(rec, i) for rec in records for i in range(len(rec.options))]

    def run(job):
        rec, i = job
        try:
            return rewrite(rec, i, client, cache, template), None
        except (GroundQAError, ValueError, IndexError) as exc:
            logger.error("rewrite failed for %s option %d: %s", rec.question_id, i, exc)
            return None, (rec.question_id, i, f"{type(exc).__name__}: {exc}")

    if parallelism == 1:
        outcomes = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run, jobs))
    rewrites = sorted((r for r, _ in outcomes if r is not None), key=lambda r: (r.question_id, r.option_index))
    failures = sorted(f for _, f in outcomes if f is not None)
    return CorpusRewrite(rewrites, failures)
