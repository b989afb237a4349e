"""Question records: JSON-Lines ingestion, validation and a NExT-GQA adapter."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ParseError, SchemaError
from .intervals import TimeInterval
from .jsonl import read_jsonl
from .metrics import QUESTION_TYPES

logger = logging.getLogger(__name__)

NEXT_TYPE_PREFIX = {"T": "Tem", "C": "Cau", "D": "Des"}


@dataclass(frozen=True)
class QuestionRecord:
    video_id: str
    question_id: str
    question: str
    options: tuple[str, ...]
    answer_index: int
    question_type: str | None
    duration_s: float
    gt_spans: tuple[TimeInterval, ...] = ()

    def __post_init__(self):
        if not self.options:
            raise ValueError("options must be non-empty")
        if not 0 <= self.answer_index < len(self.options):
            raise ValueError(f"answer_index {self.answer_index} out of range for {len(self.options)} options")
        if not (self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "video_id": self.video_id,
            "question_id": self.question_id,
            "question": self.question,
            "options": list(self.options),
            "answer_index": self.answer_index,
            "question_type": self.question_type,
            "duration_s": self.duration_s,
            "gt_spans": [s.to_list() for s in self.gt_spans],
        }


def _require(obj: dict, key: str, kind, line: int):
    if key not in obj:
        raise SchemaError("missing required field", field=key, line=line)
    value = obj[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        name = kind.__name__ if isinstance(kind, type) else " or ".join(k.__name__ for k in kind)
        raise SchemaError(f"expected {name}, got {type(value).__name__}", field=key, line=line)
    return value


def record_from_dict(obj: dict, line: int = 0) -> tuple[QuestionRecord, list[str]]:
    """Validate one raw dataset object. Returns the record and any warnings."""
    warnings: list[str] = []
    video_id = str(_require(obj, "video_id", (str, int), line))
    question_id = str(_require(obj, "question_id", (str, int), line))
    question = _require(obj, "question", str, line)
    if not question.strip():
        raise SchemaError("question text is empty", field="question", line=line)
    options = _require(obj, "options", list, line)
    if not options:
        raise SchemaError("at least one option is required", field="options", line=line)
    for i, opt in enumerate(options):
        if not isinstance(opt, str) or not opt.strip():
            raise SchemaError("option text must be a non-empty string", field=f"options[{i}]", line=line)
    answer = _require(obj, "answer_index", int, line)
    if not 0 <= answer < len(options):
        raise SchemaError(f"{answer} out of range for {len(options)} options", field="answer_index", line=line)
    duration = float(_require(obj, "duration_s", float, line))
    if not (duration > 0 and math.isfinite(duration)):
        raise SchemaError(f"must be positive, got {duration}", field="duration_s", line=line)
    qtype = obj.get("question_type")
    if qtype is not None and qtype not in QUESTION_TYPES:
        raise SchemaError(f"{qtype!r} not one of {QUESTION_TYPES}", field="question_type", line=line)

    spans: list[TimeInterval] = []
    raw_spans = obj.get("gt_spans") or []
    if not isinstance(raw_spans, list):
        raise SchemaError("expected a list of [start, end] pairs", field="gt_spans", line=line)
    for i, pair in enumerate(raw_spans):
        path = f"gt_spans[{i}]"
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in pair)
            or not all(math.isfinite(x) for x in pair)
        ):
            raise SchemaError("expected [start, end] with finite numbers", field=path, line=line)
        s, e = float(pair[0]), float(pair[1])
        if s > e:
            raise SchemaError(f"start {s} exceeds end {e}", field=path, line=line)
        cs, ce = min(max(s, 0.0), duration), min(max(e, 0.0), duration)
        if (cs, ce) != (s, e):
            warnings.append(
                f"line {line}: {question_id} {path} [{s:g}, {e:g}] clamped to [{cs:g}, {ce:g}]"
            )
        spans.append(TimeInterval(cs, ce))
    record = QuestionRecord(
        video_id=video_id,
        question_id=question_id,
        question=question,
        options=tuple(options),
        answer_index=answer,
        question_type=qtype,
        duration_s=duration,
        gt_spans=tuple(spans),
    )
    return record, warnings


def validate_records(records: list[QuestionRecord]) -> None:
    seen: set[str] = set()
    for rec in records:
        if rec.question_id in seen:
            raise SchemaError(f"duplicate question_id {rec.question_id!r}", field="question_id")
        seen.add(rec.question_id)


def ingest(path: str | Path) -> list[QuestionRecord]:
    """Read and validate a dataset JSON-Lines file.

    Raises:
        ParseError: malformed JSON (with line number).
        SchemaError: a field violates the record schema, or an id repeats.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError("dataset file not found", path=str(path))
    records: list[QuestionRecord] = []
    seen: dict[str, int] = {}
    for line, obj in read_jsonl(path):
        rec, warnings = record_from_dict(obj, line)
        if rec.question_id in seen:
            raise SchemaError(
                f"duplicate question_id {rec.question_id!r} (first seen on line {seen[rec.question_id]})",
                field="question_id",
                line=line,
            )
        seen[rec.question_id] = line
        for w in warnings:
            logger.warning(w)
        records.append(rec)
    return records


def load_nextgqa(csv_path: str | Path, gsub_path: str | Path) -> list[QuestionRecord]:
    """Convert a NExT-GQA split (question CSV plus grounding JSON) to records.

    The CSV carries ``video_id, question, answer, qid, type, a0..a4``; the
    grounding file maps ``video_id -> {"duration", "location": {qid: spans}}``.
    Question ids become ``"<video_id>_<qid>"`` and type codes are collapsed by
    their first letter (T/C/D). Videos absent from the grounding file are
    skipped with a warning, because their duration is unknown.
    """
    with Path(gsub_path).open("r", encoding="utf-8") as fh:
        try:
            gsub = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", path=str(gsub_path), line=exc.lineno) from exc
    records: list[QuestionRecord] = []
    with Path(csv_path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        option_cols = sorted((c for c in fields if c[:1] == "a" and c[1:].isdigit()), key=lambda c: int(c[1:]))
        for lineno, row in enumerate(reader, start=2):
            vid = str(row["video_id"]).strip()
            qid = str(row["qid"]).strip()
            meta = gsub.get(vid)
            if meta is None:
                logger.warning("line %d: video %s has no grounding entry; skipped", lineno, vid)
                continue
            locations = meta.get("location", {})
            obj = {
                "video_id": vid,
                "question_id": f"{vid}_{qid}",
                "question": row["question"].strip(),
                "options": [row[c].strip() for c in option_cols],
                "answer_index": int(row["answer"]),
                "question_type": NEXT_TYPE_PREFIX.get(str(row.get("type", "")).strip()[:1]),
                "duration_s": float(meta["duration"]),
                "gt_spans": [list(map(float, span)) for span in locations.get(qid, [])],
            }
            rec, warnings = record_from_dict(obj, lineno)
            for w in warnings:
                logger.warning(w)
            records.append(rec)
    validate_records(records)
    return records
