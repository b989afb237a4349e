"""Grounded-QA metrics: answer accuracy, IoP/IoU means and threshold rates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .intervals import TimeInterval, iop, iou

QUESTION_TYPES = ("Tem", "Cau", "Des", "CW", "CH")
THRESHOLDS = (0.3, 0.5)
GQA_IOP_THRESHOLD = 0.5
CSV_COLUMNS = ("question_id", "type", "correct", "iop", "iou")


@dataclass(frozen=True)
class QuestionResult:
    question_id: str
    predicted_answer: int
    correct: bool
    pred_interval: TimeInterval | None
    gt_spans: tuple[TimeInterval, ...]
    iop: float
    iou: float
    question_type: str | None = None

    @property
    def annotated(self) -> bool:
        return len(self.gt_spans) > 0

    @property
    def grounded(self) -> bool:
        return self.annotated and self.iop >= GQA_IOP_THRESHOLD

    def to_row(self) -> dict:
        return {
            "question_id": self.question_id,
            "type": self.question_type,
            "predicted_answer": self.predicted_answer,
            "correct": self.correct,
            "pred_interval": self.pred_interval.to_list() if self.pred_interval else None,
            "gt_spans": [s.to_list() for s in self.gt_spans],
            "iop": self.iop,
            "iou": self.iou,
        }


def score_question(
    pred_interval: TimeInterval | None,
    gt_spans: Sequence[TimeInterval],
    predicted_answer: int,
    gt_answer: int,
    *,
    question_id: str = "",
    question_type: str | None = None,
) -> QuestionResult:
    """Score one question against its best-matching ground-truth span.

    A missing (or zero-length) prediction scores IoP = IoU = 0.
    """
    spans = tuple(gt_spans)
    best_iop = best_iou = 0.0
    if pred_interval is not None and pred_interval.length > 0 and spans:
        best_iop = max(iop(pred_interval, s) for s in spans)
        best_iou = max(iou(pred_interval, s) for s in spans)
    return QuestionResult(
        question_id=question_id,
        predicted_answer=int(predicted_answer),
        correct=int(predicted_answer) == int(gt_answer),
        pred_interval=pred_interval,
        gt_spans=spans,
        iop=best_iop,
        iou=best_iou,
        question_type=question_type,
    )


def best_of(candidates: Sequence[TimeInterval], gt_spans: Sequence[TimeInterval]) -> TimeInterval | None:
    """Candidate with the highest IoP (then IoU) against any span; an oracle upper bound."""
    best, best_key = None, None
    for cand in candidates:
        r = score_question(cand, gt_spans, 0, 0)
        key = (r.iop, r.iou)
        if best_key is None or key > best_key:
            best, best_key = cand, key
    return best


@dataclass(frozen=True)
class EvalReport:
    acc_qa: float
    acc_gqa: float
    miop: float
    miou: float
    iop_at: dict[float, float]
    iou_at: dict[float, float]
    per_type: dict[str, float]
    n_questions: int
    n_grounded: int
    counts: dict[str, int] = field(default_factory=dict)
    results: tuple[QuestionResult, ...] = ()

    def to_dict(self, include_rows: bool = True) -> dict:
        out = {
            "acc_qa": self.acc_qa,
            "acc_gqa": self.acc_gqa,
            "miop": self.miop,
            "miou": self.miou,
            "iop_at": {f"{k:g}": v for k, v in self.iop_at.items()},
            "iou_at": {f"{k:g}": v for k, v in self.iou_at.items()},
            "per_type": dict(self.per_type),
            "n_questions": self.n_questions,
            "n_grounded": self.n_grounded,
            "counts": dict(self.counts),
        }
        if include_rows:
            out["questions"] = [r.to_row() for r in self.results]
        return out

    def metric(self, name: str) -> float:
        """Look up a metric by its table name, e.g. ``"IoU@0.5"`` or ``"miop"``."""
        key = name.strip().lower().replace("acc@qa", "acc_qa").replace("acc@gqa", "acc_gqa")
        if "@" in key:
            kind, theta = key.split("@")
            table = {"iop": self.iop_at, "iou": self.iou_at}[kind]
            return table[float(theta)]
        return {"acc_qa": self.acc_qa, "acc_gqa": self.acc_gqa, "miop": self.miop, "miou": self.miou}[key]


def _rate(count: int, total: int) -> float:
    return float(Fraction(count, total)) if total else 0.0


def aggregate(results: Iterable[QuestionResult], thresholds: Sequence[float] = THRESHOLDS) -> EvalReport:
    """Combine per-question results.

    Answer accuracy and Acc@GQA use every question as denominator; the IoP/IoU
    means and rates use only questions that carry ground-truth spans.
    """
    results = tuple(results)
    if not results:
        raise ValueError("aggregate needs at least one result")
    n = len(results)
    grounded = [r for r in results if r.annotated]
    ng = len(grounded)
    n_correct = sum(r.correct for r in results)
    n_gqa = sum(r.correct and r.grounded for r in results)
    counts = {"correct": n_correct, "correct_and_grounded": n_gqa}
    iop_at, iou_at = {}, {}
    for theta in thresholds:
        c_iop = sum(r.iop >= theta for r in grounded)
        c_iou = sum(r.iou >= theta for r in grounded)
        counts[f"iop@{theta:g}"] = c_iop
        counts[f"iou@{theta:g}"] = c_iou
        iop_at[theta] = _rate(c_iop, ng)
        iou_at[theta] = _rate(c_iou, ng)
    per_type: dict[str, float] = {}
    for qtype in sorted({r.question_type for r in results if r.question_type is not None}):
        members = [r for r in results if r.question_type == qtype]
        per_type[qtype] = _rate(sum(r.correct for r in members), len(members))
    return EvalReport(
        acc_qa=_rate(n_correct, n),
        acc_gqa=_rate(n_gqa, n),
        miop=math.fsum(r.iop for r in grounded) / ng if ng else 0.0,
        miou=math.fsum(r.iou for r in grounded) / ng if ng else 0.0,
        iop_at=iop_at,
        iou_at=iou_at,
        per_type=per_type,
        n_questions=n,
        n_grounded=ng,
        counts=counts,
        results=results,
    )


def results_to_csv(results: Iterable[QuestionResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        writer.writerow([r.question_id, r.question_type or "", int(r.correct), repr(r.iop), repr(r.iou)])
    return buf.getvalue()
