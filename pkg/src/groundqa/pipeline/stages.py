"""Stage orchestration: rewrite -> ground -> fuse -> sample -> evaluate.

Each stage reads declared upstream artifacts from the stage directory,
writes JSON-Lines outputs atomically, and records a manifest of input
hashes, config hash and tool version. A stage whose manifest still matches
its inputs, config and outputs is skipped, which keeps reruns byte-identical.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .. import __version__
from ..dataset import QuestionRecord, ingest
from ..errors import MissingUpstreamError, SchemaError, TransportError
from ..grounder.features import load_clip_sequences, load_query_tokens
from ..grounder.model import GroundingModel
from ..grounder.weights import load_weights
from ..intervals import (
    FusedSegment,
    FusionConfig,
    GroundedProposal,
    TimeInterval,
    fuse_question_segments,
)
from ..jsonl import read_jsonl, sha256_file, write_json, write_jsonl, atomic_write_text
from ..metrics import EvalReport, aggregate, best_of, results_to_csv, score_question
from ..rewriter import CompletionCache, HTTPChatClient, StubClient, load_template, rewrite_corpus
from ..sampler import SamplingPlan, sample, to_frame_indices
from ..synthetic import bundled_path
from .answer import AnswerClient, ExternalCommandAnswerer, StubAnswerer
from .config import BUILTIN, PipelineConfig, digest
from .grounding import Grounder, ModelGrounder, PlantedGrounder

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STAGES = ("rewrite", "ground", "fuse", "sample", "evaluate")

REWRITES = "rewrites.jsonl"
PROPOSALS = "proposals.jsonl"
FUSED = "fused.jsonl"
SAMPLES = "samples.jsonl"
ANSWERS = "answers.jsonl"
REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"

STAGE_OUTPUTS = {
    "rewrite": (REWRITES,),
    "ground": (PROPOSALS,),
    "fuse": (FUSED,),
    "sample": (SAMPLES,),
    "evaluate": (ANSWERS, REPORT_JSON, REPORT_CSV),
}


@dataclass
class StageResult:
    stage: str
    outputs: dict[str, Path]
    skipped: bool = False
    exit_code: int = 0
    detail: dict = field(default_factory=dict)


# -- artifact (de)serialisation ------------------------------------------------------


def proposals_row(question_id: str, option_index: int, props: Sequence[GroundedProposal]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "question_id": question_id,
        "option_index": option_index,
        "proposals": [{"span": p.interval.to_list(), "score": p.score} for p in props],
    }


def read_proposals(path: Path) -> dict[str, dict[int, list[GroundedProposal]]]:
    out: dict[str, dict[int, list[GroundedProposal]]] = {}
    for line, row in read_jsonl(path):
        try:
            qid, opt = str(row["question_id"]), int(row["option_index"])
            props = [
                GroundedProposal(TimeInterval.from_seq(p["span"]), float(p["score"]), opt, rank)
                for rank, p in enumerate(row["proposals"])
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed proposals row ({exc})", line=line) from exc
        out.setdefault(qid, {})[opt] = props
    return out


def read_fused(path: Path) -> dict[str, list[FusedSegment]]:
    out = {}
    for line, row in read_jsonl(path):
        try:
            out[str(row["question_id"])] = [
                FusedSegment(TimeInterval.from_seq(s["span"]), float(s["score"]), frozenset(s.get("options", ())))
                for s in row["fused"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed fused row ({exc})", line=line) from exc
    return out


def read_rewrites(path: Path) -> dict[tuple[str, int], str]:
    out = {}
    for line, row in read_jsonl(path):
        try:
            out[(str(row["question_id"]), int(row["option_index"]))] = str(row["description"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed rewrite row ({exc})", line=line) from exc
    return out


def read_samples(path: Path) -> dict[str, list[float]]:
    return {str(row["question_id"]): [float(t) for t in row["timestamps"]] for _, row in read_jsonl(path)}


def top1(fused: Sequence[FusedSegment]) -> TimeInterval | None:
    """Highest-scoring fused segment; ties go to the earlier start."""
    if not fused:
        return None
    return min(fused, key=lambda s: (-s.score, s.interval.t_start, s.interval.t_end)).interval


def per_option(record: QuestionRecord, props: dict[int, list[GroundedProposal]]) -> list[list[GroundedProposal]]:
    return [list(props.get(i, [])) for i in range(len(record.options))]


def truncate(per_opt: Sequence[Sequence[GroundedProposal]], k: int) -> list[list[GroundedProposal]]:
    return [list(p[:k]) for p in per_opt]


def evaluate_questions(
    records: Sequence[QuestionRecord],
    descriptions: dict[tuple[str, int], str],
    proposals: dict[str, list[list[GroundedProposal]]],
    fused: dict[str, list[FusedSegment]],
    timestamps: dict[str, list[float]],
    answerer: AnswerClient,
) -> tuple[EvalReport, EvalReport, list[dict]]:
    """Answer and score every question.

    Returns the top-1 report, the best-of-fused oracle report and answer rows.
    """
    results, oracle, answers = [], [], []
    for rec in records:
        segs = fused.get(rec.question_id, [])
        descs = [descriptions.get((rec.question_id, i), rec.options[i]) for i in range(len(rec.options))]
        props = proposals.get(rec.question_id, [[] for _ in rec.options])
        ts = timestamps.get(rec.question_id, [])
        answer = answerer.answer(rec, descs, ts, props, segs)
        pred = top1(segs)
        common = dict(question_id=rec.question_id, question_type=rec.question_type)
        results.append(score_question(pred, rec.gt_spans, answer, rec.answer_index, **common))
        best = best_of([s.interval for s in segs], rec.gt_spans) if rec.gt_spans else pred
        oracle.append(score_question(best, rec.gt_spans, answer, rec.answer_index, **common))
        answers.append(
            {
                "schema_version": SCHEMA_VERSION,
                "question_id": rec.question_id,
                "answer_index": answer,
                "pred_interval": pred.to_list() if pred else None,
            }
        )
    return aggregate(results), aggregate(oracle), answers


# -- the pipeline ---------------------------------------------------------------------


class Pipeline:
    def __init__(
        self,
        cfg: PipelineConfig,
        *,
        rewrite_client=None,
        grounder: Grounder | None = None,
        answerer: AnswerClient | None = None,
    ):
        self.cfg = cfg
        self._rewrite_client = rewrite_client
        self._grounder = grounder
        self._answerer = answerer
        self._records: list[QuestionRecord] | None = None

    # paths and lazily-built components

    @property
    def stage_dir(self) -> Path:
        return self.cfg.stage_dir

    def artifact(self, name: str) -> Path:
        return self.stage_dir / name

    def _input_path(self, value: str | None) -> Path | None:
        if value is None:
            return None
        return None if value == BUILTIN else self.cfg.resolve(value)

    @property
    def dataset_path(self) -> Path:
        value = self.cfg.paths.dataset
        return bundled_path("dataset") if value == BUILTIN else self.cfg.resolve(value)

    def _model_paths(self) -> dict[str, Path]:
        p = self.cfg.paths
        paths = {
            "features": bundled_path("features") if p.features in (None, BUILTIN) else self.cfg.resolve(p.features),
            "weights": bundled_path("weights") if p.weights in (None, BUILTIN) else self.cfg.resolve(p.weights),
        }
        if p.queries:
            paths["queries"] = self.cfg.resolve(p.queries)
        return paths

    def records(self) -> list[QuestionRecord]:
        if self._records is None:
            self._records = ingest(self.dataset_path)
        return self._records

    @property
    def rewrite_client(self):
        if self._rewrite_client is None:
            self._rewrite_client = StubClient() if self.cfg.client == "stub" else HTTPChatClient.from_env()
        return self._rewrite_client

    @property
    def grounder(self) -> Grounder:
        if self._grounder is None:
            g = self.cfg.grounder
            if g.mode == "planted":
                self._grounder = PlantedGrounder(g.noise_s, g.seed)
            else:
                paths = self._model_paths()
                for path in paths.values():
                    if not path.is_file():
                        raise MissingUpstreamError(path)
                self._grounder = ModelGrounder(
                    GroundingModel(load_weights(paths["weights"])),
                    load_clip_sequences(paths["features"]),
                    load_query_tokens(paths["queries"]) if "queries" in paths else None,
                    fg_cutoff=g.fg_cutoff,
                    score_mode=g.score_mode,
                    max_query_tokens=g.max_query_tokens,
                )
        return self._grounder

    @property
    def answerer(self) -> AnswerClient:
        if self._answerer is None:
            a = self.cfg.answer
            self._answerer = StubAnswerer() if a.mode == "stub" else ExternalCommandAnswerer(a.command, a.timeout_s)
        return self._answerer

    # manifests

    def _manifest_path(self, stage: str) -> Path:
        return self.artifact(f"{stage}.manifest.json")

    def _hash_inputs(self, inputs: dict[str, Path]) -> dict[str, str]:
        for path in inputs.values():
            if not path.is_file():
                raise MissingUpstreamError(path)
        return {name: sha256_file(path) for name, path in sorted(inputs.items())}

    def _up_to_date(self, stage: str, input_hashes: dict[str, str], config_hash: str) -> bool:
        mpath = self._manifest_path(stage)
        if not mpath.is_file():
            return False
        try:
            manifest = json.loads(mpath.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return False
        if (
            manifest.get("tool_version") != __version__
            or manifest.get("config_hash") != config_hash
            or manifest.get("inputs") != input_hashes
        ):
            return False
        for name, sha in manifest.get("outputs", {}).items():
            path = self.artifact(name)
            if not path.is_file() or sha256_file(path) != sha:
                return False
        return set(manifest.get("outputs", {})) == set(STAGE_OUTPUTS[stage])

    def _write_manifest(self, stage: str, input_hashes: dict[str, str], config_hash: str, stage_config) -> None:
        manifest = {
            "stage": stage,
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "config_hash": config_hash,
            "config": stage_config,
            "inputs": input_hashes,
            "outputs": {name: sha256_file(self.artifact(name)) for name in STAGE_OUTPUTS[stage]},
            "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        }
        write_json(self._manifest_path(stage), manifest)

    # stage table

    def _stage_spec(self, stage: str) -> tuple[dict[str, Path], dict, Callable[[], StageResult]]:
        cfg = self.cfg
        ds = {"dataset": self.dataset_path}
        if stage == "rewrite":
            template = load_template()
            model = "stub" if cfg.client == "stub" else os.environ.get("LEADQA_LLM_MODEL", "")
            conf = {"client": cfg.client, "model": model, "template": template.name, "template_sha256": template.sha256}
            return ds, conf, self._run_rewrite
        if stage == "ground":
            inputs = {**ds, "rewrites": self.artifact(REWRITES)}
            if cfg.grounder.mode == "model":
                inputs.update(self._model_paths())
            conf = {
                "grounder": cfg.to_dict()["grounder"],
                "top_k": cfg.fusion.top_k,
                "nms_threshold": cfg.fusion.nms_threshold,
            }
            return inputs, conf, self._run_ground
        if stage == "fuse":
            conf = {"tau_intra": cfg.fusion.tau_intra, "tau_inter": cfg.fusion.tau_inter}
            return {**ds, "proposals": self.artifact(PROPOSALS)}, conf, self._run_fuse
        if stage == "sample":
            conf = {"sampling": cfg.to_dict()["sampling"], "fps": cfg.fps}
            return {**ds, "fused": self.artifact(FUSED)}, conf, self._run_sample
        if stage == "evaluate":
            inputs = {
                **ds,
                "rewrites": self.artifact(REWRITES),
                "proposals": self.artifact(PROPOSALS),
                "fused": self.artifact(FUSED),
                "samples": self.artifact(SAMPLES),
            }
            return inputs, {"answer": cfg.to_dict()["answer"], "scored": "top1"}, self._run_evaluate
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")

    def run(self, stage: str, *, force: bool = False) -> StageResult:
        inputs, conf, body = self._stage_spec(stage)
        input_hashes = self._hash_inputs(inputs)
        config_hash = digest(conf)
        outputs = {name: self.artifact(name) for name in STAGE_OUTPUTS[stage]}
        if not force and self._up_to_date(stage, input_hashes, config_hash):
            logger.info("%s: up to date, skipped", stage)
            return StageResult(stage, outputs, skipped=True)
        self.stage_dir.mkdir(parents=True, exist_ok=True)
        result = body()
        if result.exit_code == 0:
            self._write_manifest(stage, input_hashes, config_hash, conf)
        return result

    def run_all(self, stages: Iterable[str] = STAGES) -> list[StageResult]:
        results = []
        for stage in stages:
            res = self.run(stage)
            results.append(res)
            if res.exit_code:
                break
        return results

    # stage bodies

    def _run_rewrite(self) -> StageResult:
        cache = CompletionCache(self.cfg.resolve(self.cfg.paths.cache))
        outcome = rewrite_corpus(self.records(), self.rewrite_client, self.cfg.parallelism, cache)
        write_jsonl(
            self.artifact(REWRITES),
            ({"schema_version": SCHEMA_VERSION, **r.to_dict()} for r in outcome.rewrites),
        )
        failures_path = self.artifact("rewrite_failures.json")
        if outcome.failures:
            write_json(failures_path, [{"question_id": q, "option_index": i, "error": e} for q, i, e in outcome.failures])
        elif failures_path.exists():
            failures_path.unlink()
        detail = {"rewrites": len(outcome.rewrites), "failures": len(outcome.failures)}
        code = TransportError.exit_code if outcome.failures else 0
        return StageResult("rewrite", {REWRITES: self.artifact(REWRITES)}, exit_code=code, detail=detail)

    def compute_proposals(self, fusion: FusionConfig) -> dict[str, list[list[GroundedProposal]]]:
        """Ground every (question, option) exactly once."""
        records = self.records()
        descriptions = read_rewrites(self.artifact(REWRITES))
        grounder = self.grounder
        jobs = [(rec, i) for rec in records for i in range(len(rec.options))]
        for rec, i in jobs:
            if (rec.question_id, i) not in descriptions:
                raise SchemaError(f"no rewrite for {rec.question_id} option {i}", field="rewrites")

        def run(job):
            rec, i = job
            return grounder.ground(rec, i, descriptions[(rec.question_id, i)], fusion)

        if self.cfg.parallelism > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.parallelism) as pool:
                outs = list(pool.map(run, jobs))
        else:
            outs = [run(j) for j in jobs]
        table: dict[str, list[list[GroundedProposal]]] = {rec.question_id: [] for rec in records}
        for (rec, _), props in zip(jobs, outs):
            table[rec.question_id].append(props)
        return table

    def _run_ground(self) -> StageResult:
        table = self.compute_proposals(self.cfg.fusion)
        rows = [
            proposals_row(qid, i, props) for qid, per_opt in table.items() for i, props in enumerate(per_opt)
        ]
        write_jsonl(self.artifact(PROPOSALS), rows)
        return StageResult("ground", {PROPOSALS: self.artifact(PROPOSALS)}, detail={"queries": len(rows)})

    def _run_fuse(self) -> StageResult:
        props = read_proposals(self.artifact(PROPOSALS))
        rows = []
        for rec in self.records():
            segs = fuse_question_segments(per_option(rec, props.get(rec.question_id, {})), self.cfg.fusion)
            rows.append(fused_row(rec.question_id, segs))
        write_jsonl(self.artifact(FUSED), rows)
        return StageResult("fuse", {FUSED: self.artifact(FUSED)}, detail={"questions": len(rows)})

    def _run_sample(self) -> StageResult:
        fused = read_fused(self.artifact(FUSED))
        rows = [
            sample_row(rec, fused.get(rec.question_id, []), self.cfg.sampling, self.cfg.fps)
            for rec in self.records()
        ]
        write_jsonl(self.artifact(SAMPLES), rows)
        return StageResult("sample", {SAMPLES: self.artifact(SAMPLES)}, detail={"questions": len(rows)})

    def _run_evaluate(self) -> StageResult:
        records = self.records()
        raw_props = read_proposals(self.artifact(PROPOSALS))
        proposals = {rec.question_id: per_option(rec, raw_props.get(rec.question_id, {})) for rec in records}
        report, oracle, answers = evaluate_questions(
            records,
            read_rewrites(self.artifact(REWRITES)),
            proposals,
            read_fused(self.artifact(FUSED)),
            read_samples(self.artifact(SAMPLES)),
            self.answerer,
        )
        write_jsonl(self.artifact(ANSWERS), answers)
        doc = {"schema_version": SCHEMA_VERSION, "scored_prediction": "top1", **report.to_dict()}
        doc["oracle_best_of_fused"] = oracle.to_dict(include_rows=False)
        write_json(self.artifact(REPORT_JSON), doc)
        atomic_write_text(self.artifact(REPORT_CSV), results_to_csv(report.results))
        outputs = {name: self.artifact(name) for name in STAGE_OUTPUTS["evaluate"]}
        return StageResult("evaluate", outputs, detail={"report": report})


def fused_row(question_id: str, segs: Sequence[FusedSegment]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "question_id": question_id,
        "fused": [
            {"span": s.interval.to_list(), "score": s.score, "options": sorted(s.options)} for s in segs
        ],
    }


def sample_row(rec: QuestionRecord, segs: Sequence[FusedSegment], plan: SamplingPlan, fps: float | None) -> dict:
    ts = sample(plan, [s.interval for s in segs], rec.duration_s)
    row = {"schema_version": SCHEMA_VERSION, "question_id": rec.question_id, "strategy": plan.strategy, "timestamps": ts}
    if fps:
        row["frame_indices"] = to_frame_indices(ts, fps)
    return row


# -- parameter sweep ------------------------------------------------------------------


@dataclass
class SweepResult:
    metric: str
    top_k_values: list[int]
    tau_values: list[float]
    matrix: list[list[float]]
    grounder_calls: int
    reports: dict[tuple[int, float], EvalReport]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "metric": self.metric,
            "top_k": self.top_k_values,
            "tau": self.tau_values,
            "matrix": self.matrix,
            "grounder_calls": self.grounder_calls,
            "cells": [
                {"top_k": k, "tau": t, **rep.to_dict(include_rows=False)} for (k, t), rep in self.reports.items()
            ],
        }

    def format_table(self) -> str:
        head = "K \\ tau".ljust(8) + "".join(f"{t:>9g}" for t in self.tau_values)
        lines = [f"{self.metric}", head]
        for k, row in zip(self.top_k_values, self.matrix):
            lines.append(f"{k:<8d}" + "".join(f"{v:>9.4f}" for v in row))
        return "\n".join(lines)


def run_sweep(
    pipe: Pipeline, top_k_values: Sequence[int], tau_values: Sequence[float], metric: str = "IoU@0.5"
) -> SweepResult:
    """Evaluate every (K, tau) cell from one shared set of grounding proposals.

    Proposals are generated once at the largest K and truncated per cell;
    each cell re-runs fusion, sampling, answering and scoring.
    """
    if not top_k_values or not tau_values:
        raise ValueError("sweep grids must be non-empty")
    cfg = pipe.cfg
    if pipe.run("rewrite").exit_code:
        raise TransportError("rewrite stage failed; see rewrite_failures.json")
    records = pipe.records()
    descriptions = read_rewrites(pipe.artifact(REWRITES))
    calls_before = pipe.grounder.calls
    full = pipe.compute_proposals(replace(cfg.fusion, top_k=max(top_k_values)))
    calls = pipe.grounder.calls - calls_before

    matrix, reports = [], {}
    for k in top_k_values:
        row = []
        for tau in tau_values:
            fusion = FusionConfig(tau_intra=tau, tau_inter=tau, top_k=k, nms_threshold=cfg.fusion.nms_threshold)
            props = {qid: truncate(p, k) for qid, p in full.items()}
            fused = {rec.question_id: fuse_question_segments(props[rec.question_id], fusion) for rec in records}
            timestamps = {
                rec.question_id: sample(cfg.sampling, [s.interval for s in fused[rec.question_id]], rec.duration_s)
                for rec in records
            }
            report, _, _ = evaluate_questions(records, descriptions, props, fused, timestamps, pipe.answerer)
            reports[(k, tau)] = report
            row.append(report.metric(metric))
        matrix.append(row)
    return SweepResult(metric, list(top_k_values), list(tau_values), matrix, calls, reports)
