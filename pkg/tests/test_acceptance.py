"""One test per acceptance criterion; each prints a PASS/FAIL line.

The lines are echoed live and again in the terminal summary.
"""

import csv
import json
import random
import subprocess
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import conftest
from groundqa.dataset import load_nextgqa
from groundqa.grounder import GroundingModel, encode_joint, generate_proposals, load_weights
from groundqa.grounder.features import hash_tokens, load_clip_sequences
from groundqa.grounder.weights import GrounderWeights
from groundqa.intervals import FusionConfig, GroundedProposal, TimeInterval as T, fuse_intervals, nms
from groundqa.metrics import QUESTION_TYPES, aggregate, score_question
from groundqa.objectives import gradcheck_report
from groundqa.pipeline import PipelineConfig
from groundqa.pipeline.config import Paths
from groundqa.pipeline.stages import Pipeline, run_sweep
from groundqa.rewriter import CompletionCache, render_prompt, rewrite_corpus
from groundqa.synthetic import bundled_path

from oracles import fuse_fixpoint, nms_exhaustive, recount
from test_pipeline import test_seeded_noise_report_matches_naive_recount as seeded_noise_check
from test_rewriter import GOLDEN, CountingClient, five, record

TAUS = [round(0.1 * i, 1) for i in range(1, 10)]


@contextmanager
def criterion(name, limit_s=None):
    start = time.perf_counter()
    detail = ""
    ok = False
    try:
        yield
        elapsed = time.perf_counter() - start
        ok = limit_s is None or elapsed < limit_s
        detail = f"{elapsed:.2f}s" + (f" < {limit_s}s" if limit_s else "")
        if not ok:
            detail = f"{elapsed:.2f}s exceeds {limit_s}s"
    except BaseException as exc:
        detail = f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        raise
    finally:
        line = f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})"
        conftest.ACCEPTANCE_LINES.append(line)
        print(line)
    assert ok, line


def offline(tmp_path):
    return PipelineConfig(paths=Paths(cache=str(tmp_path / "cache"), stage_dir=str(tmp_path / "st"))).offline()


def test_nextgqa_format_ingestion(tmp_path):
    with criterion("desk-scale substitute: NExT-GQA-format annotations ingest faithfully"):
        csv_path = tmp_path / "val.csv"
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["video_id", "frame_count", "width", "height", "question", "answer", "qid", "type", "a0", "a1", "a2", "a3", "a4"])
            for qid, typ in ((0, "CW"), (1, "TC"), (2, "DO")):
                w.writerow(["1001", 600, 640, 480, f"question {qid}", qid, qid, typ, "o0", "o1", "o2", "o3", "o4"])
        (tmp_path / "gsub.json").write_text(json.dumps(
            {"1001": {"duration": 40.0, "location": {"0": [[1.0, 5.0]], "1": [[10.0, 12.5], [30.0, 45.0]]}}}
        ))
        recs = load_nextgqa(csv_path, tmp_path / "gsub.json")
        assert [r.question_id for r in recs] == ["1001_0", "1001_1", "1001_2"]
        assert [r.question_type for r in recs] == ["Cau", "Tem", "Des"]
        assert [r.answer_index for r in recs] == [0, 1, 2]
        assert recs[1].gt_spans == (T(10.0, 12.5), T(30.0, 40.0))
        assert recs[2].gt_spans == () and all(len(r.options) == 5 and r.duration_s == 40.0 for r in recs)


def _grid(rng, n):
    out = []
    for _ in range(n):
        s = rng.randint(0, 80)
        out.append((s / 10, (s + rng.randint(1, 40)) / 10))
    return out


def test_interval_oracle_suite():
    with criterion("interval algebra: 1000 fuse + 1000 nms instances match brute-force oracles", limit_s=5):
        rng = random.Random(2024)
        for _ in range(1000):
            items = _grid(rng, rng.randint(0, 8))
            tau = rng.choice(TAUS)
            got = [iv.to_list() for iv in fuse_intervals([T(*p) for p in items], tau)]
            assert got == [list(p) for p in fuse_fixpoint(items, tau)], (items, tau)
            scored = [(s, e, rng.choice([0.2, 0.5, 0.5, 0.8])) for s, e in _grid(rng, rng.randint(0, 8))]
            thr = rng.choice(TAUS)
            kept = nms([GroundedProposal(T(s, e), sc, 0) for s, e, sc in scored], thr)
            assert [(p.interval.t_start, p.interval.t_end, p.score) for p in kept] == nms_exhaustive(scored, thr)


def test_metric_identities():
    with criterion("metric identities and exact recount on 1000 result sets", limit_s=5):
        rng = random.Random(99)
        for _ in range(1000):
            results = []
            for i in range(rng.randint(1, 20)):
                spans = [] if rng.random() < 0.2 else [T(s / 10, (s + rng.randint(1, 40)) / 10) for s in [rng.randint(0, 90)]]
                s = rng.randint(0, 90)
                pred = T(s / 10, (s + rng.randint(1, 40)) / 10) if rng.random() < 0.9 else None
                gt = rng.randint(0, 4)
                ans = gt if rng.random() < 0.6 else rng.randint(0, 4)
                results.append(score_question(pred, spans, ans, gt, question_id=f"q{i}", question_type=rng.choice(QUESTION_TYPES)))
            rep = aggregate(results)
            assert rep.acc_gqa <= min(rep.acc_qa, rep.iop_at[0.5])
            assert rep.iop_at[0.5] <= rep.iop_at[0.3]
            assert all(r.iou <= r.iop for r in results)
            naive = recount([(r.correct, r.annotated, r.iop, r.iou, r.question_type) for r in results])
            assert rep.acc_qa == float(naive["acc_qa"]) and rep.acc_gqa == float(naive["acc_gqa"])
            for t in (0.3, 0.5):
                assert rep.iop_at[t] == float(naive[f"iop@{t}"]) and rep.iou_at[t] == float(naive[f"iou@{t}"])


def test_gradient_checks():
    with criterion("gradient checks: 5 losses x 100 points, max rel err < 1e-5 at eps 1e-6", limit_s=10):
        report = gradcheck_report(n_points=100, seed=1, epsilon=1e-6)
        assert set(report) == {"loss_foreground", "smooth_l1", "loss_iou_1d", "loss_boundary", "loss_saliency"}
        worst = max(report, key=report.get)
        assert report[worst] < 1e-5, (worst, report[worst])


def test_grounder_determinism_and_shapes():
    with criterion("grounder toy model: determinism, ranges, proposal bounds, row equality"):
        w = load_weights(bundled_path("weights"))
        assert (w.d, w.h, w.k) == (16, 4, 2)
        videos = load_clip_sequences(bundled_path("features"))
        model = GroundingModel(w)
        for clips in videos.values():
            assert clips.num_clips == 12
            q = hash_tokens(f"the person in {clips.video_id} walks toward the door", w.d_in, 6)
            assert q.tokens.shape[0] == 6
            a, b = model.forward(clips, q), GroundingModel(load_weights(bundled_path("weights"))).forward(clips, q)
            assert a == b
            assert all(0 <= p.foreground <= 1 and 0 <= p.saliency <= 1 for p in a)
            for prop in generate_proposals(a, clips, FusionConfig(top_k=12), fg_cutoff=0.0):
                assert 0 <= prop.interval.t_start <= prop.interval.t_end <= clips.duration_s
        tensors = dict(w.tensors)
        tensors["pos_embed"] = np.zeros_like(tensors["pos_embed"])
        tensors["type_embed"] = np.zeros_like(tensors["type_embed"])
        flat = GrounderWeights(w.d_in, w.d, w.h, w.k, w.max_len, tensors)
        row = np.random.default_rng(0).standard_normal(w.d)
        vo, to = encode_joint(np.tile(row, (12, 1)), np.tile(row, (6, 1)), flat)
        out = np.vstack([vo, to])
        assert np.allclose(out, out[0], atol=1e-12)


def test_end_to_end_pipeline(tmp_path):
    with criterion("end-to-end: noise 0 gives IoP@0.5 = 1, seeded noise matches recount, pipeline --stub < 10s", limit_s=10):
        pipe = Pipeline(offline(tmp_path / "clean"))
        assert all(r.exit_code == 0 for r in pipe.run_all())
        assert json.loads(pipe.artifact("report.json").read_text())["iop_at"]["0.5"] == 1.0
        seeded_noise_check(tmp_path / "noisy")
        stage_dir = tmp_path / "cli"
        start = time.perf_counter()
        proc = subprocess.run(
            [sys.executable, "-m", "groundqa.cli", "pipeline", "--stub", "--stage-dir", str(stage_dir)],
            cwd=tmp_path, capture_output=True, text=True, timeout=60,
        )
        elapsed = time.perf_counter() - start
        assert proc.returncode == 0, proc.stderr
        assert elapsed < 10, elapsed
        assert (stage_dir / "report.json").is_file()


def test_sweep_mechanics(tmp_path):
    with criterion("sweep: K {1,3,5} x tau {.1,.3,.5,.7,.9} gives 3x5, one grounder call per (question, option)"):
        pipe = Pipeline(offline(tmp_path))
        res = run_sweep(pipe, [1, 3, 5], [0.1, 0.3, 0.5, 0.7, 0.9])
        assert [len(r) for r in res.matrix] == [5, 5, 5]
        pairs = sum(len(r.options) for r in pipe.records())
        assert res.grounder_calls == pipe.grounder.calls == pairs == 50


def test_rewriter_cache_contract(tmp_path):
    with criterion("rewriter: warm cache makes zero upstream calls, prompts match golden files"):
        cache = CompletionCache(tmp_path)
        recs = [five("a"), five("b")]
        rewrite_corpus(recs, CountingClient(), cache=cache)
        warm = CountingClient()
        out = rewrite_corpus(recs, warm, cache=cache)
        assert warm.calls == 0 and len(out.rewrites) == 10
        for i in (0, 1):
            assert render_prompt(record(), i).encode() == (GOLDEN / f"prompt_q1_opt{i}.txt").read_bytes()
