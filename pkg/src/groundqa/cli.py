"""Command-line entry point: ``groundqa <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .dataset import ingest, load_nextgqa
from .errors import GroundQAError
from .jsonl import write_json, write_jsonl
from .objectives import gradcheck_report
from .pipeline.config import PipelineConfig, load_config
from .pipeline.stages import STAGES, Pipeline, run_sweep

logger = logging.getLogger("groundqa")

GRADCHECK_TOLERANCE = 1e-4
SWEEP_TOP_K = (1, 3, 5)
SWEEP_TAU = (0.1, 0.3, 0.5, 0.7, 0.9)
SUMMARY_METRICS = ("acc_qa", "acc_gqa", "miop", "miou", "IoP@0.3", "IoP@0.5", "IoU@0.3", "IoU@0.5")


def _common(parser: argparse.ArgumentParser, *, grid: bool = False) -> None:
    parser.add_argument("--config", type=Path, help="pipeline config (JSON)")
    parser.add_argument("--stage-dir", type=Path, help="directory for stage artifacts")
    parser.add_argument("--dataset", help="dataset JSON-Lines (default: bundled synthetic corpus)")
    parser.add_argument("--stub", action="store_true", help="offline run: stub rewriter and planted grounder")
    nargs = "+" if grid else None
    parser.add_argument("--top-k", type=int, nargs=nargs, help="proposals kept per query")
    parser.add_argument("--tau", type=float, nargs=nargs, help="fusion IoU threshold (both passes)")
    parser.add_argument("--frames", type=int, help="frame budget per question")
    parser.add_argument("--fps", type=float, help="emit frame indices at this frame rate")
    parser.add_argument("--seed", type=int, help="seed for random sampling and grounding noise")
    parser.add_argument("--noise", type=float, help="planted-grounder endpoint noise (seconds)")
    parser.add_argument("--parallelism", type=int, help="concurrent per-item workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundqa", description="Grounded video QA pipeline toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-validate", help="validate a dataset file")
    p.add_argument("dataset", nargs="?", help="JSON-Lines dataset (default: bundled corpus)")
    p.add_argument("--nextgqa-csv", type=Path, help="NExT-GQA question CSV to convert")
    p.add_argument("--nextgqa-gsub", type=Path, help="NExT-GQA grounding JSON to convert")
    p.add_argument("--out", type=Path, help="write normalised records here")

    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        _common(p)
        p.add_argument("--force", action="store_true", help="rerun even when up to date")

    p = sub.add_parser("pipeline", help="run every stage in order")
    _common(p)

    p = sub.add_parser("sweep", help="grid over top-K and fusion threshold")
    _common(p, grid=True)
    p.add_argument("--metric", default="IoU@0.5", help="metric reported in the matrix (default IoU@0.5)")

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss gradient")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-6)
    return parser


def config_from_args(args: argparse.Namespace, *, single: bool = True) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.stub:
        cfg = cfg.offline()
    paths, fusion, sampling, grounder = cfg.paths, cfg.fusion, cfg.sampling, cfg.grounder
    if args.stage_dir is not None:
        paths = replace(paths, stage_dir=str(args.stage_dir.resolve()))
    if args.dataset is not None:
        paths = replace(paths, dataset=str(Path(args.dataset).resolve()))
    if single and args.top_k is not None:
        fusion = replace(fusion, top_k=args.top_k)
    if single and args.tau is not None:
        fusion = replace(fusion, tau_intra=args.tau, tau_inter=args.tau)
    if args.frames is not None:
        sampling = replace(sampling, k_frames=args.frames)
    if args.seed is not None:
        sampling = replace(sampling, seed=args.seed)
        grounder = replace(grounder, seed=args.seed)
    if args.noise is not None:
        grounder = replace(grounder, noise_s=args.noise)
    cfg = replace(cfg, paths=paths, fusion=fusion, sampling=sampling, grounder=grounder)
    if args.fps is not None:
        cfg = replace(cfg, fps=args.fps)
    if args.parallelism is not None:
        cfg = replace(cfg, parallelism=args.parallelism)
    cfg.validate_paths()
    return cfg


def _summary(report) -> str:
    return "  ".join(f"{m}={report.metric(m):.4f}" for m in SUMMARY_METRICS)


def cmd_ingest(args) -> int:
    if args.nextgqa_csv or args.nextgqa_gsub:
        if not (args.nextgqa_csv and args.nextgqa_gsub):
            build_parser().error("--nextgqa-csv and --nextgqa-gsub go together")
        records = load_nextgqa(args.nextgqa_csv, args.nextgqa_gsub)
    else:
        records = ingest(args.dataset or Pipeline(PipelineConfig()).dataset_path)
    annotated = sum(1 for r in records if r.gt_spans)
    print(f"ok: {len(records)} records, {annotated} with grounding spans")
    if args.out:
        write_jsonl(args.out, (r.to_dict() for r in records))
        print(f"wrote {args.out}")
    return 0


def cmd_stage(args) -> int:
    pipe = Pipeline(config_from_args(args))
    res = pipe.run(args.command, force=args.force)
    state = "up to date" if res.skipped else "done"
    print(f"{res.stage}: {state} -> {', '.join(str(p) for p in res.outputs.values())}")
    if "report" in res.detail:
        print(_summary(res.detail["report"]))
    if res.exit_code:
        print(f"{res.stage}: {res.detail}", file=sys.stderr)
    return res.exit_code


def cmd_pipeline(args) -> int:
    started = time.perf_counter()
    pipe = Pipeline(config_from_args(args))
    results = pipe.run_all()
    for res in results:
        print(f"{res.stage}: {'up to date' if res.skipped else 'done'}")
    last = results[-1]
    if last.exit_code:
        print(f"{last.stage} failed: {last.detail}", file=sys.stderr)
        return last.exit_code
    report = json.loads(pipe.artifact("report.json").read_text(encoding="utf-8"))
    print("  ".join(f"{m}={report[m]:.4f}" for m in ("acc_qa", "acc_gqa", "miop", "miou")))
    print(f"report: {pipe.artifact('report.json')} ({time.perf_counter() - started:.2f}s)")
    return 0


def cmd_sweep(args) -> int:
    cfg = config_from_args(args, single=False)
    pipe = Pipeline(cfg)
    result = run_sweep(pipe, args.top_k or SWEEP_TOP_K, args.tau or SWEEP_TAU, args.metric)
    out = pipe.artifact("sweep.json")
    write_json(out, result.to_dict())
    print(result.format_table())
    print(f"grounder calls: {result.grounder_calls}; wrote {out}")
    return 0


def cmd_gradcheck(args) -> int:
    report = gradcheck_report(args.points, args.seed, args.epsilon)
    width = max(len(name) for name in report)
    print(f"{'loss'.ljust(width)}  max_rel_err")
    for name, err in report.items():
        flag = "" if err < GRADCHECK_TOLERANCE else "  FAIL"
        print(f"{name.ljust(width)}  {err:.3e}{flag}")
    return 0 if all(err < GRADCHECK_TOLERANCE for err in report.values()) else 1


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {"ingest-validate": cmd_ingest, "pipeline": cmd_pipeline, "sweep": cmd_sweep, "gradcheck": cmd_gradcheck}
    handler = handlers.get(args.command, cmd_stage)
    try:
        return handler(args)
    except GroundQAError as exc:
        print(f"groundqa: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
