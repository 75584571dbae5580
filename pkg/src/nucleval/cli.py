"""Command-line interface.

Subcommands: convert, split, prompts, run, eval, selftest. Exit codes are
0 (ok), 1 (usage), 2 (data error), 3 (endpoint error). NUCLEVAL_WORKERS
overrides the run parallelism; NUCLEVAL_ADAPTER overrides the converter
command that `convert` delegates to.
"""
from __future__ import annotations

import argparse
import os
import shlex
import subprocess
import sys
from pathlib import Path

from .errors import (
    EXIT_DATA,
    EXIT_ENDPOINT,
    EXIT_OK,
    EXIT_USAGE,
    DataError,
    NuclevalError,
    UsageError,
)
from .labelio import dump_json, prompts_to_obj, read_label_map
from .manifest import load_manifest, load_split, make_losso_split, save_split
from .pipeline import (
    PROMPT_MODES,
    RunConfig,
    build_prompt_set,
    evaluate_dirs,
    run_pipeline,
)
from .reports import write_report_csv, write_report_json
from .selftest import run_selftest

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this tool reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="nucleval",
        description="Detection-prompted nuclear instance segmentation: runs and scoring.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("convert", help="convert a native dataset via the adapter")
    p.add_argument("--in", dest="in_dir", required=True, help="native dataset root")
    p.add_argument("--out", required=True, help="output directory (label maps + manifest)")
    p.add_argument(
        "--adapter-cmd",
        default=None,
        help="converter command (default: $NUCLEVAL_ADAPTER or 'adapter')",
    )

    p = sub.add_parser("split", help="write a leave-one-source-out split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--holdout", required=True, help="source held out as the test set")
    p.add_argument("--out", required=True, help="split JSON path")

    p = sub.add_parser("prompts", help="export per-image prompt JSON files")
    p.add_argument("--mode", required=True, choices=PROMPT_MODES)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for <id>.json files")
    p.add_argument("--split", default=None, help="restrict to a split's test ids")
    p.add_argument("--detections", default=None, help="detections dir (mode=detections)")

    p = sub.add_parser("run", help="run the segmenter endpoint over a manifest and score it")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default=None, help="split JSON; runs its test ids only")
    p.add_argument("--mode", required=True, choices=PROMPT_MODES)
    p.add_argument("--endpoint", required=True, help="segmenter endpoint command line")
    p.add_argument("--out", required=True, help="run directory (preds/ + reports)")
    p.add_argument("--detections", default=None, help="detections dir (mode=detections)")
    p.add_argument("--threshold", type=float, default=0.5, help="match IoU threshold")
    p.add_argument("--min-area", type=int, default=3, help="drop assembled instances below this")
    p.add_argument("--score-floor", type=float, default=0.0, help="drop candidates below this")
    p.add_argument("--parallelism", type=int, default=1, help="worker/endpoint process count")
    p.add_argument("--timeout", type=float, default=120.0, help="per-request seconds")
    p.add_argument("--force", action="store_true", help="re-segment existing predictions")

    p = sub.add_parser("eval", help="score saved predictions against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True, help="directory of <id>.png predictions")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", default=None, help="also write a CSV report here")
    p.add_argument("--split", default=None, help="restrict to a split's test ids")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--min-area", type=int, default=0, help="ignore predictions below this area")

    p = sub.add_parser("selftest", help="run the randomized metric cross-check suite")
    p.add_argument("--pairs", type=int, default=1000, help="random map pairs to check")
    p.add_argument("--seed", type=int, default=20240811)

    return parser


def _workers_override(parallelism: int) -> int:
    raw = os.environ.get("NUCLEVAL_WORKERS")
    if raw is None:
        return parallelism
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"NUCLEVAL_WORKERS must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError(f"NUCLEVAL_WORKERS must be >= 1, got {value}")
    return value


def _print_aggregate(bundle) -> None:
    for name, agg in (
        ("aggregate_mean", bundle.aggregate_mean),
        ("aggregate_pooled", bundle.aggregate_pooled),
    ):
        if agg is None:
            print(f"{name}: no images scored")
        else:
            print(
                f"{name}: dice={agg.dice:.4f} pq={agg.pq:.4f} dq={agg.dq:.4f} "
                f"sq={agg.sq:.4f} over {agg.n_images} images"
            )
    if bundle.failures:
        print(f"{len(bundle.failures)} image(s) failed:")
        for failure in bundle.failures:
            print(f"  {failure['id']}: [{failure['stage']}] {failure['error']}")


def _cmd_convert(args) -> int:
    adapter_cmd = args.adapter_cmd or os.environ.get("NUCLEVAL_ADAPTER") or "adapter"
    argv = shlex.split(adapter_cmd) + ["convert", "--in", args.in_dir, "--out", args.out]
    try:
        proc = subprocess.run(argv)
    except OSError as e:
        raise DataError(
            f"cannot run converter {adapter_cmd!r} ({e}); install the adapter package "
            f"or point --adapter-cmd/NUCLEVAL_ADAPTER at a converter"
        ) from e
    if proc.returncode == 0:
        return EXIT_OK
    return proc.returncode if proc.returncode in (1, 2, 3) else EXIT_DATA


def _cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    split = make_losso_split(manifest, args.holdout)
    save_split(split, args.out)
    print(
        f"holdout {split.holdout_source!r}: {len(split.train_ids)} train, "
        f"{len(split.test_ids)} test -> {args.out}"
    )
    return EXIT_OK


def _select_ids(manifest, split_path):
    if split_path is None:
        return [s.id for s in manifest.samples]
    return list(load_split(split_path).test_ids)


def _cmd_prompts(args) -> int:
    if args.mode == "detections" and args.detections is None:
        raise UsageError("--mode detections requires --detections DIR")
    manifest = load_manifest(args.manifest)
    ids = _select_ids(manifest, args.split)
    by_id = manifest.by_id()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    detections_dir = Path(args.detections) if args.detections else None
    for sid in ids:
        sample = by_id.get(sid)
        if sample is None:
            raise DataError(f"id {sid!r} not present in the manifest")
        gt = read_label_map(sample.gt_path)
        prompt_set = build_prompt_set(sample, gt, args.mode, detections_dir)
        dump_json(prompts_to_obj(sid, prompt_set), out_dir / f"{sid}.json")
    print(f"wrote {len(ids)} prompt file(s) to {out_dir}")
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.mode == "detections" and args.detections is None:
        raise UsageError("--mode detections requires --detections DIR")
    manifest = load_manifest(args.manifest)
    split = load_split(args.split) if args.split else None
    cfg = RunConfig(
        prompt_mode=args.mode,
        endpoint_cmd=args.endpoint,
        match_threshold=args.threshold,
        min_area=args.min_area,
        score_floor=args.score_floor,
        parallelism=_workers_override(args.parallelism),
        detections_dir=Path(args.detections) if args.detections else None,
        timeout=args.timeout,
        force=args.force,
    )
    result = run_pipeline(manifest, split, cfg, args.out)
    out_dir = Path(args.out)
    write_report_json(result.bundle, out_dir / "report.json")
    write_report_csv(result.bundle, out_dir / "report.csv")
    _print_aggregate(result.bundle)
    print(f"predictions: {result.pred_dir}")
    print(f"report: {out_dir / 'report.json'}")
    if result.aborted:
        print(f"run aborted: {result.fatal_error}", file=sys.stderr)
        return EXIT_ENDPOINT
    if any(f["stage"] == "endpoint" for f in result.bundle.failures):
        return EXIT_ENDPOINT
    if result.bundle.failures:
        return EXIT_DATA
    return EXIT_OK


def _cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    ids = _select_ids(manifest, args.split) if args.split else None
    bundle = evaluate_dirs(
        manifest,
        args.pred,
        ids=ids,
        threshold=args.threshold,
        min_area=args.min_area,
    )
    write_report_json(bundle, args.out)
    if args.csv:
        write_report_csv(bundle, args.csv)
    _print_aggregate(bundle)
    return EXIT_OK if bundle.ok else EXIT_DATA


def _cmd_selftest(args) -> int:
    result = run_selftest(n_pairs=args.pairs, seed=args.seed, echo=print)
    return EXIT_OK if result.ok else EXIT_DATA


_COMMANDS = {
    "convert": _cmd_convert,
    "split": _cmd_split,
    "prompts": _cmd_prompts,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except NuclevalError as e:
        print(f"nucleval {args.command}: error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
