"""Command line for the exporter.

Subcommands: audio, text, lm. Every run self-checks the emitted file and
exits nonzero if it fails the schema. Exit codes: 0 success, 1 failure,
2 usage.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .exporter import ExportJob, export_audio_embeddings, export_lm_table, export_text_embeddings
from .formats import SchemaError, check_embeddings_file, check_lm_file


def _job_from(args) -> ExportJob:
    return ExportJob(
        model=args.model,
        manifest=getattr(args, "manifest", None),
        out=args.out,
        crop_seconds=getattr(args, "crop_seconds", 10.0),
        crop_seed=getattr(args, "crop_seed", 0),
        fallback_seed=getattr(args, "fallback_seed", 0),
        jobs=getattr(args, "jobs", 1),
    )


def cmd_audio(args) -> int:
    result = export_audio_embeddings(_job_from(args))
    check_embeddings_file(result.out)
    print(f"wrote {result.records} audio records -> {result.out}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} clips; see {result.skips_path}",
              file=sys.stderr)
    return 0


def cmd_text(args) -> int:
    result = export_text_embeddings(args.texts, _job_from(args))
    check_embeddings_file(result.out)
    print(f"wrote {result.records} text records -> {result.out}")
    return 0


def cmd_lm(args) -> int:
    result = export_lm_table(args.corpus, _job_from(args), order=args.order,
                             top_m=args.top_m, k=args.k)
    check_lm_file(result.out)
    print(f"wrote {result.records} context rows -> {result.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="export-bridge",
        description="Run checkpoints over manifests and emit emb/1 and lm/1 fixtures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_audio = sub.add_parser("audio", help="export audio embeddings from a manifest")
    p_audio.add_argument("--manifest", type=Path, required=True,
                         help="JSONL records {clip_id, audio: wav-path}")
    p_audio.add_argument("--out", type=Path, required=True)
    p_audio.add_argument("--model", default="stub:64",
                         help="checkpoint id, or stub[:dim] for the dry-run encoder")
    p_audio.add_argument("--crop-seconds", type=float, default=10.0)
    p_audio.add_argument("--crop-seed", type=int, default=0)
    p_audio.add_argument("--fallback-seed", type=int, default=0)
    p_audio.add_argument("--jobs", type=int, default=1)
    p_audio.set_defaults(func=cmd_audio)

    p_text = sub.add_parser("text", help="export text embeddings from a list file")
    p_text.add_argument("--texts", type=Path, required=True)
    p_text.add_argument("--out", type=Path, required=True)
    p_text.add_argument("--model", default="stub:64")
    p_text.add_argument("--fallback-seed", type=int, default=0)
    p_text.set_defaults(func=cmd_text)

    p_lm = sub.add_parser("lm", help="export a next-token table")
    p_lm.add_argument("--corpus", type=Path, required=True,
                      help="one sentence (n-gram mode) or context (checkpoint mode) per line")
    p_lm.add_argument("--out", type=Path, required=True)
    p_lm.add_argument("--model", default="ngram",
                      help="'ngram' builds word tables from the corpus; "
                           "a checkpoint id emits top-k subword rows")
    p_lm.add_argument("--order", type=int, default=2, help="n-gram order")
    p_lm.add_argument("--top-m", type=int, default=None,
                      help="keep only the m most likely tokens per context")
    p_lm.add_argument("--k", type=int, default=45, help="top-k for checkpoint mode")
    p_lm.set_defaults(func=cmd_lm)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
