"""Command-line entry point.

Subcommands: caption, evaluate, ablate, sweep, keywords, fixtures.
Exit codes: 0 success, 1 runtime failure, 2 usage error.

Decode flags may also come from a flat JSON config file (--config); explicit
flags win over config values. The weight names are unambiguous on purpose:
--w-confidence / --w-degeneration / --w-magic. The historical greek aliases
--paper-alpha / --paper-beta / --paper-gamma map to them in that order
(the formal score-combination naming), but beware that prose elsewhere swaps
alpha and beta; prefer the explicit names.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .backends import load_fixtures, toy_lm, toy_matcher, write_embedding_fixtures, write_lm_fixture
from .decoder import CaptionResult, DecodeConfig, decode, decode_greedy
from .errors import AudiocapError
from .harness import (
    Manifest,
    ResultTable,
    SweepSpec,
    config_meta,
    load_manifest,
    make_aligned_toy_world,
    run_ablation,
    run_sweep,
    write_manifest,
    write_sidecar,
)
from .keywords import KeywordList, load_keywords, merge_keyword_lists, save_keywords
from .metrics import ReferenceSet, evaluate_captions
from .prompt import PromptTemplate

_CFG_DEFAULTS = DecodeConfig()
_TPL_DEFAULTS = PromptTemplate()


class _UsageError(Exception):
    pass


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("backends")
    group.add_argument("--toy", action="store_true",
                       help="use the deterministic toy backends")
    group.add_argument("--seed", type=int, help="toy matcher seed (default 7)")
    group.add_argument("--dim", type=int, help="toy embedding dim (default 1024)")
    group.add_argument("--noise", type=float,
                       help="toy audio-embedding noise magnitude (default 0)")
    group.add_argument("--corpus", type=Path,
                       help="toy LM corpus file (one sentence per line); "
                            "without it --toy uses the built-in demo world")
    group.add_argument("--order", type=int, choices=(1, 2, 3),
                       help="toy LM n-gram order (default 3)")
    group.add_argument("--embeddings", type=Path, help="emb/1 fixture file")
    group.add_argument("--lm", type=Path, help="lm/1 fixture file")


def _add_decode_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("decoding")
    group.add_argument("--config", type=Path,
                       help="flat JSON config file; explicit flags win")
    group.add_argument("--keywords", type=Path, help="keyword list file")
    group.add_argument("-l", "--l", dest="l", type=int, help="keywords per prompt")
    group.add_argument("--k", type=int, help="candidate tokens per step")
    group.add_argument("--tau", type=float, help="alignment-score temperature")
    group.add_argument("--w-confidence", type=float, help="weight on LM confidence")
    group.add_argument("--w-degeneration", type=float, help="weight on repetition penalty")
    group.add_argument("--w-magic", type=float, help="weight on audio alignment")
    group.add_argument("--w-end", type=float, help="weight on premature-ending penalty")
    group.add_argument("--paper-alpha", type=float, help="alias for --w-confidence")
    group.add_argument("--paper-beta", type=float, help="alias for --w-degeneration")
    group.add_argument("--paper-gamma", type=float, help="alias for --w-magic")
    group.add_argument("--max-tokens", type=int, help="generation length cap")
    group.add_argument("--end-tokens", type=str,
                       help="comma-separated sentence terminators (default .,!,?)")
    group.add_argument("--no-magic", action="store_true", help="force w_magic to 0")
    group.add_argument("--keyword-header", type=str)
    group.add_argument("--base-prompt", type=str)
    group.add_argument("--keyword-separator", type=str)
    group.add_argument("--glue", type=str,
                       help="string joining the keyword block to the base prompt")
    group.add_argument("--keyword-embed-template", type=str,
                       help="optional '{keyword}' template used when embedding keywords")
    group.add_argument("--jobs", type=int, help="clip-level parallelism (default 1)")


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise _UsageError(f"config file {path} must hold a JSON object")
    return doc


def _build_backends(args, config):
    def pick(key, default):
        value = getattr(args, key, None)
        return config.get(key, default) if value is None else value

    embeddings = pick("embeddings", None)
    lm_path = pick("lm", None)
    if args.toy or (config.get("toy") and not (embeddings and lm_path)):
        seed = int(pick("seed", 7))
        dim = int(pick("dim", 1024))
        noise = float(pick("noise", 0.0))
        world = None
        corpus_path = pick("corpus", None)
        if corpus_path:
            with open(corpus_path, "r", encoding="utf-8") as fh:
                corpus = [ln for ln in fh.read().splitlines() if ln.strip()]
            matcher = toy_matcher(seed, dim, noise=noise)
            lm = toy_lm(corpus, int(pick("order", 3)))
        else:
            world = make_aligned_toy_world(seed=seed, dim=dim)
            matcher = world.matcher
            matcher.noise = noise
            lm = world.lm
        return matcher, lm, world
    if embeddings and lm_path:
        matcher, lm = load_fixtures(embeddings, lm_path)
        return matcher, lm, None
    raise _UsageError("pick a backend: --toy, or --embeddings plus --lm")


def _resolve_decode(args, config, world=None):
    """Merge flags, config file, and defaults into the decode settings.

    When the built-in toy demo world is active its tuned values become the
    defaults, so `caption --toy --clip clip00` works out of the box.
    """
    cfg_default = world.cfg if world is not None else _CFG_DEFAULTS
    tpl_default = world.template if world is not None else _TPL_DEFAULTS

    def pick(key, default, alias=None):
        value = getattr(args, key, None)
        if value is None and alias is not None:
            value = getattr(args, alias, None)
        if value is None and key in config:
            value = config[key]
        if value is None and alias is not None and alias in config:
            value = config[alias]
        return default if value is None else value

    end_tokens = pick("end_tokens", None)
    if end_tokens is None:
        end_set = cfg_default.end_tokens
    else:
        end_set = frozenset(t for t in end_tokens.split(",") if t)
    cfg = DecodeConfig(
        k=pick("k", cfg_default.k),
        w_confidence=pick("w_confidence", cfg_default.w_confidence, alias="paper_alpha"),
        w_degeneration=pick("w_degeneration", cfg_default.w_degeneration, alias="paper_beta"),
        w_magic=0.0 if args.no_magic else pick("w_magic", cfg_default.w_magic, alias="paper_gamma"),
        tau=pick("tau", cfg_default.tau),
        w_end=pick("w_end", cfg_default.w_end),
        max_tokens=pick("max_tokens", cfg_default.max_tokens),
        end_tokens=end_set,
    )
    template = PromptTemplate(
        keyword_header=pick("keyword_header", tpl_default.keyword_header),
        base_prompt=pick("base_prompt", tpl_default.base_prompt),
        keyword_separator=pick("keyword_separator", tpl_default.keyword_separator),
        glue=pick("glue", tpl_default.glue),
    )
    keywords_path = pick("keywords", None)
    if keywords_path is not None:
        keywords = load_keywords(keywords_path)
    elif world is not None:
        keywords = world.keywords
    else:
        keywords = None
    l = pick("l", None)
    if l is None:
        l = (world.l if world is not None else 2) if keywords is not None else 0
    jobs = pick("jobs", 1)
    embed_template = pick("keyword_embed_template", None)
    return cfg, template, keywords, int(l), int(jobs), embed_template


def cmd_caption(args) -> int:
    config = _load_config_file(args.config)
    matcher, lm, world = _build_backends(args, config)
    cfg, template, keywords, l, jobs, embed_template = _resolve_decode(args, config, world)

    if args.manifest:
        manifest = load_manifest(args.manifest)
        clip_refs = [(c.clip_id, c.audio) for c in manifest.clips]
    elif args.clip:
        clip_refs = [(c, c) for c in args.clip]
    else:
        raise _UsageError("caption needs --clip or --manifest")

    meta = config_meta(cfg, template, l, keywords, backend="toy" if args.toy else "fixtures",
                       jobs=jobs, greedy=args.greedy)
    if args.print_config:
        print(json.dumps(meta, sort_keys=True))

    results: dict[str, CaptionResult] = {}
    for clip_id, audio_ref in clip_refs:
        if args.greedy:
            results[clip_id] = decode_greedy(audio_ref, lm, template, cfg)
        else:
            results[clip_id] = decode(audio_ref, matcher, lm, keywords, template, cfg, l,
                                      keyword_embed_template=embed_template)

    for clip_id, result in results.items():
        print(f"{clip_id}\t{result.text}")
        if args.trace and not args.output:
            print(json.dumps(result.to_record(), sort_keys=True))
    if args.output:
        payload = {
            cid: (r.to_record() if args.trace else {"text": r.text})
            for cid, r in results.items()
        }
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_sidecar(args.output, meta)
    return 0


def _load_caption_map(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    out = {}
    for clip_id, value in doc.items():
        if isinstance(value, list):
            value = value[0] if value else ""
        out[str(clip_id)] = str(value)
    return out


def cmd_evaluate(args) -> int:
    candidates = _load_caption_map(args.candidates)
    with open(args.refs, "r", encoding="utf-8") as fh:
        refs_doc = json.load(fh)
    refs = [ReferenceSet.of(cid, caps) for cid, caps in refs_doc.items()]
    report = evaluate_captions(candidates, refs)
    print(f"{'metric':<10}{'raw':>12}{'x10':>12}")
    for name in ("bleu2", "bleu3", "meteor", "cider"):
        value = getattr(report, name)
        shown = "-" if value is None else f"{value:.6f}"
        x10 = "-" if value is None else f"{value * 10.0:.4f}"
        print(f"{name:<10}{shown:>12}{x10:>12}")
    print(f"{'nlg_mean':<10}{report.nlg_mean:>12.6f}{report.nlg_mean * 10.0:>12.4f}")
    print(f"included: {', '.join(report.included)}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return 0


def _parse_variants(raw_variants, world) -> list[tuple[str, KeywordList | None]]:
    variants: list[tuple[str, KeywordList | None]] = []
    for spec in raw_variants:
        name, sep, path = spec.partition("=")
        if not sep or not name:
            raise _UsageError(f"--variant needs name=path, got {spec!r}")
        if path.lower() == "none":
            variants.append((name, None))
        elif path.lower() == "builtin" and world is not None:
            variants.append((name, world.keywords))
        else:
            variants.append((name, load_keywords(path, source_tag=name)))
    return variants


def cmd_ablate(args) -> int:
    config = _load_config_file(args.config)
    matcher, lm, world = _build_backends(args, config)
    cfg, template, keywords, l, jobs, _ = _resolve_decode(args, config, world)
    manifest = _manifest_for(args, world)
    if args.variant:
        variants = _parse_variants(args.variant, world)
    elif keywords is not None:
        variants = [(keywords.source_tag or "keywords", keywords), ("none", None)]
    else:
        raise _UsageError("ablate needs --variant entries or a keyword list")
    table = run_ablation(manifest, matcher, lm, variants, template, cfg, l,
                         model_name=args.model_name, jobs=jobs)
    _emit_table(table, args.out, config_meta(cfg, template, l, keywords,
                                             variants=[n for n, _ in variants]))
    return 0


def _manifest_for(args, world) -> Manifest:
    if args.manifest:
        return load_manifest(args.manifest)
    if world is not None:
        return world.manifest
    raise _UsageError("a --manifest is required with fixture backends")


def _sweep_values(axis: str, raw: str, world):
    parts = [p for p in raw.split(",") if p != ""]
    if not parts:
        raise _UsageError("--values is empty")
    if axis in ("l", "k"):
        return tuple(int(p) for p in parts)
    if axis == "keyword_list":
        values = []
        for p in parts:
            if p.lower() == "none":
                values.append(None)
            elif p.lower() == "builtin" and world is not None:
                values.append(world.keywords)
            else:
                values.append(load_keywords(p))
        return tuple(values)
    return tuple(float(p) for p in parts)


def cmd_sweep(args) -> int:
    config = _load_config_file(args.config)
    matcher, lm, world = _build_backends(args, config)
    cfg, template, keywords, l, jobs, _ = _resolve_decode(args, config, world)
    manifest = _manifest_for(args, world)
    spec = SweepSpec(axis=args.axis, values=_sweep_values(args.axis, args.values, world),
                     fixed=cfg)
    table = run_sweep(manifest, matcher, lm, keywords, template, spec, l, jobs=jobs)
    _emit_table(table, args.out, config_meta(cfg, template, l, keywords,
                                             axis=args.axis, values=args.values))
    return 0


def _emit_table(table: ResultTable, out: Path | None, meta: dict) -> None:
    if out:
        table.to_csv(out)
        write_sidecar(out, meta)
        print(f"wrote {len(table.rows)} rows -> {out}")
    else:
        print(",".join(table.columns))
        for row in table.rows:
            print(",".join(str(row.get(c, "")) for c in table.columns))


def cmd_keywords(args) -> int:
    if args.keywords_cmd == "merge":
        merged = load_keywords(args.lists[0])
        for path in args.lists[1:]:
            merged = merge_keyword_lists(merged, load_keywords(path))
        save_keywords(args.out, merged)
        print(f"{len(merged)} unique keywords -> {args.out}")
    else:  # show
        kw = load_keywords(args.path)
        for entry in kw.entries:
            print(entry)
        print(f"# {len(kw)} unique keywords")
    return 0


def cmd_fixtures(args) -> int:
    if args.fixtures_cmd == "gen-toy":
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        world = make_aligned_toy_world(n_clips=args.clips, seed=args.seed, dim=args.dim)
        audio = {c.clip_id: world.matcher.embed_audio(c.clip_id) for c in world.manifest.clips}
        text = {entry: world.matcher.embed_text(entry) for entry in world.keywords.entries}
        emb_path = out_dir / "embeddings.jsonl"
        lm_path = out_dir / "lm.json"
        write_embedding_fixtures(emb_path, fallback_seed=args.seed, audio=audio,
                                 text=text, dim=world.matcher.dim)
        write_lm_fixture(lm_path, vocab=world.lm.candidate_surfaces,
                         ngrams=world.lm.to_fixture_table())
        write_manifest(out_dir / "manifest.jsonl", world.manifest)
        save_keywords(out_dir / "keywords.txt", world.keywords)
        # flat config, directly usable via --config
        flat = {
            "k": world.cfg.k,
            "w_confidence": world.cfg.w_confidence,
            "w_degeneration": world.cfg.w_degeneration,
            "w_magic": world.cfg.w_magic,
            "tau": world.cfg.tau,
            "w_end": world.cfg.w_end,
            "max_tokens": world.cfg.max_tokens,
            "end_tokens": ",".join(sorted(world.cfg.end_tokens)),
            "keyword_header": world.template.keyword_header,
            "base_prompt": world.template.base_prompt,
            "keyword_separator": world.template.keyword_separator,
            "glue": world.template.glue,
            "l": world.l,
            "keywords": str(out_dir / "keywords.txt"),
            "seed": args.seed,
            "dim": args.dim,
        }
        with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
            json.dump(flat, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name in ("embeddings.jsonl", "lm.json", "manifest.jsonl", "keywords.txt", "config.json"):
            print(f"wrote {out_dir / name}")
        return 0
    # validate
    matcher, lm = load_fixtures(args.embeddings, args.lm)
    print(f"embeddings ok: dim={matcher.dim}, clips={len(matcher.clip_ids)}")
    print(f"lm ok: granularity={lm.granularity}, vocab={lm.vocab_size}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="audiocap",
        description="Zero-shot audio captioning with keyword prompts and audio-guided decoding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_caption = sub.add_parser("caption", help="caption clips")
    _add_backend_flags(p_caption)
    _add_decode_flags(p_caption)
    p_caption.add_argument("--clip", action="append", help="clip id (repeatable)")
    p_caption.add_argument("--manifest", type=Path, help="caption every manifest clip")
    p_caption.add_argument("--greedy", action="store_true",
                           help="audio-agnostic baseline (no keywords, no guidance)")
    p_caption.add_argument("--trace", action="store_true", help="dump full step traces")
    p_caption.add_argument("--print-config", action="store_true",
                           help="echo the resolved configuration first")
    p_caption.add_argument("--output", type=Path, help="write captions JSON (+ config sidecar)")
    p_caption.set_defaults(func=cmd_caption)

    p_eval = sub.add_parser("evaluate", help="score candidate captions against references")
    p_eval.add_argument("--candidates", type=Path, required=True)
    p_eval.add_argument("--refs", type=Path, required=True)
    p_eval.add_argument("--json", type=Path, help="also write the machine-readable report")
    p_eval.set_defaults(func=cmd_evaluate)

    p_ablate = sub.add_parser("ablate", help="keyword-list x guidance grid")
    _add_backend_flags(p_ablate)
    _add_decode_flags(p_ablate)
    p_ablate.add_argument("--manifest", type=Path)
    p_ablate.add_argument("--variant", action="append",
                          help="name=path keyword variant; path 'none' for no keywords")
    p_ablate.add_argument("--model-name", type=str, help="label for the model column")
    p_ablate.add_argument("--out", type=Path, help="CSV output path")
    p_ablate.set_defaults(func=cmd_ablate)

    p_sweep = sub.add_parser("sweep", help="hyperparameter sweep")
    _add_backend_flags(p_sweep)
    _add_decode_flags(p_sweep)
    p_sweep.add_argument("--manifest", type=Path)
    p_sweep.add_argument("--axis", required=True, choices=harness.SWEEP_AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values for the axis")
    p_sweep.add_argument("--out", type=Path, help="CSV output path")
    p_sweep.set_defaults(func=cmd_sweep)

    p_kw = sub.add_parser("keywords", help="keyword list utilities")
    kw_sub = p_kw.add_subparsers(dest="keywords_cmd", required=True)
    p_merge = kw_sub.add_parser("merge", help="merge keyword lists")
    p_merge.add_argument("lists", nargs="+", type=Path)
    p_merge.add_argument("-o", "--out", type=Path, required=True)
    p_show = kw_sub.add_parser("show", help="print a canonicalized list")
    p_show.add_argument("path", type=Path)
    p_kw.set_defaults(func=cmd_keywords)

    p_fix = sub.add_parser("fixtures", help="fixture utilities")
    fix_sub = p_fix.add_subparsers(dest="fixtures_cmd", required=True)
    p_gen = fix_sub.add_parser("gen-toy", help="write a complete toy fixture set")
    p_gen.add_argument("-o", "--out", type=Path, required=True)
    p_gen.add_argument("--clips", type=int, default=20)
    p_gen.add_argument("--seed", type=int, default=7)
    p_gen.add_argument("--dim", type=int, default=1024)
    p_val = fix_sub.add_parser("validate", help="schema-check fixture files")
    p_val.add_argument("--embeddings", type=Path, required=True)
    p_val.add_argument("--lm", type=Path, required=True)
    p_fix.set_defaults(func=cmd_fixtures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (AudiocapError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
