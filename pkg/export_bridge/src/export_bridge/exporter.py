"""Export operations: audio embeddings, text embeddings, LM tables.

The bridge never scores or decodes anything; it only runs encoders over
inputs and emits fixture files.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .audio import crop_clip, read_wav
from .encoders import canonical_text, load_encoder
from .formats import write_embeddings, write_lm

log = logging.getLogger("export_bridge")

BOS = "<bos>"
EOS = "<eos>"


@dataclass
class ExportJob:
    """One export run: which model, over what, to where."""

    model: str = "stub:64"
    manifest: Path | None = None
    out: Path = Path("embeddings.jsonl")
    crop_seconds: float = 10.0
    crop_seed: int = 0
    fallback_seed: int = 0
    jobs: int = 1


@dataclass
class ExportResult:
    out: Path
    records: int
    skipped: dict[str, str] = field(default_factory=dict)
    skips_path: Path | None = None


def read_bridge_manifest(path) -> list[tuple[str, str]]:
    """Line-delimited JSON {"clip_id", "audio": wav-path, ...}."""
    clips: list[tuple[str, str]] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh.read().splitlines(), start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            clip_id, audio = str(rec["clip_id"]), str(rec["audio"])
            if clip_id in seen:
                raise ValueError(f"line {lineno}: duplicate clip_id {clip_id!r}")
            seen.add(clip_id)
            clips.append((clip_id, audio))
    return clips


def export_audio_embeddings(job: ExportJob, encoder=None) -> ExportResult:
    """One audio record per manifest clip; clips over crop_seconds get a
    seeded random window first. Unreadable clips are skipped, logged, and
    listed in a sidecar manifest of skips."""
    if job.manifest is None:
        raise ValueError("audio export needs a manifest")
    encoder = encoder or load_encoder(job.model, job.fallback_seed)
    clips = read_bridge_manifest(job.manifest)

    def embed(item):
        clip_id, audio_path = item
        try:
            clip = read_wav(audio_path)
        except Exception as exc:  # missing file, bad WAV; wave raises plain Error
            return clip_id, None, f"{type(exc).__name__}: {exc}"
        cropped = crop_clip(clip, clip_id, job.crop_seconds, job.crop_seed)
        return clip_id, encoder.embed_audio(cropped), None

    if job.jobs > 1:
        with ThreadPoolExecutor(max_workers=job.jobs) as pool:
            outcomes = list(pool.map(embed, clips))
    else:
        outcomes = [embed(item) for item in clips]

    records = [(cid, "audio", vec) for cid, vec, err in outcomes if err is None]
    skipped = {cid: err for cid, _, err in outcomes if err is not None}
    count = write_embeddings(job.out, dim=encoder.dim, fallback_seed=job.fallback_seed,
                             records=records)
    skips_path = None
    if skipped:
        skips_path = Path(f"{job.out}.skips.json")
        with open(skips_path, "w", encoding="utf-8") as fh:
            json.dump(skipped, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for cid, err in skipped.items():
            log.warning("skipped clip %s: %s", cid, err)
    return ExportResult(out=Path(job.out), records=count, skipped=skipped,
                        skips_path=skips_path)


def read_text_list(path) -> list[str]:
    """Plain text, one entry per line; '#' comments and blanks ignored.
    Entries that collide after canonicalization keep their first occurrence."""
    out: list[str] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh.read().splitlines():
            entry = line.strip()
            if not entry or entry.startswith("#"):
                continue
            key = canonical_text(entry)
            if key not in seen:
                seen.add(key)
                out.append(entry)
    return out


def export_text_embeddings(texts_path, job: ExportJob, encoder=None) -> ExportResult:
    """Batch-embed a text list (keywords plus any anticipated prefixes)."""
    encoder = encoder or load_encoder(job.model, job.fallback_seed)
    texts = read_text_list(texts_path)
    count = write_embeddings(
        job.out, dim=encoder.dim, fallback_seed=job.fallback_seed,
        records=((text, "text", encoder.embed_text(text)) for text in texts),
    )
    return ExportResult(out=Path(job.out), records=count)


def build_ngram_table(corpus_lines, order: int, top_m: int | None = None):
    """Word-level conditional tables from a corpus.

    Context keys are the raw context words minus <bos> padding, so "" holds
    the sentence-start distribution and open-ended lookups always resolve.
    Returns (vocab, ngrams).
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    sentences = [line.split() for line in corpus_lines if line.split()]
    if not sentences:
        raise ValueError("corpus is empty")
    words: set[str] = set()
    counts: dict[tuple, Counter] = {}
    for sentence in sentences:
        words.update(sentence)
        toks = [BOS] * (order - 1) + sentence + [EOS]
        for i in range(len(toks) - order + 1):
            context = tuple(toks[i : i + order - 1])
            counts.setdefault(context, Counter())[toks[i + order - 1]] += 1
    vocab = [EOS] + sorted(words)
    ngrams: dict[str, dict[str, float]] = {}
    for context, counter in counts.items():
        key = " ".join(w for w in context if w != BOS)
        total = sum(counter.values())
        rows = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
        if top_m is not None:
            rows = rows[:top_m]
        ngrams[key] = {token: count / total for token, count in rows}
    return vocab, ngrams


def build_causal_lm_table(model_id: str, contexts, k: int):
    """Top-k next-token rows from a causal-LM checkpoint (subword surfaces).

    Row keys are the raw context strings; this round-trips for tokenizers
    whose decode inverts encode, which covers the GPT-2 family.
    """
    try:
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer
    except ImportError as exc:
        raise RuntimeError(
            "causal-LM export needs the optional [models] extra"
        ) from exc
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModelForCausalLM.from_pretrained(model_id)
    model.eval()
    bos = tokenizer.bos_token or tokenizer.eos_token
    ngrams: dict[str, dict[str, float]] = {}
    vocab: set[str] = set()
    for context in [""] + list(contexts):
        ids = tokenizer(bos + context, return_tensors="pt").input_ids
        with torch.no_grad():
            logits = model(ids).logits[0, -1]
        probs = torch.softmax(logits, dim=-1)
        top = torch.topk(probs, k)
        row = {}
        for token_id, prob in zip(top.indices.tolist(), top.values.tolist()):
            surface = tokenizer.decode([token_id])
            if surface and prob > 0.0:
                row[surface] = min(1.0, float(prob))
                vocab.add(surface)
        ngrams[context] = row
    return sorted(vocab), ngrams


def export_lm_table(corpus_path, job: ExportJob, order: int = 2,
                    top_m: int | None = None, k: int = 45) -> ExportResult:
    """Emit an lm/1 table: word n-grams from the corpus by default, or top-k
    rows from a causal checkpoint when the job names one."""
    with open(corpus_path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if job.model in ("ngram", "stub") or job.model.startswith("stub:"):
        vocab, ngrams = build_ngram_table(lines, order=order, top_m=top_m)
        granularity = "word"
    else:
        vocab, ngrams = build_causal_lm_table(job.model, lines, k=k)
        granularity = "subword"
    write_lm(job.out, vocab=vocab, ngrams=ngrams, granularity=granularity)
    return ExportResult(out=Path(job.out), records=len(ngrams))
