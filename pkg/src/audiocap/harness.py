"""Experiment orchestration: batch captioning, ablation grids, sweeps.

Also home of the aligned toy world: a constructed corpus where keyword
prompting and audio guidance demonstrably help, used by demos, CI fixtures,
and the direction-only acceptance checks.
"""

from __future__ import annotations

import dataclasses
import json
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .backends import AudioTextMatcher, LanguageModel, ToyMatcher, ToyNgramLM, toy_lm, toy_matcher
from .decoder import DecodeConfig, decode
from .errors import DuplicateIdError, EmptyInputError, IoError, ParseError
from .keywords import KeywordList
from .metrics import MetricReport, ReferenceSet, evaluate_captions
from .prompt import PromptTemplate

SWEEP_AXES = ("w_confidence", "w_degeneration", "w_magic", "tau", "l", "k", "keyword_list")


@dataclass(frozen=True)
class ManifestClip:
    clip_id: str
    audio: str  # fixture clip id, or the true description in toy mode
    refs: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Manifest:
    clips: tuple[ManifestClip, ...]

    def __post_init__(self):
        seen = set()
        for clip in self.clips:
            if clip.clip_id in seen:
                raise DuplicateIdError(f"duplicate clip_id {clip.clip_id!r} in manifest")
            seen.add(clip.clip_id)

    def __len__(self) -> int:
        return len(self.clips)

    def reference_sets(self) -> list[ReferenceSet]:
        return [
            ReferenceSet.of(c.clip_id, c.refs) for c in self.clips if c.refs is not None
        ]


def load_manifest(path) -> Manifest:
    """Read line-delimited JSON records {"clip_id", "audio", "refs": [...]}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    clips = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad manifest JSON: {exc}", line=lineno) from exc
        if not isinstance(rec, dict) or "clip_id" not in rec or "audio" not in rec:
            raise ParseError("manifest record needs clip_id and audio", line=lineno)
        refs = rec.get("refs")
        if refs is not None and (
            not isinstance(refs, list) or not all(isinstance(r, str) for r in refs)
        ):
            raise ParseError("refs must be a list of strings", line=lineno)
        clips.append(
            ManifestClip(
                clip_id=str(rec["clip_id"]),
                audio=str(rec["audio"]),
                refs=tuple(refs) if refs is not None else None,
            )
        )
    return Manifest(tuple(clips))


def write_manifest(path, manifest: Manifest) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for clip in manifest.clips:
                rec = {"clip_id": clip.clip_id, "audio": clip.audio}
                if clip.refs is not None:
                    rec["refs"] = list(clip.refs)
                fh.write(json.dumps(rec) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc


@dataclass(frozen=True)
class SweepSpec:
    """One sweep axis, its values, and the config every cell starts from."""

    axis: str
    values: tuple
    fixed: DecodeConfig

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}")
        if not self.values:
            raise ValueError("sweep needs at least one value")


@dataclass
class ResultTable:
    """Rows of one grid run; serializes losslessly to CSV."""

    columns: tuple[str, ...]
    rows: list[dict]

    def to_csv(self, path) -> None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(self.columns))
                writer.writeheader()
                for row in self.rows:
                    writer.writerow({c: _format_cell(row.get(c)) for c in self.columns})
        except OSError as exc:
            raise IoError(f"cannot write table {path}: {exc}") from exc

    @classmethod
    def from_csv(cls, path) -> "ResultTable":
        try:
            with open(path, "r", encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                columns = tuple(reader.fieldnames or ())
                rows = [{c: _parse_cell(row[c]) for c in columns} for row in reader]
        except OSError as exc:
            raise IoError(f"cannot read table {path}: {exc}") from exc
        return cls(columns=columns, rows=rows)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_cell(text: str):
    if text == "":
        return ""
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def write_sidecar(table_path, meta: Mapping) -> str:
    """Drop the full run configuration next to an output table."""
    sidecar = f"{table_path}.meta.json"
    try:
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write sidecar {sidecar}: {exc}") from exc
    return sidecar


def config_meta(
    cfg: DecodeConfig,
    template: PromptTemplate,
    l: int,
    keywords: KeywordList | None,
    **extra,
) -> dict:
    cfg_dict = dataclasses.asdict(cfg)
    cfg_dict["end_tokens"] = sorted(cfg.end_tokens)
    meta = {
        "config": cfg_dict,
        "template": dataclasses.asdict(template),
        "l": l,
        "keywords": keywords.source_tag if keywords is not None else None,
        "nlg_mean_scale": "raw 0-1; nlg_mean_x10 column is the same mean times 10",
    }
    meta.update(extra)
    return meta


def _caption_all(manifest, matcher, lm, keywords, template, cfg, l, jobs):
    def one(clip: ManifestClip):
        try:
            result = decode(clip.audio, matcher, lm, keywords, template, cfg, l)
            return clip.clip_id, result.text, None
        except Exception as exc:  # per-clip failures must not abort the batch
            return clip.clip_id, "", f"{type(exc).__name__}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, manifest.clips))
    else:
        results = [one(c) for c in manifest.clips]
    captions = {cid: text for cid, text, _ in results}
    failures = {cid: err for cid, _, err in results if err is not None}
    return captions, failures


def run_batch(
    manifest: Manifest,
    matcher: AudioTextMatcher,
    lm: LanguageModel,
    keywords: KeywordList | None,
    template: PromptTemplate,
    cfg: DecodeConfig,
    l: int,
    jobs: int = 1,
) -> tuple[dict[str, str], MetricReport]:
    """Decode every manifest clip and score against its references.

    Clips whose decode raises are recorded in the report's failed_clips,
    score an empty caption, and do not abort the batch.
    """
    if not manifest.clips:
        raise EmptyInputError("manifest has no clips")
    captions, failures = _caption_all(manifest, matcher, lm, keywords, template, cfg, l, jobs)
    report = evaluate_captions(
        captions, manifest.reference_sets(), failed_clips=sorted(failures)
    )
    return captions, report


def run_ablation(
    manifest: Manifest,
    matcher: AudioTextMatcher,
    lm: LanguageModel,
    keyword_variants: Sequence[tuple[str, KeywordList | None]],
    template: PromptTemplate,
    cfg: DecodeConfig,
    l: int,
    model_name: str | None = None,
    jobs: int = 1,
) -> ResultTable:
    """Grid over {keyword variant} x {guidance on/off}, one row per cell.

    A None keyword list runs the bare base prompt (the l = 0 condition);
    guidance off means w_magic = 0 with the keyword prompt kept.
    """
    if not keyword_variants:
        raise EmptyInputError("ablation needs at least one keyword variant")
    label = model_name if model_name is not None else type(matcher).__name__
    rows = []
    for name, kw in keyword_variants:
        for magic_on in (True, False):
            cell_cfg = cfg if magic_on else replace(cfg, w_magic=0.0)
            cell_l = l if kw is not None else 0
            _, report = run_batch(manifest, matcher, lm, kw, template, cell_cfg, cell_l, jobs)
            rows.append(
                {
                    "model": label,
                    "keyword_list": name,
                    "magic_search": "on" if magic_on else "off",
                    "nlg_mean": report.nlg_mean,
                    "nlg_mean_x10": report.nlg_mean * 10.0,
                }
            )
    return ResultTable(
        columns=("model", "keyword_list", "magic_search", "nlg_mean", "nlg_mean_x10"),
        rows=rows,
    )


def run_sweep(
    manifest: Manifest,
    matcher: AudioTextMatcher,
    lm: LanguageModel,
    keywords: KeywordList | None,
    template: PromptTemplate,
    spec: SweepSpec,
    l: int,
    jobs: int = 1,
) -> ResultTable:
    """One row per swept value; the best row carries a '*' marker."""
    rows = []
    for value in spec.values:
        cell_cfg, cell_l, cell_kw = spec.fixed, l, keywords
        if spec.axis == "l":
            cell_l = int(value)
            label = cell_l
        elif spec.axis == "keyword_list":
            cell_kw = value
            if cell_kw is None:
                cell_l = 0
            label = cell_kw.source_tag if cell_kw is not None else "none"
        else:
            cell_cfg = replace(spec.fixed, **{spec.axis: value})
            label = value
        _, report = run_batch(manifest, matcher, lm, cell_kw, template, cell_cfg, cell_l, jobs)
        rows.append(
            {
                "axis": spec.axis,
                "value": label,
                "nlg_mean": report.nlg_mean,
                "nlg_mean_x10": report.nlg_mean * 10.0,
                "best": "",
            }
        )
    best_index = max(range(len(rows)), key=lambda i: rows[i]["nlg_mean"])
    rows[best_index]["best"] = "*"
    return ResultTable(
        columns=("axis", "value", "nlg_mean", "nlg_mean_x10", "best"), rows=rows
    )


# ---------------------------------------------------------------------------
# Aligned toy world

_SUBJECTS = (
    "dog rain wind car bird thunder water children engine footsteps glass door "
    "train cat horse bees waves fire crowd phone"
).split()
_VERBS = (
    "barking falling howling honking chirping rumbling splashing laughing revving "
    "tapping shattering creaking whistling meowing galloping buzzing crashing "
    "crackling cheering ringing"
).split()
_MANNERS = (
    "loudly gently fiercely twice sweetly steadily nearby happily roughly upstairs "
    "suddenly softly quickly quietly heavily angrily wildly brightly warmly sharply"
).split()
_PLACES = (
    "outside overnight downtown uphill indoors eastward offshore underground "
    "westward onstage backstage overhead alongside beneath beyond somewhere "
    "everywhere elsewhere faraway around"
).split()
_DECOY = "strangely"


@dataclass
class ToyWorld:
    """A fully in-memory setup where the guided pipeline provably wins."""

    manifest: Manifest
    corpus: list[str]
    keywords: KeywordList
    matcher: ToyMatcher
    lm: ToyNgramLM
    template: PromptTemplate
    cfg: DecodeConfig
    l: int

    def descriptions(self) -> dict[str, str]:
        return {c.clip_id: self.matcher.true_description(c.clip_id) for c in self.manifest.clips}


def make_aligned_toy_world(
    n_clips: int = 20,
    seed: int = 7,
    dim: int = 1024,
    decoys: bool = True,
) -> ToyWorld:
    """Build the perfect-alignment toy corpus.

    Each clip's description is a unique four-word sentence; the n-gram corpus
    teaches a deterministic chain from the keyword-primed prompt context to
    that sentence. Decoy sentences make the model prefer a wrong final word
    on raw confidence, which only the audio-alignment term corrects, and a
    filler sentence gives the keywordless prompt a single generic chain.
    Constraints: every bank word is globally unique; the base prompt is one
    word so the trigram context reaches the last keyword word.
    """
    if not 2 <= n_clips <= len(_SUBJECTS):
        raise ValueError(f"n_clips must be in 2..{len(_SUBJECTS)}")
    descriptions = [
        f"{_SUBJECTS[i]} {_VERBS[i]} {_MANNERS[i]} {_PLACES[i]}" for i in range(n_clips)
    ]
    clips = []
    registry = {}
    for i, desc in enumerate(descriptions):
        clip_id = f"clip{i:02d}"
        registry[clip_id] = desc
        clips.append(ManifestClip(clip_id=clip_id, audio=clip_id, refs=(desc,)))
    corpus: list[str] = []
    for i, desc in enumerate(descriptions):
        corpus.append(f"{_PLACES[i]} is {desc} .")
        if decoys:
            corpus.extend([f"{_VERBS[i]} {_MANNERS[i]} {_DECOY} ."] * 3)
    corpus.append(f"is {descriptions[0]} .")  # the keywordless prompt's chain
    return ToyWorld(
        manifest=Manifest(tuple(clips)),
        corpus=corpus,
        keywords=KeywordList.of(descriptions, "toy-aligned"),
        matcher=toy_matcher(seed, dim, clips=registry),
        lm=toy_lm(corpus, 3),
        template=PromptTemplate(
            keyword_header="Objects", base_prompt="is", keyword_separator=", ", glue=" "
        ),
        cfg=DecodeConfig(
            k=5,
            w_confidence=1.0,
            w_degeneration=0.0,
            w_magic=0.5,
            tau=10.0,
            w_end=0.1,
            max_tokens=12,
        ),
        l=1,
    )
