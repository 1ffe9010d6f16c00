"""Caption quality metrics: corpus BLEU-n, METEOR, CIDEr, and the NLG mean.

All metrics share one tokenization (strip trailing sentence punctuation,
lowercase, split on whitespace). METEOR here is the deterministic,
dependency-free variant: exact matches, then a four-suffix stem stage; there
is no synonym stage, so absolute values differ from lexical-database METEOR
implementations.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import (
    DuplicateIdError,
    EmptyInputError,
    InsufficientCorpusError,
    MissingReferenceError,
)

_END_PUNCT = ".!?"
_CIDER_MAX_N = 4


def tokenize_caption(text: str) -> list[str]:
    """Strip trailing end punctuation, lowercase, split on whitespace."""
    t = text.strip()
    while t and t[-1] in _END_PUNCT:
        t = t[:-1].rstrip()
    return t.lower().split()


@dataclass(frozen=True)
class ReferenceSet:
    """Ground-truth captions for one clip (typically five)."""

    clip_id: str
    references: tuple[str, ...]

    def __post_init__(self):
        if not any(r.strip() for r in self.references):
            raise ValueError(f"reference set {self.clip_id!r} has no non-empty reference")

    @classmethod
    def of(cls, clip_id: str, references: Sequence[str]) -> "ReferenceSet":
        return cls(clip_id, tuple(references))


def _ref_map(refs: Sequence[ReferenceSet]) -> dict[str, ReferenceSet]:
    out: dict[str, ReferenceSet] = {}
    for rs in refs:
        if rs.clip_id in out:
            raise DuplicateIdError(f"duplicate reference set for clip {rs.clip_id!r}")
        out[rs.clip_id] = rs
    return out


def _require_refs(candidates: Mapping[str, str], ref_by_id: Mapping[str, ReferenceSet]):
    for clip_id in candidates:
        if clip_id not in ref_by_id:
            raise MissingReferenceError(f"no references for clip {clip_id!r}")


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_length(cand_len: int, ref_lens: Sequence[int]) -> int:
    # ties go to the shorter reference
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def bleu_n(
    candidates: Mapping[str, str],
    refs: Sequence[ReferenceSet],
    n: int,
    smooth_eps: float = 0.0,
) -> float:
    """Corpus-level BLEU-n: clipped modified precisions p_1..p_n, geometric
    mean, brevity penalty exp(1 - r/c) when c < r with closest-length
    reference matching. Unsmoothed by default: any zero precision zeroes the
    score unless smooth_eps > 0 substitutes for empty precisions."""
    if n not in (1, 2, 3, 4):
        raise ValueError("n must be in 1..4")
    if not candidates:
        raise EmptyInputError("no candidate captions")
    ref_by_id = _ref_map(refs)
    _require_refs(candidates, ref_by_id)
    guess = [0] * n
    correct = [0] * n
    c_total = 0
    r_total = 0
    for clip_id, cand in candidates.items():
        cand_tokens = tokenize_caption(cand)
        ref_tokens = [tokenize_caption(r) for r in ref_by_id[clip_id].references]
        c_total += len(cand_tokens)
        r_total += _closest_length(len(cand_tokens), [len(rt) for rt in ref_tokens])
        for k in range(1, n + 1):
            counts = _ngram_counts(cand_tokens, k)
            guess[k - 1] += max(0, len(cand_tokens) - k + 1)
            if not counts:
                continue
            max_ref: Counter = Counter()
            for rt in ref_tokens:
                for gram, c in _ngram_counts(rt, k).items():
                    max_ref[gram] = max(max_ref[gram], c)
            correct[k - 1] += sum(min(c, max_ref.get(gram, 0)) for gram, c in counts.items())
    if c_total == 0:
        return 0.0
    log_sum = 0.0
    for k in range(n):
        p = correct[k] / guess[k] if guess[k] > 0 else 0.0
        if p == 0.0:
            if smooth_eps <= 0.0:
                return 0.0
            p = smooth_eps
        log_sum += math.log(p)
    geo = math.exp(log_sum / n)
    bp = 1.0 if c_total > r_total else math.exp(1.0 - r_total / c_total)
    return bp * geo


def _stem(word: str) -> str:
    for suffix in ("ing", "es", "ed", "s"):
        if word.endswith(suffix) and len(word) > len(suffix):
            return word[: -len(suffix)]
    return word


def _align(cand: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Greedy unigram alignment: exact matches first, then stem matches."""
    cand_match: list[int | None] = [None] * len(cand)
    ref_used = [False] * len(ref)
    for key in (lambda w: w, _stem):
        for ci, cw in enumerate(cand):
            if cand_match[ci] is not None:
                continue
            target = key(cw)
            for ri, rw in enumerate(ref):
                if not ref_used[ri] and key(rw) == target:
                    cand_match[ci] = ri
                    ref_used[ri] = True
                    break
    return [(ci, ri) for ci, ri in enumerate(cand_match) if ri is not None]


def _chunk_count(pairs: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    prev: tuple[int, int] | None = None
    for ci, ri in pairs:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def _meteor_pair(cand_tokens: Sequence[str], ref_tokens: Sequence[str]) -> float:
    if not cand_tokens or not ref_tokens:
        return 0.0
    pairs = _align(cand_tokens, ref_tokens)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(cand_tokens)
    recall = matches / len(ref_tokens)
    fmean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (_chunk_count(pairs) / matches) ** 3
    return fmean * (1.0 - penalty)


def _meteor_per_clip(
    candidates: Mapping[str, str], ref_by_id: Mapping[str, ReferenceSet]
) -> dict[str, float]:
    out = {}
    for clip_id, cand in candidates.items():
        cand_tokens = tokenize_caption(cand)
        out[clip_id] = max(
            _meteor_pair(cand_tokens, tokenize_caption(r))
            for r in ref_by_id[clip_id].references
        )
    return out


def meteor(candidates: Mapping[str, str], refs: Sequence[ReferenceSet]) -> float:
    """Mean over clips of the best per-reference Fmean * (1 - chunk penalty)."""
    if not candidates:
        raise EmptyInputError("no candidate captions")
    ref_by_id = _ref_map(refs)
    _require_refs(candidates, ref_by_id)
    per_clip = _meteor_per_clip(candidates, ref_by_id)
    return sum(per_clip.values()) / len(per_clip)


def _tfidf_vectors(tokens: Sequence[str], idf: Mapping[tuple, float]) -> list[dict]:
    vecs = []
    for k in range(1, _CIDER_MAX_N + 1):
        vecs.append(
            {gram: c * idf.get(gram, 0.0) for gram, c in _ngram_counts(tokens, k).items()}
        )
    return vecs


def _sparse_cosine(a: Mapping[tuple, float], b: Mapping[tuple, float]) -> float:
    if not a or not b:
        return 0.0
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    dot = sum(v * b.get(gram, 0.0) for gram, v in a.items())
    return dot / (na * nb)


def _cider_per_clip(
    candidates: Mapping[str, str], ref_by_id: Mapping[str, ReferenceSet]
) -> dict[str, float]:
    corpus_size = len(ref_by_id)
    if corpus_size < 2:
        raise InsufficientCorpusError("CIDEr needs a reference corpus of >= 2 clips")
    ref_tokens = {
        clip_id: [tokenize_caption(r) for r in rs.references]
        for clip_id, rs in ref_by_id.items()
    }
    doc_freq: Counter = Counter()
    for token_lists in ref_tokens.values():
        grams: set = set()
        for tokens in token_lists:
            for k in range(1, _CIDER_MAX_N + 1):
                grams.update(_ngram_counts(tokens, k))
        for gram in grams:
            doc_freq[gram] += 1
    idf = {gram: math.log(corpus_size / df) for gram, df in doc_freq.items()}

    def idf_of(gram):
        # grams unseen in any reference still get log(N / 1) weight
        return idf.get(gram, math.log(corpus_size))

    out = {}
    for clip_id, cand in candidates.items():
        cand_tokens = tokenize_caption(cand)
        full_idf = {
            gram: idf_of(gram)
            for k in range(1, _CIDER_MAX_N + 1)
            for gram in _ngram_counts(cand_tokens, k)
        }
        full_idf.update(idf)
        cand_vecs = _tfidf_vectors(cand_tokens, full_idf)
        per_n = [0.0] * _CIDER_MAX_N
        token_lists = ref_tokens[clip_id]
        for tokens in token_lists:
            ref_vecs = _tfidf_vectors(tokens, full_idf)
            for k in range(_CIDER_MAX_N):
                per_n[k] += _sparse_cosine(cand_vecs[k], ref_vecs[k])
        mean_over_refs = [s / len(token_lists) for s in per_n]
        out[clip_id] = 10.0 * sum(mean_over_refs) / _CIDER_MAX_N
    return out


def cider(candidates: Mapping[str, str], refs: Sequence[ReferenceSet]) -> float:
    """TF-IDF n-gram cosine (n = 1..4) against each reference, averaged over
    references and n, scaled by 10; corpus score is the mean over clips.
    IDF = log(N / clip frequency) over the reference corpus."""
    if not candidates:
        raise EmptyInputError("no candidate captions")
    ref_by_id = _ref_map(refs)
    _require_refs(candidates, ref_by_id)
    per_clip = _cider_per_clip(candidates, ref_by_id)
    return sum(per_clip.values()) / len(per_clip)


def nlg_mean(values: Sequence[float]) -> float:
    """Arithmetic mean of the corpus-level metrics that are present."""
    if len(values) == 0:
        raise EmptyInputError("nlg_mean of no metrics")
    return sum(values) / len(values)


@dataclass(frozen=True)
class MetricReport:
    """Corpus-level metrics plus per-clip breakdowns.

    ``included`` lists which metrics entered the mean (CIDEr drops out on
    single-clip corpora), making the mean's basket explicit.
    """

    bleu2: float | None
    bleu3: float | None
    meteor: float | None
    cider: float | None
    nlg_mean: float
    included: tuple[str, ...]
    per_clip: dict[str, dict[str, float]]
    failed_clips: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "bleu2": self.bleu2,
            "bleu3": self.bleu3,
            "meteor": self.meteor,
            "cider": self.cider,
            "nlg_mean": self.nlg_mean,
            "nlg_mean_x10": self.nlg_mean * 10.0,
            "included": list(self.included),
            "per_clip": self.per_clip,
            "failed_clips": list(self.failed_clips),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def evaluate_captions(
    candidates: Mapping[str, str],
    refs: Sequence[ReferenceSet],
    failed_clips: Sequence[str] = (),
) -> MetricReport:
    """Compute all metrics and assemble the report."""
    if not candidates:
        raise EmptyInputError("no candidate captions")
    ref_by_id = _ref_map(refs)
    _require_refs(candidates, ref_by_id)

    scores: dict[str, float | None] = {
        "bleu2": bleu_n(candidates, refs, 2),
        "bleu3": bleu_n(candidates, refs, 3),
        "meteor": meteor(candidates, refs),
    }
    per_clip_cider: dict[str, float] | None
    try:
        per_clip_cider = _cider_per_clip(candidates, ref_by_id)
        scores["cider"] = sum(per_clip_cider.values()) / len(per_clip_cider)
    except InsufficientCorpusError:
        per_clip_cider = None
        scores["cider"] = None

    included = tuple(name for name, v in scores.items() if v is not None)
    mean = nlg_mean([scores[name] for name in included])

    per_clip_meteor = _meteor_per_clip(candidates, ref_by_id)
    per_clip: dict[str, dict[str, float]] = {}
    for clip_id, cand in candidates.items():
        one = {clip_id: cand}
        one_refs = [ref_by_id[clip_id]]
        entry = {
            "bleu2": bleu_n(one, one_refs, 2),
            "bleu3": bleu_n(one, one_refs, 3),
            "meteor": per_clip_meteor[clip_id],
        }
        if per_clip_cider is not None:
            entry["cider"] = per_clip_cider[clip_id]
        per_clip[clip_id] = entry

    return MetricReport(
        bleu2=scores["bleu2"],
        bleu3=scores["bleu3"],
        meteor=scores["meteor"],
        cider=scores["cider"],
        nlg_mean=mean,
        included=included,
        per_clip=per_clip,
        failed_clips=tuple(failed_clips),
    )
