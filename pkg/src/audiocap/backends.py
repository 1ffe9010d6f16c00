"""Audio-text matcher and language-model backends.

Two concrete families behind each abstract interface: deterministic toy
doubles for tests and demos, and file-fed fixture backends that replay
embeddings and token tables exported offline.

Fixture formats (all UTF-8, reals at full round-trip precision):

* Embeddings (``emb/1``): line-delimited JSON. First line is the header
  ``{"schema": "emb/1", "fallback_seed": int}`` (an optional ``"dim"`` key
  lets header-only files declare their dimension). Every further line is
  ``{"id": str, "kind": "audio"|"text", "dim": int, "v": [float, ...]}``.
* Language model (``lm/1``): one JSON document
  ``{"schema": "lm/1", "granularity": "word"|"subword", "vocab": [...],
  "ngrams": {context-string: {token: prob}}}``.
"""

from __future__ import annotations

import hashlib
import json
import re
import warnings
from abc import ABC, abstractmethod
from collections import Counter
from typing import Mapping, Sequence

import numpy as np

from .core import Embedding, Token, canonical_text
from .errors import (
    DimensionError,
    DuplicateIdError,
    EmptyInputError,
    IoError,
    MissingClipError,
    MissingContextError,
    ParseError,
)

EMB_SCHEMA = "emb/1"
LM_SCHEMA = "lm/1"

BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"
_RESERVED = (BOS, EOS, UNK)

_WORDLIKE = re.compile(r"^[a-zA-Z0-9' .,!?-]+$")


def _seeded_unit_vector(seed: int, salt: str, payload: str, dim: int) -> np.ndarray:
    """Deterministic pseudo-random unit vector, stable across processes."""
    digest = hashlib.blake2b(
        f"{seed}|{salt}|{payload}".encode("utf-8"), digest_size=8
    ).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    while True:
        vec = rng.standard_normal(dim)
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            return vec / norm


def seeded_text_embedding(seed: int, text: str, dim: int) -> Embedding:
    """The shared hashing rule mapping text to a unit-sphere embedding.

    Used by the toy matcher for all text and by fixture matchers as the
    fallback for text absent from the store (the fixture header's
    ``fallback_seed`` selects the seed). Text is canonicalized (lowercase,
    whitespace collapsed) before hashing.
    """
    return Embedding.of(_seeded_unit_vector(seed, "text", canonical_text(text), dim))


class AudioTextMatcher(ABC):
    """CLIP-style dual encoder mapping clips and text into one space."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @abstractmethod
    def embed_audio(self, clip_ref: str) -> Embedding: ...

    @abstractmethod
    def embed_text(self, text: str) -> Embedding: ...


class _TextCachingMatcher(AudioTextMatcher):
    """Caches embed_text by canonical string; insert-if-absent is atomic."""

    def __init__(self, dim: int):
        self._dim = dim
        self._text_cache: dict[str, Embedding] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def embed_text(self, text: str) -> Embedding:
        key = canonical_text(text)
        cached = self._text_cache.get(key)
        if cached is None:
            cached = self._text_cache.setdefault(key, self._compute_text(key))
        return cached

    def _compute_text(self, canonical: str) -> Embedding:
        raise NotImplementedError


class ToyMatcher(_TextCachingMatcher):
    """Deterministic seeded-hash matcher.

    ``embed_text`` maps a string to a pseudo-random unit vector keyed by the
    seed and the canonical text. ``embed_audio`` returns the vector of the
    clip's registered true description (the clip_ref itself when it was never
    registered) plus optional bounded noise, so text equal to the true
    description scores 1 when noise is 0.
    """

    def __init__(
        self,
        seed: int,
        dim: int,
        noise: float = 0.0,
        clips: Mapping[str, str] | None = None,
    ):
        super().__init__(dim)
        self.seed = seed
        self.noise = noise
        self._clips = dict(clips or {})

    def register_clip(self, clip_id: str, true_description: str) -> None:
        self._clips[clip_id] = true_description

    def true_description(self, clip_ref: str) -> str:
        return self._clips.get(clip_ref, clip_ref)

    def _compute_text(self, canonical: str) -> Embedding:
        return Embedding.of(_seeded_unit_vector(self.seed, "text", canonical, self._dim))

    def embed_audio(self, clip_ref: str) -> Embedding:
        base = self.embed_text(self.true_description(clip_ref))
        if self.noise == 0.0:
            return base
        jitter = _seeded_unit_vector(
            self.seed, "audio-noise", canonical_text(clip_ref), self._dim
        )
        return Embedding.of(base._array + self.noise * jitter)


def toy_matcher(
    seed: int, dim: int, noise: float = 0.0, clips: Mapping[str, str] | None = None
) -> ToyMatcher:
    if dim < 2:
        raise ValueError("toy matcher needs dim >= 2")
    return ToyMatcher(seed, dim, noise=noise, clips=clips)


class LanguageModel(ABC):
    """Tokenizer plus next-token distribution source."""

    @property
    @abstractmethod
    def vocab_size(self) -> int:
        """Number of tokens top_k_next can return (its candidate support)."""

    @abstractmethod
    def encode(self, text: str) -> list[Token]: ...

    @abstractmethod
    def decode(self, tokens: Sequence[Token]) -> str: ...

    @abstractmethod
    def top_k_next(self, prefix: Sequence[Token], k: int) -> list[tuple[Token, float]]:
        """Top k next tokens with probabilities, sorted descending, ties by id."""


class ToyNgramLM(LanguageModel):
    """Word-level n-gram model with add-one smoothing.

    Sentences are padded with (order - 1) leading <bos> markers and one
    trailing <eos>. The smoothing vocabulary V counts corpus words plus both
    reserved markers; the candidate support excludes <bos>, which is never a
    legal continuation, so returned probabilities sum to slightly under 1.
    Unknown words encode to the reserved <unk> id but keep their surface, so
    decode(encode(t)) round-trips for any whitespace-normal text.
    """

    def __init__(self, corpus: Sequence[str], order: int):
        if order not in (1, 2, 3):
            raise ValueError("order must be 1, 2, or 3")
        sentences = [line.split() for line in corpus if line.split()]
        if not sentences:
            raise EmptyInputError("toy LM corpus is empty")
        self.order = order
        words = sorted({w for s in sentences for w in s} - set(_RESERVED))
        self._surfaces = [BOS, EOS, UNK] + words
        self._index = {s: i for i, s in enumerate(self._surfaces)}
        self._smoothing_v = len(words) + 2  # words plus <bos> and <eos>
        self._support = [self.token(EOS)] + [self.token(w) for w in words]
        self._ngram_counts: Counter = Counter()
        self._context_counts: Counter = Counter()
        for sentence in sentences:
            toks = [BOS] * (order - 1) + sentence + [EOS]
            for i in range(len(toks) - order + 1):
                gram = tuple(toks[i : i + order])
                self._ngram_counts[gram] += 1
                self._context_counts[gram[:-1]] += 1

    @property
    def vocab_size(self) -> int:
        return len(self._support)

    @property
    def candidate_surfaces(self) -> list[str]:
        """Support surfaces in token-id order (<eos> first, then words)."""
        return [t.surface for t in self._support]

    def token(self, surface: str) -> Token:
        return Token(self._index.get(surface, self._index[UNK]), surface)

    def encode(self, text: str) -> list[Token]:
        return [self.token(w) for w in text.split()]

    def decode(self, tokens: Sequence[Token]) -> str:
        return " ".join(t.surface for t in tokens)

    def _context(self, surfaces: Sequence[str]) -> tuple[str, ...]:
        need = self.order - 1
        if need == 0:
            return ()
        tail = list(surfaces[-need:]) if surfaces else []
        return tuple([BOS] * (need - len(tail)) + tail)

    def _distribution(self, context: tuple[str, ...]) -> list[tuple[Token, float]]:
        denom = self._context_counts.get(context, 0) + self._smoothing_v
        scored = [
            (tok, (self._ngram_counts.get(context + (tok.surface,), 0) + 1) / denom)
            for tok in self._support
        ]
        scored.sort(key=lambda tp: (-tp[1], tp[0].id))
        return scored

    def top_k_next(self, prefix: Sequence[Token], k: int) -> list[tuple[Token, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        dist = self._distribution(self._context([t.surface for t in prefix]))
        return dist[: min(k, len(dist))]

    def to_fixture_table(self, top_m: int | None = None) -> dict[str, dict[str, float]]:
        """Dump every observed context as an lm/1 ngrams table.

        Context keys are the context surfaces minus leading <bos> padding,
        joined by single spaces (so the sentence-start context becomes "").
        """
        contexts = set(self._context_counts)
        contexts.add(self._context([]))  # sentence-start context maps to ""
        table: dict[str, dict[str, float]] = {}
        for context in sorted(contexts):
            key = " ".join(w for w in context if w != BOS)
            dist = self._distribution(context)
            if top_m is not None:
                dist = dist[:top_m]
            table[key] = {tok.surface: p for tok, p in dist}
        return table


def toy_lm(corpus: Sequence[str], order: int) -> ToyNgramLM:
    return ToyNgramLM(corpus, order)


class FixtureMatcher(AudioTextMatcher):
    """Serves stored embeddings verbatim; unseen text falls back to the
    seeded-hash rule with the seed recorded in the fixture header."""

    def __init__(
        self,
        dim: int,
        fallback_seed: int,
        audio: Mapping[str, Embedding],
        text: Mapping[str, Embedding],
    ):
        self._dim = dim
        self.fallback_seed = fallback_seed
        self._audio = dict(audio)
        self._text_cache = dict(text)  # keys already canonical

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def clip_ids(self) -> list[str]:
        return list(self._audio)

    def embed_audio(self, clip_ref: str) -> Embedding:
        try:
            return self._audio[clip_ref]
        except KeyError:
            raise MissingClipError(f"no audio embedding stored for clip {clip_ref!r}") from None

    def embed_text(self, text: str) -> Embedding:
        key = canonical_text(text)
        cached = self._text_cache.get(key)
        if cached is None:
            cached = self._text_cache.setdefault(
                key, seeded_text_embedding(self.fallback_seed, key, self._dim)
            )
        return cached


class FixtureLM(LanguageModel):
    """Replays a stored next-token table.

    Context lookup walks suffixes of the prefix from longest to shortest
    (ending with the empty context ""), detokenized per the declared
    granularity; the first table hit wins.
    """

    def __init__(
        self,
        vocab: Sequence[str],
        granularity: str,
        ngrams: Mapping[str, Mapping[str, float]],
    ):
        self.granularity = granularity
        self._surfaces = list(vocab)
        self._index = {s: i for i, s in enumerate(self._surfaces)}
        self._unk_id = len(self._surfaces)
        self._table: dict[str, list[tuple[Token, float]]] = {}
        for key, row in ngrams.items():
            entries = [(self._token(surf), float(p)) for surf, p in row.items()]
            entries.sort(key=lambda tp: (-tp[1], tp[0].id))
            self._table[key] = entries

    @property
    def vocab_size(self) -> int:
        return len(self._surfaces)

    def _token(self, surface: str) -> Token:
        return Token(self._index.get(surface, self._unk_id), surface)

    def encode(self, text: str) -> list[Token]:
        if self.granularity == "word":
            return [self._token(w) for w in text.split()]
        return self._greedy_subword(text)

    def _greedy_subword(self, text: str) -> list[Token]:
        # longest-match segmentation; unmatched characters become <unk>-id
        # tokens that still carry their surface.
        max_len = max((len(s) for s in self._surfaces), default=1)
        out: list[Token] = []
        i = 0
        while i < len(text):
            piece = None
            for j in range(min(len(text), i + max_len), i, -1):
                if text[i:j] in self._index:
                    piece = text[i:j]
                    break
            if piece is None:
                piece = text[i]
            out.append(self._token(piece))
            i += len(piece)
        return out

    def decode(self, tokens: Sequence[Token]) -> str:
        joiner = " " if self.granularity == "word" else ""
        return joiner.join(t.surface for t in tokens)

    def top_k_next(self, prefix: Sequence[Token], k: int) -> list[tuple[Token, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        surfaces = [t.surface for t in prefix]
        joiner = " " if self.granularity == "word" else ""
        for start in range(len(surfaces) + 1):
            key = joiner.join(surfaces[start:])
            row = self._table.get(key)
            if row is not None:
                return row[: min(k, len(row))]
        raise MissingContextError(
            "no table entry matches any suffix of the prefix (no \"\" fallback row)"
        )


def write_embedding_fixtures(
    path,
    fallback_seed: int,
    audio: Mapping[str, Embedding] | None = None,
    text: Mapping[str, Embedding] | None = None,
    dim: int | None = None,
) -> None:
    """Write an emb/1 file; reals serialize at full round-trip precision."""
    header: dict = {"schema": EMB_SCHEMA, "fallback_seed": fallback_seed}
    if dim is not None:
        header["dim"] = dim
    lines = [json.dumps(header)]
    for kind, records in (("audio", audio or {}), ("text", text or {})):
        for rid, emb in records.items():
            lines.append(
                json.dumps(
                    {"id": rid, "kind": kind, "dim": emb.dim, "v": list(emb.values)}
                )
            )
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_embedding_fixtures(path) -> FixtureMatcher:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not raw_lines:
        raise ParseError("empty embeddings file", line=1)
    try:
        header = json.loads(raw_lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header JSON: {exc}", line=1) from exc
    if not isinstance(header, dict) or header.get("schema") != EMB_SCHEMA:
        raise ParseError(f"expected schema {EMB_SCHEMA!r} header", line=1)
    if not isinstance(header.get("fallback_seed"), int):
        raise ParseError("header is missing integer fallback_seed", line=1)

    dim = header.get("dim")
    if dim is not None and (not isinstance(dim, int) or dim < 1):
        raise ParseError("header dim must be a positive integer", line=1)
    audio: dict[str, Embedding] = {}
    text: dict[str, Embedding] = {}
    for lineno, line in enumerate(raw_lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad record JSON: {exc}", line=lineno) from exc
        if not isinstance(rec, dict):
            raise ParseError("record is not an object", line=lineno)
        rid, kind, rdim, values = (
            rec.get("id"),
            rec.get("kind"),
            rec.get("dim"),
            rec.get("v"),
        )
        if not isinstance(rid, str) or kind not in ("audio", "text"):
            raise ParseError("record needs string id and kind audio|text", line=lineno)
        if not isinstance(rdim, int) or not isinstance(values, list) or len(values) != rdim:
            raise ParseError("record dim does not match its vector length", line=lineno)
        try:
            emb = Embedding.of(values)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad vector: {exc}", line=lineno) from exc
        if dim is None:
            dim = emb.dim
        elif emb.dim != dim:
            raise DimensionError(
                f"line {lineno}: record dim {emb.dim} differs from file dim {dim}"
            )
        if kind == "audio":
            if rid in audio:
                raise DuplicateIdError(f"duplicate clip_id {rid!r}")
            audio[rid] = emb
        else:
            key = canonical_text(rid)
            if key in text:
                raise DuplicateIdError(f"duplicate text record {key!r}")
            text[key] = emb
    if dim is None:
        raise ParseError(
            "cannot infer embedding dim: no records and no header dim", line=1
        )
    return FixtureMatcher(dim, header["fallback_seed"], audio, text)


def write_lm_fixture(
    path,
    vocab: Sequence[str],
    ngrams: Mapping[str, Mapping[str, float]],
    granularity: str = "word",
) -> None:
    doc = {
        "schema": LM_SCHEMA,
        "granularity": granularity,
        "vocab": list(vocab),
        "ngrams": {k: dict(v) for k, v in ngrams.items()},
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_lm_fixture(path) -> FixtureLM:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad LM fixture JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != LM_SCHEMA:
        raise ParseError(f"expected schema {LM_SCHEMA!r}")
    granularity = doc.get("granularity")
    if granularity not in ("word", "subword"):
        raise ParseError("granularity must be word or subword")
    vocab = doc.get("vocab")
    if not isinstance(vocab, list) or not vocab or not all(isinstance(s, str) for s in vocab):
        raise ParseError("vocab must be a non-empty list of strings")
    if len(set(vocab)) != len(vocab):
        raise DuplicateIdError("vocab contains duplicate surfaces")
    odd = [s for s in vocab if s not in _RESERVED and not _WORDLIKE.match(s)]
    if odd:
        warnings.warn(
            f"LM fixture vocab has {len(odd)} non-dictionary-looking tokens "
            f"(e.g. {odd[0]!r}); loading anyway"
        )
    ngrams = doc.get("ngrams")
    if not isinstance(ngrams, dict):
        raise ParseError("ngrams must be an object")
    known = set(vocab)
    for key, row in ngrams.items():
        if not isinstance(row, dict) or not row:
            raise ParseError(f"ngrams[{key!r}] must be a non-empty object")
        for surf, p in row.items():
            if surf not in known:
                raise ParseError(f"ngrams[{key!r}] token {surf!r} not in vocab")
            if not isinstance(p, (int, float)) or not (0.0 < float(p) <= 1.0):
                raise ParseError(f"ngrams[{key!r}][{surf!r}] probability out of (0, 1]")
    return FixtureLM(vocab, granularity, ngrams)


def load_fixtures(embeddings_path, lm_path) -> tuple[FixtureMatcher, FixtureLM]:
    """Load both fixture files and return the file-fed backend pair."""
    return load_embedding_fixtures(embeddings_path), load_lm_fixture(lm_path)
