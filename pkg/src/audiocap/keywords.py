"""Keyword-list ingestion, merging, and zero-shot keyword selection.

Selection ranks every list entry by cosine similarity between its text
embedding and the clip's audio embedding, then keeps the top l.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backends import AudioTextMatcher
from .core import canonical_text, cosine_similarity
from .errors import EmptyKeywordListError, IoError


@dataclass(frozen=True)
class KeywordList:
    """Ordered, deduplicated list of audio-class strings."""

    entries: tuple[str, ...]
    source_tag: str = ""

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if not entry or "\n" in entry or entry != canonical_text(entry):
                raise ValueError(f"entry {entry!r} is not canonical")
            if entry in seen:
                raise ValueError(f"entry {entry!r} appears twice")
            seen.add(entry)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def of(cls, raw_entries, source_tag: str = "") -> "KeywordList":
        """Canonicalize, split compound classes, and drop duplicates."""
        out: list[str] = []
        seen: set[str] = set()
        for raw in raw_entries:
            for part in _split_compound(raw):
                entry = canonical_text(part)
                if entry and entry not in seen:
                    seen.add(entry)
                    out.append(entry)
        return cls(tuple(out), source_tag)


@dataclass(frozen=True)
class KeywordMatch:
    keyword: str
    similarity: float
    rank: int


def _split_compound(raw: str) -> list[str]:
    """Split on ", " at top level (outside any bracket pair)."""
    parts: list[str] = []
    depth = 0
    current: list[str] = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth = max(0, depth - 1)
        if depth == 0 and raw.startswith(", ", i):
            parts.append("".join(current))
            current = []
            i += 2
            continue
        current.append(ch)
        i += 1
    parts.append("".join(current))
    return parts


def load_keywords(path, source_tag: str | None = None) -> KeywordList:
    """Read one keyword per line; '#' comments and blank lines are ignored."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read keyword list {path}: {exc}") from exc
    raw = [ln for ln in (ln.strip() for ln in lines) if ln and not ln.startswith("#")]
    result = KeywordList.of(raw, source_tag if source_tag is not None else str(path))
    if not result.entries:
        raise EmptyKeywordListError(f"{path} holds no keywords")
    return result


def save_keywords(path, keywords: KeywordList) -> None:
    """Write one keyword per line."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(keywords.entries) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write keyword list {path}: {exc}") from exc


def merge_keyword_lists(base: KeywordList, extra: KeywordList) -> KeywordList:
    """Union preserving base order, then new extras in extra's order."""
    tag = base.source_tag
    if extra.source_tag and extra.source_tag != base.source_tag:
        tag = f"{base.source_tag}+{extra.source_tag}" if base.source_tag else extra.source_tag
    return KeywordList.of(list(base.entries) + list(extra.entries), tag)


def select_keywords(
    matcher: AudioTextMatcher,
    clip_ref: str,
    keywords: KeywordList,
    l: int,
    embed_template: str | None = None,
) -> list[KeywordMatch]:
    """Top-l keywords by keyword-audio cosine similarity, ties by list order.

    Keywords are embedded as raw text unless embed_template (containing
    "{keyword}") is given.
    """
    if l < 0 or l > len(keywords.entries):
        raise ValueError(f"l={l} outside 0..{len(keywords.entries)}")
    if l == 0:
        return []
    audio = matcher.embed_audio(clip_ref)
    scored = []
    for idx, entry in enumerate(keywords.entries):
        text = embed_template.format(keyword=entry) if embed_template else entry
        scored.append((cosine_similarity(matcher.embed_text(text), audio), idx, entry))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [
        KeywordMatch(keyword=entry, similarity=sim, rank=rank)
        for rank, (sim, _, entry) in enumerate(scored[:l], start=1)
    ]
