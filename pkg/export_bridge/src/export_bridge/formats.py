"""Fixture-file writers and self-checks.

The authoritative validator is the consuming engine's loader; the checks here
are a safety net so a broken export aborts with a nonzero exit instead of
shipping a bad file. Files are written atomically (temp file + rename).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping

EMB_SCHEMA = "emb/1"
LM_SCHEMA = "lm/1"


class SchemaError(Exception):
    pass


def _atomic_write(path, payload: str) -> None:
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_embeddings(path, dim: int, fallback_seed: int,
                     records: Iterable[tuple[str, str, Iterable[float]]]) -> int:
    """Write an emb/1 file from (id, kind, vector) records; returns the count."""
    lines = [json.dumps({"schema": EMB_SCHEMA, "fallback_seed": fallback_seed, "dim": dim})]
    count = 0
    for rid, kind, vector in records:
        values = [float(v) for v in vector]
        lines.append(json.dumps({"id": rid, "kind": kind, "dim": len(values), "v": values}))
        count += 1
    _atomic_write(path, "\n".join(lines) + "\n")
    return count


def write_lm(path, vocab: Iterable[str], ngrams: Mapping[str, Mapping[str, float]],
             granularity: str = "word") -> None:
    doc = {
        "schema": LM_SCHEMA,
        "granularity": granularity,
        "vocab": list(vocab),
        "ngrams": {k: dict(v) for k, v in ngrams.items()},
    }
    _atomic_write(path, json.dumps(doc) + "\n")


def check_embeddings_file(path) -> int:
    """Schema self-check; returns the record count or raises SchemaError."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError("empty embeddings file")
    header = json.loads(lines[0])
    if header.get("schema") != EMB_SCHEMA or not isinstance(header.get("fallback_seed"), int):
        raise SchemaError("bad emb/1 header")
    dim = header.get("dim")
    count = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = json.loads(line)
        values = rec.get("v")
        if (
            not isinstance(rec.get("id"), str)
            or rec.get("kind") not in ("audio", "text")
            or not isinstance(values, list)
            or rec.get("dim") != len(values)
            or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)
        ):
            raise SchemaError(f"bad record at line {lineno}")
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise SchemaError(f"dim mismatch at line {lineno}")
        count += 1
    if dim is None:
        raise SchemaError("no records and no header dim")
    return count


def check_lm_file(path) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != LM_SCHEMA:
        raise SchemaError("bad lm/1 schema")
    if doc.get("granularity") not in ("word", "subword"):
        raise SchemaError("bad granularity")
    vocab = doc.get("vocab")
    if not isinstance(vocab, list) or not vocab:
        raise SchemaError("vocab must be a non-empty list")
    known = set(vocab)
    ngrams = doc.get("ngrams")
    if not isinstance(ngrams, dict):
        raise SchemaError("ngrams must be an object")
    for key, row in ngrams.items():
        if not row:
            raise SchemaError(f"empty row for context {key!r}")
        for token, prob in row.items():
            if token not in known:
                raise SchemaError(f"token {token!r} missing from vocab")
            if not (0.0 < float(prob) <= 1.0):
                raise SchemaError(f"probability out of range for {token!r}")
