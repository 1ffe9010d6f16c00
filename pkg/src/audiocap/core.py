"""Shared numeric and text primitives used by every other module.

Everything here is immutable after construction and safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateVectorError, DimensionError, EmptyInputError


def canonical_text(text: str) -> str:
    """Lowercase and collapse all whitespace runs to single spaces."""
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class Embedding:
    """A fixed-dimension real vector in the shared audio-text space.

    Stored unnormalized; normalization happens inside cosine_similarity so
    that fixture files stay faithful to exporter output.
    """

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) == 0:
            raise DimensionError("embedding must have at least one component")
        for v in self.values:
            if not math.isfinite(v):
                raise ValueError(f"embedding contains non-finite value {v!r}")

    @classmethod
    def of(cls, values: Iterable[float]) -> "Embedding":
        return cls(tuple(float(v) for v in values))

    @property
    def dim(self) -> int:
        return len(self.values)

    @cached_property
    def _array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class Token:
    """One vocabulary item: a non-negative id and its exact surface form."""

    id: int
    surface: str

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("token id must be non-negative")


@dataclass(frozen=True)
class ScoredCandidate:
    """Per-candidate score breakdown for one decoding step.

    confidence: LM probability renormalized over the step's candidates.
    degeneration: max cosine similarity to any previously generated token.
    magic: softmax-normalized, temperature-scaled audio alignment.
    final: the weighted combination actually used for selection (including
    any sentence-ending penalty).
    """

    token: Token
    confidence: float
    degeneration: float
    magic: float
    final: float


def cosine_similarity(x: Embedding, y: Embedding) -> float:
    """Cosine similarity x.y / (|x| |y|), clamped to [-1, 1].

    Raises DimensionError on mismatched dims and DegenerateVectorError when
    either vector has zero norm.
    """
    if x.dim != y.dim:
        raise DimensionError(f"dim mismatch: {x.dim} vs {y.dim}")
    xa, ya = x._array, y._array
    nx = float(np.linalg.norm(xa))
    ny = float(np.linalg.norm(ya))
    if nx == 0.0 or ny == 0.0:
        raise DegenerateVectorError("cosine similarity undefined for zero-norm vector")
    value = float(np.dot(xa, ya)) / (nx * ny)
    return max(-1.0, min(1.0, value))


def softmax(scores: Sequence[float]) -> list[float]:
    """Numerically stable softmax; output sums to 1 and preserves ranking."""
    if len(scores) == 0:
        raise EmptyInputError("softmax of empty sequence")
    arr = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("softmax requires finite inputs")
    shifted = arr - arr.max()
    exps = np.exp(shifted)
    return list(exps / exps.sum())
