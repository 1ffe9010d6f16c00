import math
import random

import numpy as np
import pytest

from audiocap.core import Embedding, Token, canonical_text, cosine_similarity, softmax
from audiocap.errors import DegenerateVectorError, DimensionError, EmptyInputError


def emb(*values):
    return Embedding.of(values)


def test_cosine_identical_unit_vectors():
    assert cosine_similarity(emb(1, 0), emb(1, 0)) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal():
    assert cosine_similarity(emb(1, 0), emb(0, 1)) == pytest.approx(0.0, abs=1e-12)


def test_cosine_hand_computed():
    # dot = 2 + 2 + 4 = 8, norms 3 and 3
    assert cosine_similarity(emb(1, 2, 2), emb(2, 1, 2)) == pytest.approx(8 / 9, abs=1e-12)


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionError):
        cosine_similarity(emb(1, 0), emb(1, 0, 0))


def test_cosine_zero_norm():
    with pytest.raises(DegenerateVectorError):
        cosine_similarity(emb(0, 0), emb(1, 0))


def test_cosine_symmetry_and_self_similarity():
    rng = random.Random(11)
    for _ in range(100):
        dim = rng.randint(2, 16)
        x = emb(*(rng.uniform(-5, 5) for _ in range(dim)))
        y = emb(*(rng.uniform(-5, 5) for _ in range(dim)))
        if all(v == 0 for v in x.values) or all(v == 0 for v in y.values):
            continue
        assert cosine_similarity(x, x) == pytest.approx(1.0, abs=1e-9)
        assert cosine_similarity(x, y) == pytest.approx(cosine_similarity(y, x), abs=1e-12)
        alpha = rng.uniform(0.1, 10)
        scaled = emb(*(alpha * v for v in x.values))
        assert cosine_similarity(scaled, y) == pytest.approx(
            cosine_similarity(x, y), abs=1e-9
        )


def test_cosine_stays_in_range():
    big = emb(*([1e8] * 4))
    assert -1.0 <= cosine_similarity(big, big) <= 1.0


def test_softmax_symmetry():
    assert softmax([0.0, 0.0]) == pytest.approx([0.5, 0.5], abs=1e-12)


def test_softmax_constant_inputs():
    out = softmax([4.2, 4.2, 4.2])
    assert out == pytest.approx([1 / 3] * 3, abs=1e-12)


def test_softmax_exact_from_definition():
    out = softmax([math.log(1), math.log(3)])
    assert out == pytest.approx([0.25, 0.75], abs=1e-12)


def test_softmax_sums_to_one_and_shift_invariant():
    rng = random.Random(5)
    for _ in range(50):
        scores = [rng.uniform(-50, 50) for _ in range(rng.randint(1, 12))]
        out = softmax(scores)
        assert sum(out) == pytest.approx(1.0, abs=1e-9)
        shift = rng.uniform(-100, 100)
        shifted = softmax([s + shift for s in scores])
        for a, b in zip(out, shifted):
            assert a == pytest.approx(b, abs=1e-9)
        if len(set(scores)) == len(scores):
            assert int(np.argmax(out)) == int(np.argmax(scores))


def test_softmax_numerically_stable():
    out = softmax([1000.0, 1001.0])
    assert math.isfinite(out[0]) and sum(out) == pytest.approx(1.0, abs=1e-12)


def test_softmax_empty_input():
    with pytest.raises(EmptyInputError):
        softmax([])


def test_embedding_invariants():
    e = emb(1.0, 2.0)
    assert e.dim == 2
    with pytest.raises(ValueError):
        Embedding.of([1.0, float("nan")])
    with pytest.raises(ValueError):
        Embedding.of([float("inf")])
    with pytest.raises(DimensionError):
        Embedding.of([])


def test_token_validation():
    assert Token(0, "dog").surface == "dog"
    with pytest.raises(ValueError):
        Token(-1, "x")


def test_canonical_text():
    assert canonical_text("  Dog   Barks\t") == "dog barks"
    assert canonical_text("dog") == "dog"
    assert canonical_text("") == ""
