"""Acceptance suite: every criterion prints one pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines live.
"""

import dataclasses
import math
import random
import time
from collections import Counter
from contextlib import contextmanager
from fractions import Fraction

import pytest

from audiocap.backends import toy_lm, toy_matcher
from audiocap.decoder import (
    DecodeConfig,
    DecodeState,
    decode,
    decode_greedy,
    end_penalty,
    score_candidates,
)
from audiocap.harness import ResultTable, SweepSpec, make_aligned_toy_world, run_batch, run_sweep
from audiocap.keywords import KeywordList, select_keywords
from audiocap.metrics import bleu_n, evaluate_captions, nlg_mean, tokenize_caption
from audiocap.metrics import ReferenceSet
from audiocap.prompt import PromptTemplate


@contextmanager
def criterion(name, limit_s):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - start
    if elapsed >= limit_s:
        print(f"[FAIL] {name}: runtime {elapsed:.2f}s over the {limit_s:.0f}s budget")
        raise AssertionError(f"{name} exceeded its time budget")
    print(f"[PASS] {name} ({elapsed:.2f}s < {limit_s:.0f}s)")


# --- independent oracles (no engine internals) --------------------------------

def _cos(a, b):
    dot = sum(x * y for x, y in zip(a.values, b.values))
    na = math.sqrt(sum(x * x for x in a.values))
    nb = math.sqrt(sum(y * y for y in b.values))
    return max(-1.0, min(1.0, dot / (na * nb)))


def _bruteforce_combination(state, candidates, audio, matcher, lm, cfg):
    """Re-evaluates the selection score from its definition, pure Python."""
    total = sum(p for _, p in candidates)
    raw = []
    for tok, _ in candidates:
        seq = lm.decode(list(state.generated) + [tok])
        raw.append(cfg.tau * _cos(matcher.embed_text(seq), audio))
    mx = max(raw)
    exps = [math.exp(r - mx) for r in raw]
    z = sum(exps)
    out = []
    for (tok, p), e in zip(candidates, exps):
        conf = p / total
        deg = 0.0
        if state.generated:
            deg = max(
                _cos(matcher.embed_text(tok.surface), matcher.embed_text(prev.surface))
                for prev in state.generated
            )
        final = cfg.w_confidence * conf - cfg.w_degeneration * deg + cfg.w_magic * (e / z)
        if tok.surface in cfg.end_tokens:
            final -= cfg.w_end * (1.0 / (1.0 + len(state.generated)))
        out.append((tok, final))
    return out


def _random_toy(rng, max_words=46):
    n_words = rng.randint(3, max_words)
    words = [f"w{i}" for i in range(n_words)]
    corpus = [
        " ".join(rng.choices(words + ["."], k=rng.randint(1, 7)))
        for _ in range(rng.randint(1, 6))
    ]
    lm = toy_lm(corpus, order=rng.choice([1, 2, 3]))
    matcher = toy_matcher(seed=rng.randint(0, 10**9), dim=rng.choice([4, 8, 16, 32]))
    return matcher, lm, words


def test_step_oracle():
    with criterion("step oracle: 200 random steps vs brute-force combination", 10.0):
        rng = random.Random(20250811)
        for _ in range(200):
            matcher, lm, words = _random_toy(rng)
            assert lm.vocab_size <= 50
            audio = matcher.embed_audio(" ".join(rng.choices(words, k=3)))
            cfg = DecodeConfig(
                k=rng.randint(1, 5),
                w_confidence=rng.uniform(0, 2),
                w_degeneration=rng.uniform(0, 1),
                w_magic=rng.uniform(0, 2),
                tau=rng.uniform(0, 20),
                w_end=rng.uniform(0, 1),
                max_tokens=8,
            )
            prompt = lm.encode(" ".join(rng.choices(words, k=rng.randint(1, 4))))
            generated = lm.encode(" ".join(rng.choices(words + ["."], k=rng.randint(0, 4))))
            state = DecodeState(prompt_tokens=prompt, generated=generated)
            candidates = lm.top_k_next(prompt + generated, cfg.k)
            engine = score_candidates(state, candidates, audio, matcher, lm, cfg)
            oracle = _bruteforce_combination(state, candidates, audio, matcher, lm, cfg)
            chosen = max(engine, key=lambda sc: (sc.final, -sc.token.id))
            expected = max(oracle, key=lambda tf: (tf[1], -tf[0].id))
            assert chosen.token == expected[0]
            for sc, (tok, final) in zip(engine, oracle):
                assert sc.token == tok
                assert abs(sc.final - final) <= 1e-12


@pytest.mark.filterwarnings("ignore:first generated token")
def test_greedy_reduction():
    with criterion("greedy reduction: 100 toy instances, token-for-token", 5.0):
        rng = random.Random(99)
        for _ in range(100):
            matcher, lm, words = _random_toy(rng, max_words=20)
            cfg = DecodeConfig(
                k=rng.randint(1, 5),
                w_confidence=rng.choice([0.0, 0.5, 1.0, 2.0]),
                w_degeneration=0.0,
                w_magic=0.0,
                tau=rng.uniform(0, 20),
                w_end=0.0,
                max_tokens=rng.randint(1, 6),
            )
            template = PromptTemplate(base_prompt=rng.choice(words))
            full = decode("clip", matcher, lm, None, template, cfg, 0)
            greedy = decode_greedy("clip", lm, template, cfg)
            assert full.tokens == greedy.tokens


def test_zsks_oracle():
    with criterion("keyword-selection oracle: 50 pairs, every l", 5.0):
        rng = random.Random(7)
        for _ in range(50):
            matcher = toy_matcher(seed=rng.randint(0, 10**9), dim=rng.choice([4, 8, 16]))
            size = rng.randint(1, 20)
            entries = [f"keyword {rng.randint(0, 10**6)} {i}" for i in range(size)]
            kw = KeywordList.of(entries)
            clip = f"clip {rng.randint(0, 10**6)}"
            audio = matcher.embed_audio(clip)
            ranked = sorted(
                (
                    (-_cos(matcher.embed_text(e), audio), idx, e)
                    for idx, e in enumerate(kw.entries)
                ),
            )
            for l in range(len(kw.entries) + 1):
                got = select_keywords(matcher, clip, kw, l)
                assert [m.keyword for m in got] == [e for _, _, e in ranked[:l]]
                assert [m.rank for m in got] == list(range(1, l + 1))


def test_keyword_guidance_direction():
    with criterion("keyword guidance: l=1 beats l=0 by >= 20% relative", 30.0):
        world = make_aligned_toy_world(n_clips=20)
        _, with_kw = run_batch(world.manifest, world.matcher, world.lm, world.keywords,
                               world.template, world.cfg, 1)
        _, without_kw = run_batch(world.manifest, world.matcher, world.lm, world.keywords,
                                  world.template, world.cfg, 0)
        assert with_kw.nlg_mean > without_kw.nlg_mean
        assert with_kw.nlg_mean >= 1.2 * without_kw.nlg_mean


def test_magic_guidance_direction():
    with criterion("audio guidance: w_magic > 0 beats w_magic = 0 at fixed keywords", 30.0):
        world = make_aligned_toy_world(n_clips=20)
        _, guided = run_batch(world.manifest, world.matcher, world.lm, world.keywords,
                              world.template, world.cfg, 1)
        off = dataclasses.replace(world.cfg, w_magic=0.0)
        _, unguided = run_batch(world.manifest, world.matcher, world.lm, world.keywords,
                                world.template, off, 1)
        assert guided.nlg_mean > unguided.nlg_mean


def _bleu_script(cands, refs_map, n):
    """The independent n-gram script for the BLEU cross-check."""
    def grams(tokens, k):
        return Counter(tuple(tokens[i:i + k]) for i in range(len(tokens) - k + 1))

    correct, guess = [0] * n, [0] * n
    c_len = r_len = 0
    for cid, cand in cands.items():
        ct = tokenize_caption(cand)
        rts = [tokenize_caption(r) for r in refs_map[cid]]
        c_len += len(ct)
        r_len += min((len(rt) for rt in rts), key=lambda L: (abs(L - len(ct)), L))
        for k in range(1, n + 1):
            cg = grams(ct, k)
            guess[k - 1] += sum(cg.values())
            best = Counter()
            for rt in rts:
                for g, c in grams(rt, k).items():
                    best[g] = max(best[g], c)
            correct[k - 1] += sum(min(c, best[g]) for g, c in cg.items())
    if c_len == 0:
        return 0.0
    product = 1.0
    for k in range(n):
        if guess[k] == 0 or correct[k] == 0:
            return 0.0
        product *= correct[k] / guess[k]
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    return bp * product ** (1.0 / n)


_HAND_PAIRS = [
    ("a dog barks", ["a dog barks"]),
    ("a dog barks", ["a dog barks loudly"]),
    ("the cat sat", ["the cat sat down"]),
    ("rain falls on the roof", ["rain falls", "rain falls on a roof"]),
    ("wind howls", ["the wind howls outside"]),
    ("a a a a", ["a a"]),
    ("water splashing in a pool", ["water splashing", "people splash water"]),
    ("engine running", ["an engine is running", "engine idles"]),
    ("children laughing loudly", ["children laughing", "kids laugh loudly"]),
    ("a car drives fast", ["a car drives very fast"]),
    ("thunder rumbles", ["thunder rumbles in the distance"]),
    ("birds chirping in trees", ["birds chirp", "birds chirping in the trees"]),
    ("a door creaks open", ["the door creaks", "a door opens"]),
    ("glass shatters", ["glass breaking", "a glass shatters"]),
    ("footsteps on wood", ["footsteps on a wooden floor"]),
    ("waves crash on shore", ["waves crashing", "the waves crash on the shore"]),
    ("a phone rings twice", ["a phone rings", "the phone rang twice"]),
    ("crowd cheering", ["a crowd cheers loudly"]),
    ("fire crackles softly", ["the fire crackles", "fire crackling"]),
    ("horse galloping away", ["a horse gallops", "horse galloping away quickly"]),
]


def test_metric_oracles():
    with criterion("metric oracles: perfect-match values, published mean, BLEU script", 10.0):
        texts = [
            "unique dog phrase one alpha",
            "second rain sentence two beta",
            "third wind caption three gamma",
            "fourth car line four delta",
            "fifth bird words five epsilon",
        ]
        cands = {f"c{i}": t for i, t in enumerate(texts)}
        refs = [ReferenceSet.of(f"c{i}", (t,)) for i, t in enumerate(texts)]
        assert bleu_n(cands, refs, 2) == 1.0
        assert bleu_n(cands, refs, 3) == 1.0
        report = evaluate_captions(cands, refs)
        for entry in report.per_clip.values():
            assert entry["cider"] == pytest.approx(10.0, abs=1e-6)

        assert nlg_mean([0.314, 0.238, 0.247, 0.502]) == pytest.approx(0.325, abs=0.0005)

        for i, (cand, ref_list) in enumerate(_HAND_PAIRS):
            pair_cands = {"clip": cand}
            pair_refs = [ReferenceSet.of("clip", tuple(ref_list))]
            for n in (1, 2, 3):
                assert bleu_n(pair_cands, pair_refs, n) == pytest.approx(
                    _bleu_script(pair_cands, {"clip": ref_list}, n), abs=1e-9
                ), f"pair {i}, n={n}"


def test_end_penalty_monotonic():
    with criterion("ending penalty: 1/(1+n) strictly decreasing, exact rationals", 1.0):
        previous = None
        for n in range(101):
            exact = Fraction(1, 1 + n)
            assert end_penalty(n) == float(exact)
            if previous is not None:
                assert exact < previous
            previous = exact


@pytest.mark.filterwarnings("ignore:first generated token")
def test_truncation_and_trace_fuzz():
    with criterion("truncation and traces: 500 fuzzed decodes", 60.0):
        rng = random.Random(31337)
        for _ in range(500):
            matcher, lm, words = _random_toy(rng, max_words=20)
            cfg = DecodeConfig(
                k=rng.randint(1, 6),
                w_confidence=rng.uniform(0, 2),
                w_degeneration=rng.uniform(0, 1),
                w_magic=rng.uniform(0, 2),
                tau=rng.choice([0.0, 1.0, 10.0, 18.6612]),
                w_end=rng.uniform(0, 1),
                max_tokens=rng.randint(1, 8),
            )
            keywords = KeywordList.of(rng.sample(words, k=rng.randint(1, 3)))
            l = rng.randint(0, len(keywords.entries))
            result = decode("fuzz clip", matcher, lm, keywords,
                            PromptTemplate(base_prompt=rng.choice(words)), cfg, l)
            surfaces = [t.surface for t in result.tokens]
            enders = [s for s in surfaces if s in cfg.end_tokens]
            assert len(enders) <= 1
            if enders:
                assert surfaces[-1] in cfg.end_tokens
            assert len(result.trace.step_traces) == len(result.trace.generated)
            for _, scored in result.trace.step_traces:
                assert len(scored) == min(cfg.k, lm.vocab_size)
            assert len(result.trace.generated) <= cfg.max_tokens
            assert result.text == lm.decode(result.tokens)


def test_grid_shapes(tmp_path):
    with criterion("grid shapes: 4-row weight sweep, 5-row keyword-count sweep", 30.0):
        world = make_aligned_toy_world(n_clips=5)
        weight_values = (0.3, 0.5, 1.1, 1.5)
        table = run_sweep(
            world.manifest, world.matcher, world.lm, world.keywords, world.template,
            SweepSpec(axis="w_confidence", values=weight_values, fixed=world.cfg),
            world.l,
        )
        path = tmp_path / "w_confidence.csv"
        table.to_csv(path)
        reloaded = ResultTable.from_csv(path)
        assert len(reloaded.rows) == 4
        assert [r["value"] for r in reloaded.rows] == list(weight_values)

        l_values = (0, 1, 2, 3, 4)
        table = run_sweep(
            world.manifest, world.matcher, world.lm, world.keywords, world.template,
            SweepSpec(axis="l", values=l_values, fixed=world.cfg),
            world.l,
        )
        path = tmp_path / "l.csv"
        table.to_csv(path)
        reloaded = ResultTable.from_csv(path)
        assert len(reloaded.rows) == 5
        assert [r["value"] for r in reloaded.rows] == list(l_values)
