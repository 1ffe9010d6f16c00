"""Audio-guided greedy decoding.

Each step pulls the language model's top-k candidates and scores every
candidate as

    final = w_confidence * confidence
          - w_degeneration * degeneration
          + w_magic * magic

where confidence is the LM probability renormalized over the k candidates,
degeneration is the max cosine similarity between the candidate token and any
previously generated token, and magic is the softmax (over the candidates) of
tau times the cosine similarity between the candidate-extended generated text
and the audio embedding. Sentence terminators additionally pay
w_end / (1 + tokens_generated) to discourage premature endings. The argmax
token is appended (ties broken by lowest token id) until a terminator is
chosen or max_tokens is reached.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .backends import AudioTextMatcher, LanguageModel
from .core import Embedding, ScoredCandidate, Token, cosine_similarity, softmax
from .errors import EmptyInputError
from .keywords import KeywordList, KeywordMatch, select_keywords
from .prompt import PromptTemplate, build_prompt

# Temperature the upstream image-guided framework shipped with; 10 measured
# better for audio and is the default here.
MAGIC_DEFAULT_TAU = 18.6612


@dataclass(frozen=True)
class DecodeConfig:
    """All decoding hyperparameters.

    magic_includes_prompt folds the prompt into the sequence embedded for the
    magic term (default: generated text only, so keyword text cannot dominate
    the audio alignment). magic_token_level swaps the sequence-audio magic
    term for the token-pair form (candidate vs. last generated token); it is
    a non-default compatibility mode.
    """

    k: int = 45
    w_confidence: float = 1.0
    w_degeneration: float = 0.0
    w_magic: float = 0.5
    tau: float = 10.0
    w_end: float = 1.0
    max_tokens: int = 20
    end_tokens: frozenset = frozenset({".", "!", "?"})
    magic_includes_prompt: bool = False
    magic_token_level: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        for name in ("w_confidence", "w_degeneration", "w_magic", "tau", "w_end"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative")
        object.__setattr__(self, "end_tokens", frozenset(self.end_tokens))


@dataclass
class DecodeState:
    """Prompt, generated tokens, and the per-step score traces."""

    prompt_tokens: list[Token]
    generated: list[Token] = field(default_factory=list)
    step_traces: list[tuple[int, list[ScoredCandidate]]] = field(default_factory=list)
    finished: bool = False  # True when a sentence terminator ended generation


@dataclass
class CaptionResult:
    text: str
    tokens: list[Token]
    trace: DecodeState
    keywords_used: list[KeywordMatch]
    prompt: str

    def to_record(self) -> dict:
        """Structured record with the full step traces, for audit dumps."""
        return {
            "text": self.text,
            "prompt": self.prompt,
            "keywords": [
                {"keyword": m.keyword, "similarity": m.similarity, "rank": m.rank}
                for m in self.keywords_used
            ],
            "tokens": [{"id": t.id, "surface": t.surface} for t in self.tokens],
            "finished": self.trace.finished,
            "steps": [
                {
                    "step": step,
                    "candidates": [
                        {
                            "id": sc.token.id,
                            "surface": sc.token.surface,
                            "confidence": sc.confidence,
                            "degeneration": sc.degeneration,
                            "magic": sc.magic,
                            "final": sc.final,
                        }
                        for sc in scored
                    ],
                }
                for step, scored in self.trace.step_traces
            ],
        }


def end_penalty(num_generated: int) -> float:
    """Premature-ending penalty 1 / (1 + n); strictly decreasing in n."""
    return 1.0 / (1.0 + num_generated)


def score_candidates(
    state: DecodeState,
    candidates: Sequence[tuple[Token, float]],
    audio_emb: Embedding,
    matcher: AudioTextMatcher,
    lm: LanguageModel,
    cfg: DecodeConfig,
) -> list[ScoredCandidate]:
    """Score one step's candidates; see the module docstring for the formula."""
    if not candidates:
        raise EmptyInputError("no candidates to score")
    total = sum(p for _, p in candidates)
    confidences = [p / total for _, p in candidates]

    prev_embs = [matcher.embed_text(t.surface) for t in state.generated]
    degenerations = []
    for tok, _ in candidates:
        if prev_embs:
            cand_emb = matcher.embed_text(tok.surface)
            degenerations.append(max(cosine_similarity(cand_emb, pe) for pe in prev_embs))
        else:
            degenerations.append(0.0)

    base = list(state.prompt_tokens) + list(state.generated) if cfg.magic_includes_prompt \
        else list(state.generated)
    raw_magic = []
    for tok, _ in candidates:
        if cfg.magic_token_level:
            sim = (
                cosine_similarity(
                    matcher.embed_text(tok.surface),
                    matcher.embed_text(state.generated[-1].surface),
                )
                if state.generated
                else 0.0
            )
        else:
            sim = cosine_similarity(matcher.embed_text(lm.decode(base + [tok])), audio_emb)
        raw_magic.append(cfg.tau * sim)
    magics = softmax(raw_magic)

    penalty = end_penalty(len(state.generated))
    scored = []
    for (tok, _), conf, deg, mag in zip(candidates, confidences, degenerations, magics):
        final = cfg.w_confidence * conf - cfg.w_degeneration * deg + cfg.w_magic * mag
        if tok.surface in cfg.end_tokens:
            final -= cfg.w_end * penalty
        scored.append(ScoredCandidate(token=tok, confidence=conf, degeneration=deg,
                                      magic=mag, final=final))
    return scored


def _select(scored: Sequence[ScoredCandidate]) -> ScoredCandidate:
    # argmax on final; ties broken by lowest token id
    return max(scored, key=lambda sc: (sc.final, -sc.token.id))


def truncate_at_end_token(tokens: Sequence[Token], end_tokens) -> list[Token]:
    for i, tok in enumerate(tokens):
        if tok.surface in end_tokens:
            return list(tokens[: i + 1])
    return list(tokens)


def _decode_loop(
    prompt_text: str,
    lm: LanguageModel,
    cfg: DecodeConfig,
    scorer: Callable[[DecodeState, Sequence[tuple[Token, float]]], list[ScoredCandidate]],
) -> DecodeState:
    state = DecodeState(prompt_tokens=lm.encode(prompt_text))
    while len(state.generated) < cfg.max_tokens and not state.finished:
        candidates = lm.top_k_next(state.prompt_tokens + state.generated, cfg.k)
        scored = scorer(state, candidates)
        best = _select(scored)
        state.generated.append(best.token)
        state.step_traces.append((len(state.generated) - 1, scored))
        if best.token.surface in cfg.end_tokens:
            state.finished = True
            if len(state.generated) == 1:
                warnings.warn(
                    "first generated token is a sentence terminator; "
                    "caption is a single punctuation mark"
                )
    return state


def decode(
    clip_ref: str,
    matcher: AudioTextMatcher,
    lm: LanguageModel,
    keywords: KeywordList | None,
    template: PromptTemplate,
    cfg: DecodeConfig,
    l: int,
    keyword_embed_template: str | None = None,
) -> CaptionResult:
    """Full pipeline: keyword selection, prompt enhancement, guided decoding."""
    if keywords is None and l > 0:
        raise ValueError("l > 0 requires a keyword list")
    audio_emb = matcher.embed_audio(clip_ref)
    matches = (
        select_keywords(matcher, clip_ref, keywords, l, keyword_embed_template)
        if keywords is not None
        else []
    )
    prompt_text = build_prompt(template, matches)

    def scorer(state, candidates):
        return score_candidates(state, candidates, audio_emb, matcher, lm, cfg)

    state = _decode_loop(prompt_text, lm, cfg, scorer)
    tokens = truncate_at_end_token(state.generated, cfg.end_tokens)
    return CaptionResult(
        text=lm.decode(tokens),
        tokens=tokens,
        trace=state,
        keywords_used=matches,
        prompt=prompt_text,
    )


def decode_greedy(
    clip_ref: str,
    lm: LanguageModel,
    template: PromptTemplate,
    cfg: DecodeConfig,
) -> CaptionResult:
    """Audio-agnostic baseline: the same loop with no keywords and the
    degeneration, magic, and ending-penalty weights forced to zero."""
    greedy_cfg = replace(cfg, w_degeneration=0.0, w_magic=0.0, w_end=0.0)

    def scorer(state, candidates):
        if not candidates:
            raise EmptyInputError("no candidates to score")
        total = sum(p for _, p in candidates)
        return [
            ScoredCandidate(
                token=tok,
                confidence=p / total,
                degeneration=0.0,
                magic=0.0,
                final=greedy_cfg.w_confidence * (p / total),
            )
            for tok, p in candidates
        ]

    state = _decode_loop(template.base_prompt, lm, greedy_cfg, scorer)
    tokens = truncate_at_end_token(state.generated, greedy_cfg.end_tokens)
    return CaptionResult(
        text=lm.decode(tokens),
        tokens=tokens,
        trace=state,
        keywords_used=[],
        prompt=template.base_prompt,
    )
