"""Zero-shot audio captioning: keyword-prompted, audio-guided greedy decoding
against pluggable audio-text matcher and language-model backends, plus the
metrics and sweep harness to study it."""

from .backends import (
    AudioTextMatcher,
    FixtureLM,
    FixtureMatcher,
    LanguageModel,
    ToyMatcher,
    ToyNgramLM,
    load_fixtures,
    seeded_text_embedding,
    toy_lm,
    toy_matcher,
    write_embedding_fixtures,
    write_lm_fixture,
)
from .core import Embedding, ScoredCandidate, Token, canonical_text, cosine_similarity, softmax
from .decoder import (
    CaptionResult,
    DecodeConfig,
    DecodeState,
    MAGIC_DEFAULT_TAU,
    decode,
    decode_greedy,
    end_penalty,
    score_candidates,
    truncate_at_end_token,
)
from .errors import (
    AudiocapError,
    DegenerateVectorError,
    DimensionError,
    DuplicateIdError,
    EmptyInputError,
    EmptyKeywordListError,
    InsufficientCorpusError,
    IoError,
    MissingClipError,
    MissingContextError,
    MissingReferenceError,
    ParseError,
)
from .harness import (
    Manifest,
    ManifestClip,
    ResultTable,
    SweepSpec,
    ToyWorld,
    load_manifest,
    make_aligned_toy_world,
    run_ablation,
    run_batch,
    run_sweep,
    write_manifest,
)
from .keywords import (
    KeywordList,
    KeywordMatch,
    load_keywords,
    merge_keyword_lists,
    save_keywords,
    select_keywords,
)
from .metrics import (
    MetricReport,
    ReferenceSet,
    bleu_n,
    cider,
    evaluate_captions,
    meteor,
    nlg_mean,
    tokenize_caption,
)
from .prompt import PromptTemplate, build_prompt

__version__ = "0.1.0"
