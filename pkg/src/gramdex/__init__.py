"""Generative retrieval over an FM-indexed token corpus.

Contexts are identified by sampled important n-grams; retrieval decodes
identifiers under an FM-index constraint (every generated n-gram occurs in
the corpus) and ranks the containing contexts with a multi-n-gram score.
"""

from .corpus import (
    Context,
    Granularity,
    TokenizedCorpus,
    Tokenizer,
    TokenizerRules,
    context_of_offset,
    ingest,
    load_corpus,
    save_corpus,
    title_contexts,
    tokenize_corpus,
)
from .decoder import GeneratedSet, constrained_beam_search, decode_entity
from .evaluation import EvalReport, ProvenanceSet, bench, evaluate_run, r_precision
from .fm_index import FmIndex, IndexRange, build, load_index, save_index
from .identifiers import (
    CorpusStats,
    IdentifierSet,
    NgramDistribution,
    TokenWeightVector,
    aggregate_saturate,
    build_identifier_sets,
    ngram_distribution,
    repetition_rate,
    sample_identifiers,
    span_importance,
    surrogate_weights,
)
from .model import (
    CountTranslationModel,
    OracleModel,
    oracle_model,
    sequence_logprob,
    train_count_model,
)
from .prompts import (
    REGISTRY,
    QueryExample,
    Task,
    TaskSpec,
    TrainingRecord,
    compile_mixture,
    render_input,
)
from .scorer import (
    ScoredContext,
    ScoringParams,
    coverage_factor,
    ngram_weight,
    rank_contexts,
    unconditional_prob,
)

__version__ = "0.1.0"
