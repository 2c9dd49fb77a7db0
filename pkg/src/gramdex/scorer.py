"""Context ranking from generated n-grams.

Each generated n-gram gets a clipped log-odds weight comparing its decoder
probability against its unconditional corpus frequency; a context's score
sums ``weight**alpha * cover`` over the generated n-grams it contains, where
the cover factor discounts n-grams whose tokens are already covered by the
top-g weighted ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .decoder import GeneratedSet, Ngram
from .fm_index import FmIndex

PROB_EPS = 1e-9

DEFAULT_ALPHA = 2.0
DEFAULT_BETA = 0.8
DEFAULT_TOP_G = 5
DEFAULT_RANK_LIMIT = 100


@dataclass(frozen=True)
class ScoringParams:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    g: int = DEFAULT_TOP_G

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.g < 1:
            raise ValueError("g must be >= 1")


@dataclass
class ScoredContext:
    context_id: int
    score: float
    contributors: list[tuple[Ngram, float, float]] = field(default_factory=list)


def unconditional_prob(index: FmIndex, ngram: Sequence[int]) -> float:
    """Occurrence count over the total number of same-length n-gram start
    positions in the stream."""
    count = index.count(ngram)
    if count == 0:
        raise ValueError("n-gram does not occur in the corpus")
    return count / index.ngram_positions(len(ngram))


def ngram_weight(p_m: float, p_mq: float) -> float:
    """Clipped log-odds of the decoder probability against the corpus one;
    zero whenever the decoder is no more confident than chance."""
    if not 0.0 < p_m < 1.0:
        raise ValueError(f"unconditional probability {p_m} outside (0, 1)")
    p_mq = min(max(p_mq, PROB_EPS), 1.0 - PROB_EPS)
    odds = (p_mq * (1.0 - p_m)) / (p_m * (1.0 - p_mq))
    return max(0.0, math.log(odds))


def _top_token_union(
    weighted: Sequence[tuple[Ngram, float]], g: int
) -> set[int]:
    ranked = sorted(weighted, key=lambda item: (-item[1], item[0]))
    union: set[int] = set()
    for gram, _ in ranked[:g]:
        union.update(gram)
    return union


def coverage_factor(
    ngram: Ngram,
    weighted: Sequence[tuple[Ngram, float]],
    params: ScoringParams,
) -> float:
    """Novelty factor in [1 - beta, 1]: the fraction of the n-gram's tokens
    outside the union of the top-g weighted n-grams' tokens."""
    if not weighted:
        raise ValueError("empty generated set")
    union = _top_token_union(weighted, params.g)
    tokens = set(ngram)
    novel = len(tokens - union) / len(tokens)
    return 1.0 - params.beta + params.beta * novel


def rank_contexts(
    index: FmIndex,
    generated: GeneratedSet,
    params: Optional[ScoringParams] = None,
    limit: int = DEFAULT_RANK_LIMIT,
) -> list[ScoredContext]:
    """Score and rank every context containing a generated n-gram.

    Ties break by ascending context id.  Unconditional probabilities are
    additionally clipped below 1 so the log-odds stay finite on degenerate
    corpora where an n-gram fills every same-length position.
    """
    params = params or ScoringParams()
    if not generated.entries:
        return []
    weighted: list[tuple[Ngram, float]] = []
    for gram, logprob in generated.entries:
        p_m = min(unconditional_prob(index, gram), 1.0 - PROB_EPS)
        weighted.append((gram, ngram_weight(p_m, math.exp(logprob))))

    covers = {
        gram: coverage_factor(gram, weighted, params) for gram, _ in weighted
    }
    scored: dict[int, ScoredContext] = {}
    for gram, weight in weighted:
        cover = covers[gram]
        term = weight**params.alpha * cover
        for cid in sorted(index.locate_contexts(gram)):
            ctx = scored.get(cid)
            if ctx is None:
                ctx = scored[cid] = ScoredContext(context_id=cid, score=0.0)
            ctx.score += term
            ctx.contributors.append((gram, weight, cover))
    ranked = sorted(scored.values(), key=lambda c: (-c.score, c.context_id))
    return ranked[:limit]
