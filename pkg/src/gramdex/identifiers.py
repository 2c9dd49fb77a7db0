"""Sampled important-n-gram identifiers.

Per-token importance weights (from an external file or the built-in idf
surrogate) are averaged over spans, summed over repeated positions, passed
through a saturation curve, and softmax-normalized into a distribution that
identifier n-grams are sampled from without replacement.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import Granularity, TokenizedCorpus

Ngram = tuple[int, ...]

DEFAULT_NGRAM_LENGTH = 10
DEFAULT_SET_SIZE = 10
DEFAULT_SATURATION_RHO = 0.01
SURROGATE_QUERY_BONUS = 1.0


@dataclass
class TokenWeightVector:
    """Non-negative per-token importance for one context."""

    context_id: int
    weights: np.ndarray
    provider: str = "external_file"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.size == 0:
            raise ValueError("weights must be a non-empty 1-d vector")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("weights must be finite and non-negative")


@dataclass
class NgramDistribution:
    """Probability over the distinct n-grams of one context; sums to 1."""

    context_id: int
    entries: dict[Ngram, float]
    saturation_rho: float


@dataclass
class IdentifierSet:
    """Up to ``v`` sampled n-grams standing in for one context."""

    context_id: int
    ngrams: list[Ngram]
    v: int
    n: int


@dataclass
class CorpusStats:
    """Document frequencies backing the surrogate weight provider."""

    n_contexts: int
    doc_freq: dict[int, int]

    @classmethod
    def from_corpus(cls, tc: TokenizedCorpus) -> "CorpusStats":
        df: dict[int, int] = {}
        for cid in range(tc.n_contexts):
            for tok in set(int(t) for t in tc.context_tokens(cid)):
                df[tok] = df.get(tok, 0) + 1
        return cls(n_contexts=tc.n_contexts, doc_freq=df)


def span_importance(w: TokenWeightVector, n: int) -> dict[int, float]:
    """Mean token weight of each length-``n`` span.

    A context shorter than ``n`` yields the single whole-context span.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    weights = w.weights
    if weights.size < n:
        return {0: float(weights.mean())}
    sums = np.convolve(weights, np.ones(n), mode="valid")
    return {j: float(sums[j] / n) for j in range(weights.size - n + 1)}


def aggregate_saturate(
    spans: Mapping[int, float], tokens: Sequence[int], rho: float
) -> dict[Ngram, float]:
    """Sum span importances of identical n-grams, then saturate each total
    through x / (rho + x); results lie in [0, 1)."""
    if rho <= 0:
        raise ValueError("rho must be > 0")
    if not spans:
        raise ValueError("no spans given")
    n = len(tokens) - len(spans) + 1
    if n < 1:
        raise ValueError("span map does not match the token sequence")
    totals: dict[Ngram, float] = {}
    for start, value in spans.items():
        gram = tuple(int(t) for t in tokens[start : start + n])
        if len(gram) != n:
            raise ValueError(f"span start {start} exceeds the token sequence")
        totals[gram] = totals.get(gram, 0.0) + float(value)
    return {gram: total / (rho + total) for gram, total in totals.items()}


def ngram_distribution(
    sat: Mapping[Ngram, float], rho: float, context_id: int = -1
) -> NgramDistribution:
    """Softmax over saturated importances of the distinct n-grams."""
    if not sat:
        raise ValueError("cannot normalize an empty n-gram map")
    values = np.array(list(sat.values()), dtype=np.float64)
    exps = np.exp(values - values.max())
    probs = exps / exps.sum()
    entries = {gram: float(p) for gram, p in zip(sat.keys(), probs)}
    return NgramDistribution(
        context_id=context_id, entries=entries, saturation_rho=rho
    )


def sample_identifiers(dist: NgramDistribution, v: int, seed: int) -> IdentifierSet:
    """Sample ``v`` distinct n-grams without replacement, proportionally to
    their probabilities with sequential renormalization.  Deterministic for
    a fixed seed; fewer than ``v`` distinct n-grams yields all of them."""
    if v < 1:
        raise ValueError("v must be >= 1")
    items = [(gram, p) for gram, p in dist.entries.items()]
    rng = random.Random(seed)
    chosen: list[Ngram] = []
    total = sum(p for _, p in items)
    for _ in range(min(v, len(items))):
        draw = rng.random() * total
        acc = 0.0
        pick = len(items) - 1
        for i, (_, p) in enumerate(items):
            acc += p
            if draw < acc:
                pick = i
                break
        gram, p = items.pop(pick)
        chosen.append(gram)
        total -= p
    n = max(len(g) for g in chosen)
    return IdentifierSet(context_id=dist.context_id, ngrams=chosen, v=v, n=n)


def surrogate_weights(
    query: Sequence[int],
    context_id: int,
    context_tokens: Sequence[int],
    stats: CorpusStats,
) -> TokenWeightVector:
    """Idf-based stand-in for an external attention provider.

    Each token scores idf(t) * (1 + bonus) when it appears in the query and
    plain idf(t) otherwise, normalized to sum 1 (uniform if everything has
    zero idf).
    """
    if len(context_tokens) == 0:
        raise ValueError("context has no tokens")
    query_set = set(int(q) for q in query)
    n = stats.n_contexts
    raw = np.empty(len(context_tokens), dtype=np.float64)
    for i, tok in enumerate(context_tokens):
        tok = int(tok)
        idf = math.log((1 + n) / (1 + stats.doc_freq.get(tok, 0)))
        raw[i] = idf * ((1.0 + SURROGATE_QUERY_BONUS) if tok in query_set else 1.0)
    total = raw.sum()
    if total <= 0:
        raw = np.full(len(context_tokens), 1.0 / len(context_tokens))
    else:
        raw /= total
    return TokenWeightVector(context_id=context_id, weights=raw, provider="surrogate")


def repetition_rate(sets: Sequence[IdentifierSet]) -> float:
    """Fraction of contexts sharing at least one identifier n-gram with a
    different context."""
    if not sets:
        raise ValueError("need at least one identifier set")
    owners: dict[Ngram, set[int]] = {}
    for ident in sets:
        for gram in ident.ngrams:
            owners.setdefault(gram, set()).add(ident.context_id)
    repeated = sum(
        1
        for ident in sets
        if any(len(owners[gram]) > 1 for gram in ident.ngrams)
    )
    return repeated / len(sets)


def build_identifier_sets(
    tc: TokenizedCorpus,
    *,
    n: int = DEFAULT_NGRAM_LENGTH,
    v: int = DEFAULT_SET_SIZE,
    rho: float = DEFAULT_SATURATION_RHO,
    seed: int = 0,
    external_weights: Optional[Mapping[int, Sequence[float]]] = None,
    query_tokens: Sequence[int] = (),
) -> dict[int, IdentifierSet]:
    """Identifier sets for every context of a corpus.

    Entity corpora use the whole title as the single identifier.  Other
    granularities run the span/saturation/sampling pipeline per context with
    a per-context seed of ``seed ^ context_id``.
    """
    out: dict[int, IdentifierSet] = {}
    if tc.granularity is Granularity.ENTITY:
        for cid in range(tc.n_contexts):
            gram = tuple(int(t) for t in tc.context_tokens(cid))
            out[cid] = IdentifierSet(context_id=cid, ngrams=[gram], v=1, n=len(gram))
        return out

    stats = CorpusStats.from_corpus(tc) if external_weights is None else None
    for cid in range(tc.n_contexts):
        tokens = tc.context_tokens(cid)
        if external_weights is not None:
            if cid not in external_weights:
                raise ValueError(f"no external weights for context {cid}")
            weights = TokenWeightVector(
                context_id=cid,
                weights=np.asarray(external_weights[cid], dtype=np.float64),
                provider="external_file",
            )
            if weights.weights.size != tokens.size:
                raise ValueError(
                    f"context {cid}: {weights.weights.size} weights for "
                    f"{tokens.size} tokens"
                )
        else:
            weights = surrogate_weights(query_tokens, cid, tokens, stats)
        spans = span_importance(weights, n)
        sat = aggregate_saturate(spans, [int(t) for t in tokens], rho)
        dist = ngram_distribution(sat, rho, context_id=cid)
        out[cid] = sample_identifiers(dist, v, seed ^ cid)
    return out


def load_weight_file(path) -> dict[int, list[float]]:
    """Attention-weight exchange records: {context_id, weights: [float]}."""
    weights: dict[int, list[float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            weights[int(rec["context_id"])] = [float(x) for x in rec["weights"]]
    return weights


def save_identifier_sets(sets: Mapping[int, IdentifierSet], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cid in sorted(sets):
            ident = sets[cid]
            fh.write(
                json.dumps(
                    {
                        "context_id": ident.context_id,
                        "ngrams": [list(g) for g in ident.ngrams],
                    }
                )
                + "\n"
            )


def load_identifier_sets(path) -> dict[int, IdentifierSet]:
    sets: dict[int, IdentifierSet] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            grams = [tuple(int(t) for t in g) for g in rec["ngrams"]]
            cid = int(rec["context_id"])
            sets[cid] = IdentifierSet(
                context_id=cid,
                ngrams=grams,
                v=len(grams),
                n=max(len(g) for g in grams) if grams else 0,
            )
    return sets
