"""Next-token models used by the constrained decoder.

The decoder only needs ``next_token_logprobs(prompted_input, prefix,
allowed)`` returning a log-distribution over exactly the allowed ids.  Two
implementations ship here: a closed-form count/translation model trained
from the compiled mixture, and an oracle that routes probability mass to
known target n-grams (the test double the decoder contract is verified
against).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Mapping, Optional, Protocol, Sequence

import numpy as np

from . import _binio
from .corpus import SEP_ID, UNK_ID, TokenizedCorpus
from .fm_index import FmIndex
from .prompts import TrainingRecord

_MODEL_MAGIC = b"NGM1"
_MODEL_VERSION = 1
_KIND_COUNT = 0
_KIND_ORACLE = 1

DEFAULT_MIX = 0.5
DEFAULT_SMOOTHING = 0.1

ORACLE_GOLD_MASS = 0.99


class SequenceModel(Protocol):
    def next_token_logprobs(
        self,
        prompted_input: Sequence[int],
        prefix: Sequence[int],
        allowed: Sequence[int],
    ) -> np.ndarray: ...


def _uniform(k: int) -> np.ndarray:
    return np.full(k, -np.log(k))


@dataclass
class CountTranslationModel:
    """Mixture of a query-conditioned translation table and a corpus bigram
    model, additively smoothed and renormalized over the allowed set."""

    vocab_size: int
    trans_counts: dict[int, dict[int, int]]
    bigram_counts: dict[int, dict[int, int]]
    unigram_counts: dict[int, int]
    lam: float = DEFAULT_MIX
    mu: float = DEFAULT_SMOOTHING

    _row_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _input_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def _dense_row(self, table_name: str, key: int) -> tuple[np.ndarray, float]:
        cache_key = (table_name, key)
        hit = self._row_cache.get(cache_key)
        if hit is not None:
            return hit
        table = self.trans_counts if table_name == "trans" else self.bigram_counts
        row = np.zeros(self.vocab_size, dtype=np.float64)
        entries = table.get(key)
        total = 0.0
        if entries:
            for tok, cnt in entries.items():
                row[tok] = cnt
                total += cnt
        self._row_cache[cache_key] = (row, total)
        return row, total

    def _translation_context(
        self, prompted_input: tuple[int, ...]
    ) -> tuple[np.ndarray, float]:
        hit = self._input_cache.get(prompted_input)
        if hit is not None:
            return hit
        vec = np.zeros(self.vocab_size, dtype=np.float64)
        total = 0.0
        for q in prompted_input:
            row, row_total = self._dense_row("trans", int(q))
            vec = vec + row
            total += row_total
        self._input_cache[prompted_input] = (vec, total)
        return vec, total

    def next_token_logprobs(self, prompted_input, prefix, allowed) -> np.ndarray:
        allowed = np.asarray(allowed, dtype=np.int64)
        k = allowed.size
        if k == 0:
            raise ValueError("allowed set is empty")
        vec, total = self._translation_context(tuple(int(q) for q in prompted_input))
        p_trans = (vec[allowed] + self.mu) / (total + self.mu * k)
        if len(prefix):
            row, row_total = self._dense_row("bigram", int(prefix[-1]))
            p_bigram = (row[allowed] + self.mu) / (row_total + self.mu * k)
        else:
            p_bigram = np.full(k, 1.0 / k)
        p = self.lam * p_trans + (1.0 - self.lam) * p_bigram
        p = p / p.sum()
        return np.log(p)


def train_count_model(
    mixture: Sequence[TrainingRecord],
    tc: TokenizedCorpus,
    lam: float = DEFAULT_MIX,
    mu: float = DEFAULT_SMOOTHING,
) -> CountTranslationModel:
    """Single deterministic pass: input-token/target-token co-occurrence
    counts from the mixture, bigram and unigram counts from the corpus
    stream (separators break bigrams)."""
    mixture = list(mixture)
    if not mixture:
        raise ValueError("empty training mixture")
    trans: dict[int, dict[int, int]] = {}
    for rec in mixture:
        for q in rec.prompted_input:
            if q == UNK_ID:  # the unknown bucket carries no lexical evidence
                continue
            row = trans.setdefault(int(q), {})
            for w in rec.target:
                row[int(w)] = row.get(int(w), 0) + 1

    bigram: dict[int, dict[int, int]] = {}
    unigram: dict[int, int] = {}
    stream = tc.stream
    prev = None
    for tok in stream:
        tok = int(tok)
        if tok == SEP_ID:
            prev = None
            continue
        unigram[tok] = unigram.get(tok, 0) + 1
        if prev is not None:
            row = bigram.setdefault(prev, {})
            row[tok] = row.get(tok, 0) + 1
        prev = tok

    return CountTranslationModel(
        vocab_size=tc.vocab_size,
        trans_counts=trans,
        bigram_counts=bigram,
        unigram_counts=unigram,
        lam=lam,
        mu=mu,
    )


class OracleModel:
    """Routes 0.99 of the probability mass onto tokens continuing any known
    target n-gram of the current input; uniform everywhere else."""

    def __init__(self, gold: Mapping[Hashable, Sequence[Sequence[int]]]):
        self._gold: dict[tuple[int, ...], list[tuple[int, ...]]] = {
            tuple(key): [tuple(int(t) for t in g) for g in grams]
            for key, grams in gold.items()
        }

    def next_token_logprobs(self, prompted_input, prefix, allowed) -> np.ndarray:
        allowed = np.asarray(allowed, dtype=np.int64)
        k = allowed.size
        if k == 0:
            raise ValueError("allowed set is empty")
        grams = self._gold.get(tuple(int(t) for t in prompted_input))
        if not grams:
            return _uniform(k)
        prefix = tuple(int(t) for t in prefix)
        continuations = {
            g[len(prefix)]
            for g in grams
            if len(g) > len(prefix) and g[: len(prefix)] == prefix
        }
        continuations &= set(int(t) for t in allowed)
        if not continuations:
            return _uniform(k)
        n_other = k - len(continuations)
        gold_share = ORACLE_GOLD_MASS / len(continuations)
        other_share = (1.0 - ORACLE_GOLD_MASS) / n_other if n_other else 0.0
        probs = np.where(np.isin(allowed, list(continuations)), gold_share, other_share)
        probs = probs / probs.sum()
        return np.log(probs)


def oracle_model(
    gold: Mapping[Hashable, Sequence[Sequence[int]]],
    *,
    inputs: Optional[Mapping[Hashable, Sequence[int]]] = None,
) -> OracleModel:
    """Oracle keyed by prompted-input token tuples.

    ``gold`` maps query keys to target n-grams.  When ``inputs`` is given it
    converts query-id keys to their rendered prompted-input tokens;
    otherwise the keys must already be token tuples.  Unknown inputs score
    uniformly.
    """
    if inputs is not None:
        gold = {
            tuple(int(t) for t in inputs[qid]): grams
            for qid, grams in gold.items()
            if qid in inputs
        }
    return OracleModel(gold)


def sequence_logprob(
    model: SequenceModel,
    prompted_input: Sequence[int],
    ngram: Sequence[int],
    index: FmIndex,
) -> float:
    """Chain-rule log-probability of decoding ``ngram``, each step
    renormalized over the index's valid successor set."""
    rng = index.full_range()
    prefix: list[int] = []
    total = 0.0
    for token in ngram:
        token = int(token)
        entries, _ = index.successors(rng)
        allowed = [tok for tok, _ in entries]
        if token not in allowed:
            raise ValueError("n-gram does not occur in the corpus")
        logprobs = model.next_token_logprobs(prompted_input, prefix, allowed)
        pos = allowed.index(token)
        total += float(logprobs[pos])
        rng = entries[pos][1]
        prefix.append(token)
    return total


@dataclass
class StoredOracle:
    """Serialized oracle targets, keyed by query id until rendered."""

    gold: dict[str, list[tuple[int, ...]]]


def parameter_count(model) -> int:
    """Size of the model's learned tables (the parameter column of the
    resource report)."""
    if isinstance(model, CountTranslationModel):
        return (
            sum(len(r) for r in model.trans_counts.values())
            + sum(len(r) for r in model.bigram_counts.values())
            + len(model.unigram_counts)
        )
    if isinstance(model, StoredOracle):
        return sum(len(g) for grams in model.gold.values() for g in grams)
    if isinstance(model, OracleModel):
        return sum(len(g) for grams in model._gold.values() for g in grams)
    return 0


def _write_table(w: _binio.Writer, table: dict[int, dict[int, int]]) -> None:
    w.u64(len(table))
    for key in sorted(table):
        row = table[key]
        w.u32(key)
        w.u64(len(row))
        for tok in sorted(row):
            w.u32(tok)
            w.u64(row[tok])


def _read_table(r: _binio.Reader) -> dict[int, dict[int, int]]:
    table: dict[int, dict[int, int]] = {}
    for _ in range(r.u64()):
        key = r.u32()
        row: dict[int, int] = {}
        for _ in range(r.u64()):
            tok = r.u32()
            row[tok] = r.u64()
        table[key] = row
    return table


def serialize_count_model(model: CountTranslationModel) -> bytes:
    w = _binio.Writer()
    w.magic(_MODEL_MAGIC)
    w.u32(_MODEL_VERSION)
    w.u8(_KIND_COUNT)
    w.u32(model.vocab_size)
    w.f64(model.lam)
    w.f64(model.mu)
    _write_table(w, model.trans_counts)
    _write_table(w, model.bigram_counts)
    w.u64(len(model.unigram_counts))
    for tok in sorted(model.unigram_counts):
        w.u32(tok)
        w.u64(model.unigram_counts[tok])
    return w.getvalue()


def serialize_oracle(oracle: StoredOracle) -> bytes:
    w = _binio.Writer()
    w.magic(_MODEL_MAGIC)
    w.u32(_MODEL_VERSION)
    w.u8(_KIND_ORACLE)
    w.u64(len(oracle.gold))
    for qid in sorted(oracle.gold):
        w.text(qid)
        grams = oracle.gold[qid]
        w.u64(len(grams))
        for gram in grams:
            w.u64(len(gram))
            for tok in gram:
                w.u32(tok)
    return w.getvalue()


def deserialize_model(data: bytes):
    r = _binio.Reader(data)
    r.magic(_MODEL_MAGIC)
    version = r.u32()
    if version != _MODEL_VERSION:
        raise ValueError(f"unsupported model file version {version}")
    kind = r.u8()
    if kind == _KIND_COUNT:
        vocab_size = r.u32()
        lam = r.f64()
        mu = r.f64()
        trans = _read_table(r)
        bigram = _read_table(r)
        unigram: dict[int, int] = {}
        for _ in range(r.u64()):
            tok = r.u32()
            unigram[tok] = r.u64()
        return CountTranslationModel(
            vocab_size=vocab_size,
            trans_counts=trans,
            bigram_counts=bigram,
            unigram_counts=unigram,
            lam=lam,
            mu=mu,
        )
    if kind == _KIND_ORACLE:
        gold: dict[str, list[tuple[int, ...]]] = {}
        for _ in range(r.u64()):
            qid = r.text()
            grams = []
            for _ in range(r.u64()):
                grams.append(tuple(r.u32() for _ in range(r.u64())))
            gold[qid] = grams
        return StoredOracle(gold=gold)
    raise ValueError(f"unknown model kind {kind}")


def save_model(model, path) -> None:
    if isinstance(model, CountTranslationModel):
        Path(path).write_bytes(serialize_count_model(model))
    elif isinstance(model, StoredOracle):
        Path(path).write_bytes(serialize_oracle(model))
    else:
        raise TypeError(f"cannot serialize model of type {type(model)!r}")


def load_model(path):
    return deserialize_model(Path(path).read_bytes())
