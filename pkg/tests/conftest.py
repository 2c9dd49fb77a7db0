"""Shared corpus builders and synthetic retrieval fixtures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from gramdex.corpus import (
    Context,
    Granularity,
    TokenizedCorpus,
    Tokenizer,
    TokenizerRules,
    tokenize_corpus,
)
from gramdex.fm_index import FmIndex, build
from gramdex.identifiers import IdentifierSet, build_identifier_sets
from gramdex.model import OracleModel, oracle_model
from gramdex.prompts import Task, render_input


def corpus_of(
    texts, granularity: Granularity = Granularity.DOCUMENT, rules=None, titles=None
) -> TokenizedCorpus:
    contexts = [
        Context(
            context_id=i,
            granularity=granularity,
            text=text,
            source_doc_id=f"src{i}",
            title=titles[i] if titles else None,
        )
        for i, text in enumerate(texts)
    ]
    return tokenize_corpus(contexts, Tokenizer(rules or TokenizerRules()))


def random_word_texts(rng: np.random.Generator, n_contexts, vocab, min_len, max_len):
    return [
        " ".join(
            f"w{rng.integers(vocab)}" for _ in range(rng.integers(min_len, max_len + 1))
        )
        for _ in range(n_contexts)
    ]


def naive_match_starts(stream: np.ndarray, pattern) -> np.ndarray:
    """Independent scan oracle: all offsets where the pattern occurs."""
    stream = np.asarray(stream, dtype=np.int64)
    pattern = np.asarray(pattern, dtype=np.int64)
    n, length = stream.size, pattern.size
    if length > n:
        return np.empty(0, dtype=np.int64)
    candidates = np.nonzero(stream[: n - length + 1] == pattern[0])[0]
    if length > 1 and candidates.size:
        windows = stream[candidates[:, None] + np.arange(length)[None, :]]
        candidates = candidates[np.all(windows == pattern, axis=1)]
    return candidates


def naive_context_set(tc: TokenizedCorpus, pattern) -> set[int]:
    starts = naive_match_starts(tc.stream, pattern)
    return {
        int(np.searchsorted(tc.boundaries, s, side="right") - 1) for s in starts
    }


@dataclass
class RetrievalFixture:
    """Planted synthetic retrieval problem with disjoint per-context blocks.

    Every context draws words from its own block, so any n-gram pins down
    its context; queries mention a per-context keyword that exists in the
    corpus vocabulary.
    """

    task: Task
    tc: TokenizedCorpus
    index: FmIndex
    identifier_sets: dict[int, IdentifierSet]
    queries: list[dict]  # {query_id, task, text, gold}
    oracle: OracleModel

    def prompted(self, text: str) -> list[int]:
        return render_input(self.task, text, self.tc.tokenizer)


_TASK_SHAPE = {
    Task.DR: (Granularity.DOCUMENT, 30, 10, 10),
    Task.PR: (Granularity.PASSAGE, 24, 10, 10),
    Task.SR: (Granularity.SENTENCE, 7, 10, 5),
    Task.ER: (Granularity.ENTITY, 3, 10, 1),
}


def build_retrieval_fixture(
    task: Task, n_contexts: int = 100, seed: int = 0, queries_per_context: int = 1
) -> RetrievalFixture:
    granularity, ctx_len, n, v = _TASK_SHAPE[task]
    texts = []
    titles = []
    for i in range(n_contexts):
        words = [f"key{i}"] + [f"b{i}w{j}" for j in range(ctx_len - 1)]
        text = " ".join(words)
        if granularity is Granularity.ENTITY:
            titles.append(text)  # entity streams index the title
        texts.append(text)
    tc = corpus_of(texts, granularity, titles=titles if titles else None)
    index = build(tc)
    identifier_sets = build_identifier_sets(tc, n=n, v=v, rho=0.01, seed=seed)

    queries = []
    gold = {}
    for i in range(n_contexts):
        for k in range(queries_per_context):
            qid = f"q{i}_{k}"
            queries.append(
                {"query_id": qid, "task": task.value, "text": f"key{i}", "gold": [i]}
            )
            gold[qid] = [list(g) for g in identifier_sets[i].ngrams]
    inputs = {
        q["query_id"]: render_input(task, q["text"], tc.tokenizer) for q in queries
    }
    oracle = oracle_model(gold, inputs=inputs)
    return RetrievalFixture(
        task=task,
        tc=tc,
        index=index,
        identifier_sets=identifier_sets,
        queries=queries,
        oracle=oracle,
    )


@pytest.fixture(scope="session")
def dr_fixture() -> RetrievalFixture:
    return build_retrieval_fixture(Task.DR)
