"""Task registry with discrete prompts and training-mixture compilation."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, Sequence

from .corpus import Granularity, Tokenizer
from .identifiers import IdentifierSet, Ngram

CONTINUOUS_PROMPT_LENGTH = 6  # reserved slot count for learned prompt vectors


class Task(str, Enum):
    DR = "DR"
    PR = "PR"
    SR = "SR"
    ER = "ER"


@dataclass(frozen=True)
class TaskSpec:
    task: Task
    granularity: Granularity
    discrete_prompt: str
    anchor_text: str
    continuous_prompt_length: int = CONTINUOUS_PROMPT_LENGTH


REGISTRY: dict[Task, TaskSpec] = {
    Task.DR: TaskSpec(
        Task.DR, Granularity.DOCUMENT, "Find the relevant document:", "document"
    ),
    Task.PR: TaskSpec(
        Task.PR, Granularity.PASSAGE, "Find the relevant passage:", "passage"
    ),
    Task.SR: TaskSpec(
        Task.SR, Granularity.SENTENCE, "Find the relevant sentence:", "sentence"
    ),
    Task.ER: TaskSpec(
        Task.ER, Granularity.ENTITY, "Find the relevant entity:", "entity"
    ),
}

DEFAULT_SET_SIZES: dict[Task, int] = {Task.DR: 10, Task.PR: 10, Task.SR: 5, Task.ER: 1}


@dataclass(frozen=True)
class QueryExample:
    query_id: str
    text: str
    gold_context_id: int


@dataclass(frozen=True)
class TrainingRecord:
    task: Task
    prompted_input: tuple[int, ...]
    target: Ngram
    query_id: str


def render_input(
    task: Task | TaskSpec, query: str, tokenizer: Tokenizer
) -> list[int]:
    """Prompt tokens followed by query tokens."""
    spec = task if isinstance(task, TaskSpec) else REGISTRY[Task(task)]
    if not query or not query.strip():
        raise ValueError("empty query")
    return tokenizer.tokenize(spec.discrete_prompt) + tokenizer.tokenize(query)


def compile_mixture(
    datasets: Sequence[tuple[Task, Sequence[QueryExample]]],
    identifier_sets: Sequence[Mapping[int, IdentifierSet]],
    tokenizer: Tokenizer,
) -> Iterator[TrainingRecord]:
    """Round-robin the datasets query by query, fanning each query out into
    one record per identifier n-gram of its gold context."""
    if len(datasets) != len(identifier_sets):
        raise ValueError("each dataset needs its own identifier-set mapping")
    queues = [
        (Task(task), list(examples), identifier_sets[i])
        for i, (task, examples) in enumerate(datasets)
    ]
    positions = [0] * len(queues)
    active = deque(i for i, (_, examples, _) in enumerate(queues) if examples)
    while active:
        qi = active.popleft()
        task, examples, idents = queues[qi]
        example = examples[positions[qi]]
        positions[qi] += 1
        if positions[qi] < len(examples):
            active.append(qi)
        ident = idents.get(example.gold_context_id)
        if ident is None:
            raise ValueError(
                f"no identifier set for context {example.gold_context_id} "
                f"(query {example.query_id})"
            )
        prompted = tuple(render_input(task, example.text, tokenizer))
        for gram in ident.ngrams:
            yield TrainingRecord(
                task=task,
                prompted_input=prompted,
                target=tuple(gram),
                query_id=example.query_id,
            )


def save_mixture(records, path) -> int:
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "task": rec.task.value,
                        "query_id": rec.query_id,
                        "input_tokens": list(rec.prompted_input),
                        "target_tokens": list(rec.target),
                    }
                )
                + "\n"
            )
            written += 1
    return written


def load_mixture(path) -> list[TrainingRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            records.append(
                TrainingRecord(
                    task=Task(rec["task"]),
                    prompted_input=tuple(int(t) for t in rec["input_tokens"]),
                    target=tuple(int(t) for t in rec["target_tokens"]),
                    query_id=str(rec["query_id"]),
                )
            )
    return records


def load_queries(path) -> list[dict]:
    """Query records {query_id, task?, text, gold?: [context ids]}."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            out.append(json.loads(line))
    return out
