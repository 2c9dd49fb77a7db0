"""Corpus ingestion and tokenization.

Raw records (one JSON object per line with ``id``/``title``/``text`` fields)
are cut into retrievable contexts at one of four granularities, tokenized
with a deterministic whitespace/punctuation tokenizer, and laid out as a
single separator-delimited token stream plus per-context boundary offsets.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from . import _binio

SEP_ID = 0  # context separator, never produced from text
UNK_ID = 1  # bucket for out-of-vocabulary query words
FIRST_REAL_ID = 2

DEFAULT_PASSAGE_TOKENS = 100

_WORD_RE = re.compile(r"\w+|[^\w\s]")
_WS_RE = re.compile(r"\s+")
_SENTENCE_SPLITTERS = {
    "simple": re.compile(r"(?<=[.!?])\s+"),
}

_CORPUS_MAGIC = b"NGC1"
_CORPUS_VERSION = 1


class Granularity(str, Enum):
    DOCUMENT = "document"
    PASSAGE = "passage"
    SENTENCE = "sentence"
    ENTITY = "entity"


class RecordError(ValueError):
    """A malformed input record, reported with its 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"record {line_no}: {message}")
        self.line_no = line_no


@dataclass
class Context:
    """One retrievable unit with provenance to its source document."""

    context_id: int
    granularity: Granularity
    text: str
    source_doc_id: str
    title: Optional[str] = None


@dataclass(frozen=True)
class TokenizerRules:
    case_fold: bool = True
    split_punctuation: bool = True


class Tokenizer:
    """Word tokenizer with a vocabulary built in first-seen order.

    Id 0 is the context separator and id 1 the unknown bucket; real tokens
    start at 2.  While unfrozen, new words extend the vocabulary; once
    frozen (after the corpus is built) unseen words map to ``UNK_ID``, which
    never occurs in the indexed stream.
    """

    def __init__(self, rules: TokenizerRules | None = None):
        self.rules = rules or TokenizerRules()
        self.vocabulary: dict[str, int] = {}
        self._strings: list[str] = []
        self.frozen = False

    @property
    def vocab_size(self) -> int:
        return FIRST_REAL_ID + len(self._strings)

    def words(self, text: str) -> list[str]:
        if self.rules.case_fold:
            text = text.lower()
        if self.rules.split_punctuation:
            return _WORD_RE.findall(text)
        return text.split()

    def tokenize(self, text: str) -> list[int]:
        ids = []
        for word in self.words(text):
            tid = self.vocabulary.get(word)
            if tid is None:
                if self.frozen:
                    tid = UNK_ID
                else:
                    tid = FIRST_REAL_ID + len(self._strings)
                    self.vocabulary[word] = tid
                    self._strings.append(word)
            ids.append(tid)
        return ids

    def token_string(self, token_id: int) -> str:
        if token_id == UNK_ID:
            return "<unk>"
        if token_id == SEP_ID:
            raise ValueError("separator id has no surface form")
        return self._strings[token_id - FIRST_REAL_ID]

    def detokenize(self, ids: Sequence[int]) -> str:
        return " ".join(self.token_string(tid) for tid in ids)


@dataclass
class TokenizedCorpus:
    """Separator-delimited token stream over all contexts of one granularity.

    ``stream[boundaries[i] : boundaries[i+1] - 1]`` are the tokens of context
    ``i`` and the position just before the next boundary holds the separator.
    Immutable after construction; safe for concurrent readers.
    """

    vocab_size: int
    stream: np.ndarray  # uint32, each context followed by one SEP_ID
    boundaries: np.ndarray  # int64, start offset of each context
    granularity: Granularity
    tokenizer: Tokenizer

    @property
    def n_contexts(self) -> int:
        return len(self.boundaries)

    def context_length(self, context_id: int) -> int:
        start = int(self.boundaries[context_id])
        end = (
            int(self.boundaries[context_id + 1])
            if context_id + 1 < self.n_contexts
            else len(self.stream)
        )
        return end - start - 1  # drop the separator

    def context_tokens(self, context_id: int) -> np.ndarray:
        start = int(self.boundaries[context_id])
        return self.stream[start : start + self.context_length(context_id)]

    def context_lengths(self) -> np.ndarray:
        ends = np.append(self.boundaries[1:], len(self.stream))
        return ends - self.boundaries - 1


def normalize_whitespace(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def sentence_splitter_ids() -> list[str]:
    return sorted(_SENTENCE_SPLITTERS)


def _split_passages(text: str, passage_tokens: int) -> list[str]:
    words = text.split()
    return [
        " ".join(words[i : i + passage_tokens])
        for i in range(0, len(words), passage_tokens)
    ]


def ingest(
    records: Iterable[dict],
    granularity: Granularity,
    *,
    passage_tokens: int = DEFAULT_PASSAGE_TOKENS,
    sentence_splitter: str = "simple",
) -> list[Context]:
    """Cut raw records into contexts at the requested granularity.

    Documents map one-to-one, passages are non-overlapping fixed token
    windows, sentences come from the named splitter rule, and entities keep
    their description as text with the entity name in ``title``.
    """
    granularity = Granularity(granularity)
    if passage_tokens < 1:
        raise ValueError("passage_tokens must be >= 1")
    try:
        splitter = _SENTENCE_SPLITTERS[sentence_splitter]
    except KeyError:
        raise ValueError(f"unknown sentence splitter {sentence_splitter!r}") from None

    contexts: list[Context] = []
    n_records = 0
    for line_no, rec in enumerate(records, start=1):
        n_records += 1
        if not isinstance(rec, dict):
            raise RecordError(line_no, "expected a JSON object")
        source_id = rec.get("id")
        if source_id is None:
            raise RecordError(line_no, "missing source key 'id'")
        source_id = str(source_id)
        raw_text = rec.get("text")
        if not isinstance(raw_text, str):
            raise RecordError(line_no, "missing text body")
        text = normalize_whitespace(raw_text)
        if not text:
            raise RecordError(line_no, "text is empty after normalization")
        title = rec.get("title")
        title = normalize_whitespace(title) if isinstance(title, str) else None

        if granularity is Granularity.DOCUMENT:
            pieces = [text]
        elif granularity is Granularity.PASSAGE:
            pieces = _split_passages(text, passage_tokens)
        elif granularity is Granularity.SENTENCE:
            pieces = [s for s in (p.strip() for p in splitter.split(text)) if s]
        else:  # entity: (title, description) pair
            if not title:
                raise RecordError(line_no, "entity record has no title")
            pieces = [text]

        for piece in pieces:
            contexts.append(
                Context(
                    context_id=len(contexts),
                    granularity=granularity,
                    text=piece,
                    source_doc_id=source_id,
                    title=title,
                )
            )

    if n_records == 0:
        raise ValueError("empty source: no records")
    return contexts


def title_contexts(contexts: Sequence[Context]) -> list[Context]:
    """Entity-title view: same ids, but each context's text is its title."""
    out = []
    for ctx in contexts:
        if not ctx.title:
            raise ValueError(f"context {ctx.context_id} has no title")
        out.append(
            Context(
                context_id=ctx.context_id,
                granularity=ctx.granularity,
                text=normalize_whitespace(ctx.title),
                source_doc_id=ctx.source_doc_id,
                title=ctx.title,
            )
        )
    return out


def tokenize_corpus(
    contexts: Sequence[Context], tokenizer: Tokenizer
) -> TokenizedCorpus:
    """Tokenize contexts into one separator-delimited stream.

    The tokenizer's vocabulary grows over the corpus in first-seen order and
    is frozen afterwards, so query-time tokenization maps unseen words to
    ``UNK_ID``.
    """
    if not contexts:
        raise ValueError("empty context list")
    granularity = contexts[0].granularity
    for i, ctx in enumerate(contexts):
        if ctx.granularity != granularity:
            raise ValueError("contexts mix granularities")
        if ctx.context_id != i:
            raise ValueError("context ids must be dense and 0-based")

    stream: list[int] = []
    boundaries = np.empty(len(contexts), dtype=np.int64)
    for ctx in contexts:
        ids = tokenizer.tokenize(ctx.text)
        if not ids:
            raise ValueError(f"context {ctx.context_id} tokenizes to zero tokens")
        boundaries[ctx.context_id] = len(stream)
        stream.extend(ids)
        stream.append(SEP_ID)
    tokenizer.frozen = True
    return TokenizedCorpus(
        vocab_size=tokenizer.vocab_size,
        stream=np.asarray(stream, dtype=np.uint32),
        boundaries=boundaries,
        granularity=granularity,
        tokenizer=tokenizer,
    )


def context_of_offset(tc: TokenizedCorpus, offset: int) -> int:
    """Context owning a stream position; separators belong to the context
    they terminate."""
    if not 0 <= offset < len(tc.stream):
        raise ValueError(f"offset {offset} outside stream of {len(tc.stream)}")
    return int(np.searchsorted(tc.boundaries, offset, side="right") - 1)


def iter_jsonl(path) -> Iterator[dict]:
    """Yield one record per non-empty line, raising ``RecordError`` with the
    line number on parse failure."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(line_no, f"invalid JSON: {exc}") from None


def serialize_corpus(tc: TokenizedCorpus) -> bytes:
    w = _binio.Writer()
    w.magic(_CORPUS_MAGIC)
    w.u32(_CORPUS_VERSION)
    flags = (1 if tc.tokenizer.rules.case_fold else 0) | (
        2 if tc.tokenizer.rules.split_punctuation else 0
    )
    w.u32(flags)
    w.text(tc.granularity.value)
    w.u32(tc.vocab_size)
    for token in tc.tokenizer._strings:
        w.text(token)
    w.array(tc.stream, np.uint32)
    w.array(tc.boundaries, np.int64)
    return w.getvalue()


def deserialize_corpus(data: bytes) -> TokenizedCorpus:
    r = _binio.Reader(data)
    r.magic(_CORPUS_MAGIC)
    version = r.u32()
    if version != _CORPUS_VERSION:
        raise ValueError(f"unsupported corpus file version {version}")
    flags = r.u32()
    granularity = Granularity(r.text())
    vocab_size = r.u32()
    tokenizer = Tokenizer(
        TokenizerRules(case_fold=bool(flags & 1), split_punctuation=bool(flags & 2))
    )
    for tid in range(FIRST_REAL_ID, vocab_size):
        word = r.text()
        tokenizer.vocabulary[word] = tid
        tokenizer._strings.append(word)
    tokenizer.frozen = True
    stream = r.array(np.uint32)
    boundaries = r.array(np.int64)
    return TokenizedCorpus(
        vocab_size=vocab_size,
        stream=stream,
        boundaries=boundaries,
        granularity=granularity,
        tokenizer=tokenizer,
    )


def save_corpus(tc: TokenizedCorpus, path) -> None:
    Path(path).write_bytes(serialize_corpus(tc))


def load_corpus(path) -> TokenizedCorpus:
    return deserialize_corpus(Path(path).read_bytes())
