"""BWT-based full-text index over the token stream.

The index is built on the reversed stream, so one backward-search step
extends a match by one token on the *right* in original text order.  The
sentinel is stored as id ``vocab_size`` but collates before every real id,
which keeps ``c_table`` contiguous: ``c_table[t]`` counts positions holding
an id that sorts below ``t``, and ``c_table[vocab_size] == len(bwt)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _binio
from .corpus import SEP_ID, TokenizedCorpus

log = logging.getLogger(__name__)

_INDEX_MAGIC = b"NGX1"
_INDEX_VERSION = 1

DEFAULT_SA_SAMPLE_RATE = 32
DEFAULT_CHECKPOINT_STRIDE = 128


class IndexRange(NamedTuple):
    """Half-open row range of the conceptual sorted rotation matrix."""

    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo

    @property
    def empty(self) -> bool:
        return self.hi <= self.lo


def _suffix_array(seq: np.ndarray) -> np.ndarray:
    """Deterministic prefix-doubling suffix array over non-negative ints."""
    n = seq.size
    rank = seq.astype(np.int64)
    k = 1
    while True:
        key2 = np.full(n, -1, dtype=np.int64)
        if k < n:
            key2[: n - k] = rank[k:]
        order = np.lexsort((key2, rank))
        sorted1 = rank[order]
        sorted2 = key2[order]
        changed = np.empty(n, dtype=np.int64)
        changed[0] = 0
        if n > 1:
            changed[1:] = (sorted1[1:] != sorted1[:-1]) | (sorted2[1:] != sorted2[:-1])
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.cumsum(changed)
        if rank[order[-1]] == n - 1:
            return order.astype(np.int64)
        k *= 2


@dataclass
class FmIndex:
    """Succinct index answering count / rightward extension / locate.

    Immutable after build; all query methods are read-only and safe for
    concurrent callers.
    """

    bwt: np.ndarray  # uint32, len == |stream| + 1
    c_table: np.ndarray  # int64, len == vocab_size + 1
    occ_checkpoints: np.ndarray  # int64, (n_blocks, vocab_size + 1)
    checkpoint_stride: int
    sample_rate: int
    ssa_rows: np.ndarray  # int64, ascending BWT rows with a known offset
    ssa_offsets: np.ndarray  # int64, reversed-stream suffix start offsets
    boundaries: np.ndarray  # int64, context start offsets in the stream
    vocab_size: int

    _full_successors: Optional[tuple] = field(default=None, repr=False, compare=False)
    _sorted_lengths: Optional[np.ndarray] = field(
        default=None, repr=False, compare=False
    )
    _length_tail_sums: Optional[np.ndarray] = field(
        default=None, repr=False, compare=False
    )

    # -- basic geometry ---------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.bwt)

    @property
    def stream_length(self) -> int:
        return len(self.bwt) - 1

    @property
    def n_contexts(self) -> int:
        return len(self.boundaries)

    def full_range(self) -> IndexRange:
        return IndexRange(0, len(self.bwt))

    def context_lengths(self) -> np.ndarray:
        ends = np.append(self.boundaries[1:], self.stream_length)
        return ends - self.boundaries - 1

    def context_of_offset(self, offset: int) -> int:
        if not 0 <= offset < self.stream_length:
            raise ValueError(f"offset {offset} outside stream")
        return int(np.searchsorted(self.boundaries, offset, side="right") - 1)

    # -- rank / LF primitives ---------------------------------------------

    def occ(self, token: int, prefix_len: int) -> int:
        """Occurrences of ``token`` in ``bwt[0:prefix_len]``."""
        block = prefix_len // self.checkpoint_stride
        count = int(self.occ_checkpoints[block, token])
        start = block * self.checkpoint_stride
        if prefix_len > start:
            count += int(np.count_nonzero(self.bwt[start:prefix_len] == token))
        return count

    def _occ_many(self, tokens: np.ndarray, prefix_len: int) -> np.ndarray:
        block = prefix_len // self.checkpoint_stride
        counts = self.occ_checkpoints[block][tokens]
        start = block * self.checkpoint_stride
        if prefix_len > start:
            residue = np.bincount(
                self.bwt[start:prefix_len].astype(np.int64),
                minlength=self.vocab_size + 1,
            )
            counts = counts + residue[tokens]
        return counts

    def lf(self, row: int) -> int:
        """Row of the suffix starting one position earlier (LF-mapping)."""
        token = int(self.bwt[row])
        bucket = 0 if token == self.vocab_size else int(self.c_table[token])
        return bucket + self.occ(token, row)

    def _lf_many(self, rows: np.ndarray) -> np.ndarray:
        tokens = self.bwt[rows].astype(np.int64)
        buckets = np.where(tokens == self.vocab_size, 0, self.c_table[tokens])
        blocks = rows // self.checkpoint_stride
        counts = self.occ_checkpoints[blocks, tokens]
        offsets = rows - blocks * self.checkpoint_stride
        width = int(offsets.max(initial=0))
        if width > 0:
            cols = np.arange(width, dtype=np.int64)
            starts = blocks * self.checkpoint_stride
            idx = np.minimum(starts[:, None] + cols[None, :], len(self.bwt) - 1)
            hits = (self.bwt[idx] == tokens[:, None]) & (cols[None, :] < offsets[:, None])
            counts = counts + hits.sum(axis=1)
        return buckets + counts

    # -- search -------------------------------------------------------------

    def extend_range(self, rng: IndexRange, token: int) -> IndexRange:
        """Match range for the current n-gram extended by ``token`` on the
        right; an empty result means the extension never occurs."""
        if not 0 <= rng.lo <= rng.hi <= len(self.bwt):
            raise ValueError(f"invalid range {rng}")
        if not 0 <= token < self.vocab_size:
            raise ValueError(f"token {token} outside vocabulary")
        base = int(self.c_table[token])
        return IndexRange(base + self.occ(token, rng.lo), base + self.occ(token, rng.hi))

    def match_range(self, ngram: Sequence[int]) -> IndexRange:
        if len(ngram) == 0:
            raise ValueError("empty n-gram")
        rng = self.full_range()
        for token in ngram:
            rng = self.extend_range(rng, int(token))
            if rng.empty:
                return rng
        return rng

    def count(self, ngram: Sequence[int]) -> int:
        """Exact number of occurrences of ``ngram`` in the stream."""
        rng = self.match_range(ngram)
        return max(0, rng.size)

    def successors(
        self, rng: IndexRange
    ) -> tuple[list[tuple[int, IndexRange]], bool]:
        """Valid rightward extensions of the match held by ``rng``.

        Returns ``(entries, end_of_context)`` where entries are
        ``(token, extended range)`` pairs in ascending token order and the
        flag marks that at least one occurrence ends its context here.
        Separator and sentinel never appear among the entries.
        """
        if rng.empty:
            raise ValueError("empty range has no successors")
        if rng == self.full_range() and self._full_successors is not None:
            return self._full_successors
        values = np.unique(self.bwt[rng.lo : rng.hi]).astype(np.int64)
        end_of_context = bool(values.size and values[0] == SEP_ID)
        tokens = values[(values != SEP_ID) & (values != self.vocab_size)]
        entries: list[tuple[int, IndexRange]] = []
        if tokens.size:
            lo_occ = self._occ_many(tokens, rng.lo)
            hi_occ = self._occ_many(tokens, rng.hi)
            bases = self.c_table[tokens]
            for tok, base, ol, oh in zip(tokens, bases, lo_occ, hi_occ):
                entries.append(
                    (int(tok), IndexRange(int(base + ol), int(base + oh)))
                )
        result = (entries, end_of_context)
        if rng == self.full_range():
            self._full_successors = result
        return result

    # -- locate --------------------------------------------------------------

    def _resolve_rows(self, rows: np.ndarray) -> np.ndarray:
        """Reversed-stream suffix offsets for BWT rows, via LF walks to the
        nearest suffix-array sample (at most ``sample_rate - 1`` steps)."""
        rows = rows.astype(np.int64, copy=True)
        out = np.empty(rows.size, dtype=np.int64)
        steps = np.zeros(rows.size, dtype=np.int64)
        pending = np.arange(rows.size)
        while pending.size:
            cur = rows[pending]
            pos = np.searchsorted(self.ssa_rows, cur)
            pos_clipped = np.minimum(pos, len(self.ssa_rows) - 1)
            hit = self.ssa_rows[pos_clipped] == cur
            resolved = pending[hit]
            out[resolved] = self.ssa_offsets[pos_clipped[hit]] + steps[resolved]
            pending = pending[~hit]
            if pending.size:
                rows[pending] = self._lf_many(rows[pending])
                steps[pending] += 1
        return out

    def locate_contexts(
        self, ngram: Sequence[int], limit: Optional[int] = None
    ) -> set[int]:
        """Ids of contexts containing at least one occurrence of ``ngram``.

        With ``limit`` the result is a deterministic subset resolved from
        the lowest match rows first.
        """
        rng = self.match_range(ngram)
        if rng.empty:
            return set()
        rows = np.arange(rng.lo, rng.hi, dtype=np.int64)
        rev_offsets = self._resolve_rows(rows)
        starts = self.stream_length - rev_offsets - len(ngram)
        ctx_ids = np.searchsorted(self.boundaries, starts, side="right") - 1
        if limit is None:
            return set(int(c) for c in ctx_ids)
        found: set[int] = set()
        for cid in ctx_ids:  # rows ascend, so the subset is deterministic
            found.add(int(cid))
            if len(found) >= limit:
                break
        return found

    # -- n-gram position totals (for unconditional probabilities) -----------

    def ngram_positions(self, length: int) -> int:
        """Total start positions for separator-free n-grams of ``length``."""
        if length < 1:
            raise ValueError("length must be >= 1")
        if self._sorted_lengths is None:
            lengths = np.sort(self.context_lengths())
            tail = np.concatenate([np.cumsum(lengths[::-1])[::-1], [0]])
            self._sorted_lengths = lengths
            self._length_tail_sums = tail
        pos = int(np.searchsorted(self._sorted_lengths, length, side="left"))
        n_ge = len(self._sorted_lengths) - pos
        total = int(self._length_tail_sums[pos])
        return total - (length - 1) * n_ge


def build(
    tc: TokenizedCorpus,
    *,
    sample_rate: int = DEFAULT_SA_SAMPLE_RATE,
    checkpoint_stride: int = DEFAULT_CHECKPOINT_STRIDE,
) -> FmIndex:
    """Build the index over the reversed stream plus terminal sentinel."""
    stream = np.asarray(tc.stream, dtype=np.int64)
    if stream.size == 0:
        raise ValueError("cannot index an empty stream")
    if sample_rate < 1 or checkpoint_stride < 1:
        raise ValueError("sample_rate and checkpoint_stride must be >= 1")
    vs = tc.vocab_size
    rev = stream[::-1]

    # shift ids by one for sorting so the sentinel (0 here) collates first
    sa = _suffix_array(np.concatenate([rev + 1, [0]]))
    stored = np.concatenate([rev, [vs]]).astype(np.uint32)
    bwt = stored[sa - 1]  # sa == 0 wraps to the sentinel

    counts = np.bincount(stored.astype(np.int64), minlength=vs + 1)
    c_table = np.empty(vs + 1, dtype=np.int64)
    c_table[0] = 1  # the sentinel bucket
    c_table[1:] = 1 + np.cumsum(counts[:vs])

    n_blocks = len(bwt) // checkpoint_stride + 1
    occ_checkpoints = np.zeros((n_blocks, vs + 1), dtype=np.int64)
    for b in range(1, n_blocks):
        seg = bwt[(b - 1) * checkpoint_stride : b * checkpoint_stride]
        occ_checkpoints[b] = occ_checkpoints[b - 1] + np.bincount(
            seg.astype(np.int64), minlength=vs + 1
        )

    sampled = sa % sample_rate == 0
    ssa_rows = np.nonzero(sampled)[0].astype(np.int64)
    ssa_offsets = sa[sampled].astype(np.int64)

    return FmIndex(
        bwt=bwt,
        c_table=c_table,
        occ_checkpoints=occ_checkpoints,
        checkpoint_stride=checkpoint_stride,
        sample_rate=sample_rate,
        ssa_rows=ssa_rows,
        ssa_offsets=ssa_offsets,
        boundaries=np.asarray(tc.boundaries, dtype=np.int64).copy(),
        vocab_size=vs,
    )


def serialize_index(index: FmIndex) -> bytes:
    w = _binio.Writer()
    w.magic(_INDEX_MAGIC)
    w.u32(_INDEX_VERSION)
    w.u32(index.sample_rate)
    w.u32(index.checkpoint_stride)
    w.u32(index.vocab_size)
    w.array(index.bwt, np.uint32)
    w.array(index.c_table, np.int64)
    w.array2d(index.occ_checkpoints, np.int64)
    w.array(index.ssa_rows, np.int64)
    w.array(index.ssa_offsets, np.int64)
    w.array(index.boundaries, np.int64)
    return w.getvalue()


def deserialize_index(data: bytes) -> FmIndex:
    r = _binio.Reader(data)
    r.magic(_INDEX_MAGIC)
    version = r.u32()
    if version != _INDEX_VERSION:
        raise ValueError(f"unsupported index file version {version}")
    sample_rate = r.u32()
    checkpoint_stride = r.u32()
    vocab_size = r.u32()
    return FmIndex(
        bwt=r.array(np.uint32),
        c_table=r.array(np.int64),
        occ_checkpoints=r.array2d(np.int64),
        checkpoint_stride=checkpoint_stride,
        sample_rate=sample_rate,
        ssa_rows=r.array(np.int64),
        ssa_offsets=r.array(np.int64),
        boundaries=r.array(np.int64),
        vocab_size=vocab_size,
    )


def save_index(index: FmIndex, path) -> None:
    Path(path).write_bytes(serialize_index(index))


def load_index(path) -> FmIndex:
    return deserialize_index(Path(path).read_bytes())
