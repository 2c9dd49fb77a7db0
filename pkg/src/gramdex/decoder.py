"""Constrained beam search over FM-index successor sets.

Every candidate extension comes from the index, so each generated n-gram is
guaranteed to occur in the corpus.  Beams finish at the step limit or when
an occurrence of their prefix reaches a context end; entity decoding is
anchored at context starts so a finished beam always spells a full title.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import SEP_ID
from .fm_index import FmIndex, IndexRange
from .model import SequenceModel

log = logging.getLogger(__name__)

DEFAULT_BEAM_WIDTH = 15
DEFAULT_STEPS = 10

Ngram = tuple[int, ...]


@dataclass
class Beam:
    prefix: Ngram
    cum_logprob: float
    range: IndexRange
    terminated: bool = False


@dataclass
class GeneratedSet:
    """Generated n-grams with their conditional log-probabilities, distinct
    by n-gram and capped at the beam width."""

    entries: list[tuple[Ngram, float]]
    beam_width: int
    steps: int

    def ngrams(self) -> list[Ngram]:
        return [gram for gram, _ in self.entries]


def _candidate_order(beam: Beam):
    # ties: higher score, then lower last token id, then shorter prefix
    return (-beam.cum_logprob, beam.prefix[-1], len(beam.prefix), beam.prefix)


def _merge(finished: dict[Ngram, float], prefix: Ngram, logprob: float) -> None:
    old = finished.get(prefix)
    finished[prefix] = logprob if old is None else float(np.logaddexp(old, logprob))


def constrained_beam_search(
    index: FmIndex,
    model: SequenceModel,
    prompted_input: Sequence[int],
    beam_width: int = DEFAULT_BEAM_WIDTH,
    steps: int = DEFAULT_STEPS,
) -> GeneratedSet:
    """Generate up to ``beam_width`` corpus-attested n-grams.

    Deterministic for fixed inputs; duplicate surface strings merge by
    log-sum-exp.  If every beam dies the result is empty (with a warning),
    never an error.
    """
    if beam_width < 1 or steps < 1:
        raise ValueError("beam_width and steps must be >= 1")
    live = [Beam(prefix=(), cum_logprob=0.0, range=index.full_range())]
    finished: dict[Ngram, float] = {}
    for _ in range(steps):
        candidates: list[Beam] = []
        for beam in live:
            entries, end_of_context = index.successors(beam.range)
            if end_of_context and beam.prefix:
                _merge(finished, beam.prefix, beam.cum_logprob)
            if not entries:
                continue
            allowed = [token for token, _ in entries]
            logprobs = model.next_token_logprobs(prompted_input, beam.prefix, allowed)
            for (token, rng), lp in zip(entries, logprobs):
                candidates.append(
                    Beam(
                        prefix=beam.prefix + (token,),
                        cum_logprob=beam.cum_logprob + float(lp),
                        range=rng,
                    )
                )
        if not candidates:
            live = []
            break
        candidates.sort(key=_candidate_order)
        live = candidates[:beam_width]
    for beam in live:
        _merge(finished, beam.prefix, beam.cum_logprob)

    if not finished:
        log.warning("all beams died; returning an empty generated set")
        return GeneratedSet(entries=[], beam_width=beam_width, steps=steps)
    ranked = sorted(finished.items(), key=lambda item: (-item[1], item[0]))
    return GeneratedSet(
        entries=ranked[:beam_width], beam_width=beam_width, steps=steps
    )


def decode_entity(
    index: FmIndex,
    model: SequenceModel,
    prompted_input: Sequence[int],
    beam_width: int = DEFAULT_BEAM_WIDTH,
) -> list[tuple[int, float]]:
    """Ranked entity ids from an index built over entity titles.

    Beams grow from context starts (the sentinel/separator rows collate
    first, so the anchored seed range is contiguous) and finish only at a
    title's end-of-context, hence every finished beam spells exactly one
    whole title.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    anchor = IndexRange(0, int(index.c_table[SEP_ID + 1]))
    live = [Beam(prefix=(), cum_logprob=0.0, range=anchor)]
    finished: list[Beam] = []
    # one extra pass so a title built in the last step still gets its
    # end-of-context examination
    max_steps = int(index.context_lengths().max())
    for _ in range(max_steps + 1):
        candidates: list[Beam] = []
        for beam in live:
            entries, end_of_context = index.successors(beam.range)
            if end_of_context and beam.prefix:
                finished.append(
                    Beam(beam.prefix, beam.cum_logprob, beam.range, terminated=True)
                )
            if not entries:
                continue
            allowed = [token for token, _ in entries]
            logprobs = model.next_token_logprobs(prompted_input, beam.prefix, allowed)
            for (token, rng), lp in zip(entries, logprobs):
                candidates.append(
                    Beam(
                        prefix=beam.prefix + (token,),
                        cum_logprob=beam.cum_logprob + float(lp),
                        range=rng,
                    )
                )
        if not candidates:
            break
        candidates.sort(key=_candidate_order)
        live = candidates[:beam_width]

    if not finished:
        log.warning("no beam reached a complete title; returning no entities")
        return []

    results: dict[int, float] = {}
    for beam in sorted(finished, key=lambda b: (-b.cum_logprob, b.prefix)):
        rows = np.arange(beam.range.lo, beam.range.hi, dtype=np.int64)
        # anchoring pins the start; keep only occurrences that also end the
        # context (next char is the separator), i.e. whole titles
        rows = rows[index.bwt[rows] == SEP_ID]
        rev_offsets = index._resolve_rows(rows)
        starts = index.stream_length - rev_offsets - len(beam.prefix)
        for start in starts:
            entity = int(np.searchsorted(index.boundaries, start, side="right") - 1)
            if entity not in results:
                results[entity] = beam.cum_logprob
    ranked = sorted(results.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:beam_width]
