"""R-precision evaluation over run files, sweep summaries, and resource
micro-benchmarks."""

from __future__ import annotations

import json
import resource
import statistics
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .decoder import constrained_beam_search
from .fm_index import FmIndex, serialize_index
from .identifiers import build_identifier_sets, repetition_rate
from .model import SequenceModel, parameter_count
from .scorer import ScoringParams, rank_contexts


@dataclass
class ProvenanceSet:
    query_id: str
    gold: set[int]

    def __post_init__(self):
        self.gold = set(int(c) for c in self.gold)
        if not self.gold:
            raise ValueError(f"query {self.query_id}: empty provenance set")

    @property
    def R(self) -> int:
        return len(self.gold)


@dataclass
class EvalReport:
    dataset: str
    task: str
    per_query: dict[str, float]
    macro_mean: float
    by_task: dict[str, float] = field(default_factory=dict)
    task_of_query: dict[str, str] = field(default_factory=dict)


def r_precision(ranked: Sequence[int], prov: ProvenanceSet) -> float:
    """Relevant contexts among the top R, over R; empty rankings score 0."""
    if prov.R < 1:
        raise ValueError("provenance set is empty")
    top = list(ranked[: prov.R])
    if len(set(top)) != len(top):
        raise ValueError("ranked list contains duplicates")
    return len(set(top) & prov.gold) / prov.R


def load_provenance(path) -> dict[str, ProvenanceSet]:
    out: dict[str, ProvenanceSet] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            qid = str(rec["query_id"])
            out[qid] = ProvenanceSet(query_id=qid, gold=set(rec["gold"]))
    return out


def load_run(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def evaluate_run(run_path, provenance_path, dataset: str = "run") -> EvalReport:
    """Macro-averaged R-precision for a run file, with a per-task breakdown."""
    rows = load_run(run_path)
    provenance = load_provenance(provenance_path)
    missing = [str(r["query_id"]) for r in rows if str(r["query_id"]) not in provenance]
    if missing:
        raise ValueError(f"missing provenance for queries: {', '.join(missing)}")
    per_query: dict[str, float] = {}
    task_of_query: dict[str, str] = {}
    for row in rows:
        qid = str(row["query_id"])
        ranked = [int(entry["context_id"]) for entry in row.get("ranked", [])]
        per_query[qid] = r_precision(ranked, provenance[qid])
        task_of_query[qid] = str(row.get("task", "ALL"))
    if not per_query:
        raise ValueError("run file holds no queries")
    tasks = sorted(set(task_of_query.values()))
    by_task = {
        task: statistics.fmean(
            v for q, v in per_query.items() if task_of_query[q] == task
        )
        for task in tasks
    }
    label = tasks[0] if len(tasks) == 1 else "ALL"
    return EvalReport(
        dataset=dataset,
        task=label,
        per_query=per_query,
        macro_mean=statistics.fmean(per_query.values()),
        by_task=by_task,
        task_of_query=task_of_query,
    )


def length_sweep(
    tc,
    *,
    ns: Sequence[int] = (3, 5, 10),
    v: int = 10,
    rho: float = 0.01,
    seed: int = 0,
    external_weights=None,
) -> list[dict]:
    """Repetition rate as the identifier n-gram length varies at fixed v."""
    rows = []
    for n in ns:
        sets = build_identifier_sets(
            tc, n=n, v=v, rho=rho, seed=seed, external_weights=external_weights
        )
        rows.append(
            {
                "sweep": "length",
                "n": n,
                "v": v,
                "repetition_rate": repetition_rate(list(sets.values())),
            }
        )
    return rows


def count_sweep(
    tc,
    *,
    vs: Sequence[int] = (5, 10, 15),
    n: int = 10,
    rho: float = 0.01,
    seed: int = 0,
    external_weights=None,
) -> list[dict]:
    """Repetition rate as the identifier count varies at fixed n."""
    rows = []
    for v in vs:
        sets = build_identifier_sets(
            tc, n=n, v=v, rho=rho, seed=seed, external_weights=external_weights
        )
        rows.append(
            {
                "sweep": "count",
                "n": n,
                "v": v,
                "repetition_rate": repetition_rate(list(sets.values())),
            }
        )
    return rows


def bench(
    index: FmIndex,
    model: SequenceModel,
    queries: Sequence[Sequence[int]],
    repetitions: int = 3,
    *,
    params: Optional[ScoringParams] = None,
    beam_width: int = 15,
    steps: int = 10,
    rank_limit: int = 100,
) -> dict:
    """Resource report: memory footprint, table parameter count, and
    per-query decode+rank wall time (one warm-up pass, then ``repetitions``
    timed passes on a monotonic clock)."""
    if len(queries) < 10:
        raise ValueError("bench needs at least 10 queries")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    params = params or ScoringParams()

    def run_query(prompted) -> None:
        generated = constrained_beam_search(
            index, model, prompted, beam_width=beam_width, steps=steps
        )
        rank_contexts(index, generated, params, limit=rank_limit)

    for prompted in queries:  # warm-up
        run_query(prompted)
    times_ms: list[float] = []
    for _ in range(repetitions):
        for prompted in queries:
            start = time.perf_counter()
            run_query(prompted)
            times_ms.append((time.perf_counter() - start) * 1000.0)

    index_bytes = len(serialize_index(index))
    peak_rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
    return {
        "memory_index_bytes": index_bytes,
        "memory_peak_rss_bytes": int(peak_rss),
        "parameters": parameter_count(model),
        "time_mean_ms": statistics.fmean(times_ms),
        "time_median_ms": statistics.median(times_ms),
        "repetitions": repetitions,
        "n_queries": len(queries),
        "beam_width": beam_width,
        "steps": steps,
    }
