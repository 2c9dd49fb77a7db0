"""Command-line pipeline.

Subcommands cover the full flow: build-corpus, build-index,
build-identifiers, compile-training, train-model, retrieve, evaluate,
bench, sweep, and inspect.  A JSON config file supplies defaults and
explicit flags win over it; ``GRAMDEX_CONFIG`` overrides only the config
path.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import corpus as corpus_mod
from . import decoder as decoder_mod
from . import evaluation as eval_mod
from . import fm_index as fm_mod
from . import identifiers as ident_mod
from . import model as model_mod
from . import prompts as prompts_mod
from . import scorer as scorer_mod

CONFIG_ENV = "GRAMDEX_CONFIG"

_HYPER_DEFAULTS = {
    "n": 10,
    "v": None,  # per task: DR/PR 10, SR 5, ER 1
    "rho": 0.01,
    "alpha": 2.0,
    "beta": 0.8,
    "g": 5,
    "beams": 15,
    "steps": 10,
    "lam": 0.5,
    "mu": 0.1,
    "seed": 0,
    "limit": 100,
}


@dataclass
class PipelineConfig:
    """Hyperparameters resolved from defaults < config file < flags."""

    values: dict

    @classmethod
    def resolve(cls, args: argparse.Namespace) -> "PipelineConfig":
        config_path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
        file_values = {}
        if config_path:
            file_values = json.loads(Path(config_path).read_text())
        merged = dict(_HYPER_DEFAULTS)
        for key in merged:
            if key in file_values:
                merged[key] = file_values[key]
            flag = getattr(args, key, None)
            if flag is not None:
                merged[key] = flag
        return cls(values=merged)

    def __getitem__(self, key):
        return self.values[key]

    def set_size(self, task: prompts_mod.Task) -> int:
        if self.values["v"] is not None:
            return int(self.values["v"])
        return prompts_mod.DEFAULT_SET_SIZES[task]

    def scoring_params(self) -> scorer_mod.ScoringParams:
        return scorer_mod.ScoringParams(
            alpha=float(self.values["alpha"]),
            beta=float(self.values["beta"]),
            g=int(self.values["g"]),
        )


def _add_hyper_flags(parser: argparse.ArgumentParser, names) -> None:
    kinds = {
        "n": int, "v": int, "g": int, "beams": int, "steps": int,
        "seed": int, "limit": int,
        "rho": float, "alpha": float, "beta": float, "mu": float,
    }
    for name in names:
        if name == "lam":
            parser.add_argument("--lambda", dest="lam", type=float, default=None)
        else:
            parser.add_argument(f"--{name}", type=kinds[name], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gramdex",
        description="n-gram identifier retrieval over an FM-indexed corpus",
    )
    parser.add_argument("--config", help="JSON config file with hyperparameters")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("build-corpus", help="tokenize JSONL records into a corpus file")
    p.add_argument("--input", required=True, help="JSONL records {id, title?, text}")
    p.add_argument(
        "--granularity",
        required=True,
        choices=[g.value for g in corpus_mod.Granularity],
    )
    p.add_argument("--passage-tokens", type=int, default=corpus_mod.DEFAULT_PASSAGE_TOKENS)
    p.add_argument(
        "--sentence-splitter",
        default="simple",
        choices=corpus_mod.sentence_splitter_ids(),
    )
    p.add_argument("--keep-case", action="store_true")
    p.add_argument("--keep-punctuation", action="store_true",
                   help="do not split punctuation into separate tokens")
    p.add_argument("--vocab-from",
                   help="corpus file whose vocabulary is reused and extended, "
                        "keeping token ids consistent across granularities")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("build-index", help="build the FM-index over a corpus file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--sample-rate", type=int, default=fm_mod.DEFAULT_SA_SAMPLE_RATE)
    p.add_argument(
        "--checkpoint-stride", type=int, default=fm_mod.DEFAULT_CHECKPOINT_STRIDE
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("build-identifiers", help="sample identifier n-grams per context")
    p.add_argument("--corpus", required=True)
    p.add_argument("--provider", choices=["surrogate", "file"], default="surrogate")
    p.add_argument("--weights", help="JSONL weight file (provider=file)")
    p.add_argument("--out", required=True)
    _add_hyper_flags(p, ["n", "v", "rho", "seed"])
    p.set_defaults(func=cmd_build_identifiers)

    p = sub.add_parser("compile-training", help="compile the prompted training mixture")
    p.add_argument(
        "--queries",
        action="append",
        required=True,
        help="JSONL {query_id, task, text, gold}; repeat per dataset",
    )
    p.add_argument(
        "--identifiers",
        action="append",
        required=True,
        help="identifier file paired with the matching --queries occurrence",
    )
    p.add_argument("--corpus", required=True, help="corpus file (for the tokenizer)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile_training)

    p = sub.add_parser("train-model", help="train the count/translation model")
    p.add_argument("--mixture", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_hyper_flags(p, ["lam", "mu"])
    p.set_defaults(func=cmd_train_model)

    p = sub.add_parser("retrieve", help="decode identifiers and rank contexts")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--task", required=True, choices=[t.value for t in prompts_mod.Task])
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    _add_hyper_flags(p, ["beams", "steps", "alpha", "beta", "g", "limit"])
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", help="score a run file against provenance")
    p.add_argument("--run", required=True)
    p.add_argument("--provenance", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--dataset", default="run")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="memory/parameter/time resource report")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--task", default="DR", choices=[t.value for t in prompts_mod.Task])
    p.add_argument("--queries", required=True)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--report-dir", required=True)
    _add_hyper_flags(p, ["beams", "steps", "alpha", "beta", "g"])
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="identifier length/count sweep report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lengths", default="3,5,10", help="comma-separated n values")
    p.add_argument("--counts", default="5,10,15", help="comma-separated v values")
    p.add_argument("--report-dir", required=True)
    _add_hyper_flags(p, ["n", "v", "rho", "seed"])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="print match range and successor set")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="n-gram as text, tokenized with the corpus rules")
    group.add_argument("--tokens", help="n-gram as comma-separated token ids")
    p.set_defaults(func=cmd_inspect)

    return parser


# -- subcommand handlers -----------------------------------------------------


def cmd_build_corpus(args) -> int:
    granularity = corpus_mod.Granularity(args.granularity)
    records = corpus_mod.iter_jsonl(args.input)
    contexts = corpus_mod.ingest(
        records,
        granularity,
        passage_tokens=args.passage_tokens,
        sentence_splitter=args.sentence_splitter,
    )
    if granularity is corpus_mod.Granularity.ENTITY:
        # the entity stream indexes titles: decoding must land on exact names
        contexts = corpus_mod.title_contexts(contexts)
    if args.vocab_from:
        tokenizer = corpus_mod.load_corpus(args.vocab_from).tokenizer
        tokenizer.frozen = False
    else:
        tokenizer = corpus_mod.Tokenizer(
            corpus_mod.TokenizerRules(
                case_fold=not args.keep_case,
                split_punctuation=not args.keep_punctuation,
            )
        )
    tc = corpus_mod.tokenize_corpus(contexts, tokenizer)
    corpus_mod.save_corpus(tc, args.out)
    print(
        f"wrote {args.out}: {tc.n_contexts} contexts, "
        f"{len(tc.stream)} stream tokens, vocab {tc.vocab_size}"
    )
    return 0


def cmd_build_index(args) -> int:
    tc = corpus_mod.load_corpus(args.corpus)
    index = fm_mod.build(
        tc, sample_rate=args.sample_rate, checkpoint_stride=args.checkpoint_stride
    )
    fm_mod.save_index(index, args.out)
    print(f"wrote {args.out}: {index.size} BWT rows over {index.n_contexts} contexts")
    return 0


def cmd_build_identifiers(args) -> int:
    cfg = PipelineConfig.resolve(args)
    tc = corpus_mod.load_corpus(args.corpus)
    external = None
    if args.provider == "file":
        if not args.weights:
            raise ValueError("provider=file needs --weights")
        external = ident_mod.load_weight_file(args.weights)
    task = {
        corpus_mod.Granularity.DOCUMENT: prompts_mod.Task.DR,
        corpus_mod.Granularity.PASSAGE: prompts_mod.Task.PR,
        corpus_mod.Granularity.SENTENCE: prompts_mod.Task.SR,
        corpus_mod.Granularity.ENTITY: prompts_mod.Task.ER,
    }[tc.granularity]
    sets = ident_mod.build_identifier_sets(
        tc,
        n=int(cfg["n"]),
        v=cfg.set_size(task),
        rho=float(cfg["rho"]),
        seed=int(cfg["seed"]),
        external_weights=external,
    )
    ident_mod.save_identifier_sets(sets, args.out)
    rate = ident_mod.repetition_rate(list(sets.values()))
    print(f"wrote {args.out}: {len(sets)} identifier sets, repetition rate {rate:.4f}")
    return 0


def cmd_compile_training(args) -> int:
    if len(args.queries) != len(args.identifiers):
        raise ValueError("--queries and --identifiers must be paired")
    tc = corpus_mod.load_corpus(args.corpus)
    datasets = []
    ident_maps = []
    for qpath, ipath in zip(args.queries, args.identifiers):
        examples = []
        task = None
        for rec in prompts_mod.load_queries(qpath):
            rec_task = prompts_mod.Task(rec["task"])
            if task is None:
                task = rec_task
            elif rec_task != task:
                raise ValueError(f"{qpath}: mixed tasks within one dataset")
            gold = rec["gold"]
            gold_cid = int(gold[0] if isinstance(gold, list) else gold)
            examples.append(
                prompts_mod.QueryExample(
                    query_id=str(rec["query_id"]),
                    text=str(rec["text"]),
                    gold_context_id=gold_cid,
                )
            )
        if task is None:
            raise ValueError(f"{qpath}: no query records")
        datasets.append((task, examples))
        ident_maps.append(ident_mod.load_identifier_sets(ipath))
    records = prompts_mod.compile_mixture(datasets, ident_maps, tc.tokenizer)
    written = prompts_mod.save_mixture(records, args.out)
    print(f"wrote {args.out}: {written} training records")
    return 0


def cmd_train_model(args) -> int:
    cfg = PipelineConfig.resolve(args)
    tc = corpus_mod.load_corpus(args.corpus)
    mixture = prompts_mod.load_mixture(args.mixture)
    model = model_mod.train_count_model(
        mixture, tc, lam=float(cfg["lam"]), mu=float(cfg["mu"])
    )
    model_mod.save_model(model, args.out)
    print(
        f"wrote {args.out}: {model_mod.parameter_count(model)} table parameters"
    )
    return 0


def _load_scoring_model(path, task, queries, tokenizer):
    """A stored oracle is keyed by query id; render its inputs first."""
    stored = model_mod.load_model(path)
    if isinstance(stored, model_mod.StoredOracle):
        inputs = {
            str(rec["query_id"]): prompts_mod.render_input(
                task, str(rec["text"]), tokenizer
            )
            for rec in queries
        }
        return model_mod.oracle_model(stored.gold, inputs=inputs)
    return stored


def cmd_retrieve(args) -> int:
    cfg = PipelineConfig.resolve(args)
    tc = corpus_mod.load_corpus(args.corpus)
    index = fm_mod.load_index(args.index)
    task = prompts_mod.Task(args.task)
    queries = prompts_mod.load_queries(args.queries)
    model = _load_scoring_model(args.model, task, queries, tc.tokenizer)
    beams = int(cfg["beams"])
    steps = int(cfg["steps"])
    params = cfg.scoring_params()
    limit = int(cfg["limit"])

    with open(args.out, "w", encoding="utf-8") as fh:
        for rec in queries:
            qid = str(rec["query_id"])
            prompted = prompts_mod.render_input(task, str(rec["text"]), tc.tokenizer)
            if task is prompts_mod.Task.ER:
                entities = decoder_mod.decode_entity(index, model, prompted, beams)
                ngram_rows = []
                ranked = [
                    {"context_id": cid, "score": lp} for cid, lp in entities
                ]
            else:
                generated = decoder_mod.constrained_beam_search(
                    index, model, prompted, beam_width=beams, steps=steps
                )
                ngram_rows = [
                    {"tokens": list(gram), "logprob": lp}
                    for gram, lp in generated.entries
                ]
                scored = scorer_mod.rank_contexts(index, generated, params, limit=limit)
                ranked = [
                    {"context_id": ctx.context_id, "score": ctx.score}
                    for ctx in scored
                ]
            fh.write(
                json.dumps(
                    {
                        "query_id": qid,
                        "task": task.value,
                        "ngrams": ngram_rows,
                        "ranked": ranked,
                    }
                )
                + "\n"
            )
    print(f"wrote {args.out}: {len(queries)} queries")
    return 0


def cmd_evaluate(args) -> int:
    from . import report as report_mod

    report = eval_mod.evaluate_run(args.run, args.provenance, dataset=args.dataset)
    paths = report_mod.write_eval_report(report, args.report_dir)
    for task in sorted(report.by_task):
        print(f"{task}: mean R-precision {report.by_task[task]:.4f}")
    print(f"mean R-precision {report.macro_mean:.4f} over {len(report.per_query)} queries")
    print(f"report: {paths['tsv']} {paths['summary']} {paths['figure']}")
    return 0


def cmd_bench(args) -> int:
    from . import report as report_mod

    cfg = PipelineConfig.resolve(args)
    tc = corpus_mod.load_corpus(args.corpus)
    index = fm_mod.load_index(args.index)
    task = prompts_mod.Task(args.task)
    queries = prompts_mod.load_queries(args.queries)
    model = _load_scoring_model(args.model, task, queries, tc.tokenizer)
    prompted = [
        prompts_mod.render_input(task, str(rec["text"]), tc.tokenizer)
        for rec in queries
    ]
    result = eval_mod.bench(
        index,
        model,
        prompted,
        repetitions=args.repetitions,
        params=cfg.scoring_params(),
        beam_width=int(cfg["beams"]),
        steps=int(cfg["steps"]),
    )
    paths = report_mod.write_bench_report(result, args.report_dir)
    print(
        "memory: "
        f"{result['memory_index_bytes']} index bytes, "
        f"{result['memory_peak_rss_bytes']} peak RSS"
    )
    print(f"parameters: {result['parameters']}")
    print(
        f"time: mean {result['time_mean_ms']:.2f} ms, "
        f"median {result['time_median_ms']:.2f} ms per query"
    )
    print(f"report: {paths['tsv']} {paths['json']}")
    return 0


def cmd_sweep(args) -> int:
    from . import report as report_mod

    cfg = PipelineConfig.resolve(args)
    tc = corpus_mod.load_corpus(args.corpus)
    ns = [int(x) for x in args.lengths.split(",") if x]
    vs = [int(x) for x in args.counts.split(",") if x]
    rows = eval_mod.length_sweep(
        tc, ns=ns, v=int(cfg["v"] or 10), rho=float(cfg["rho"]), seed=int(cfg["seed"])
    )
    rows += eval_mod.count_sweep(
        tc, vs=vs, n=int(cfg["n"]), rho=float(cfg["rho"]), seed=int(cfg["seed"])
    )
    paths = report_mod.write_sweep_report(rows, args.report_dir)
    for row in rows:
        print(
            f"{row['sweep']}: n={row['n']} v={row['v']} "
            f"repetition rate {row['repetition_rate']:.4f}"
        )
    print(f"report: {paths['tsv']} {paths['figure']}")
    return 0


def cmd_inspect(args) -> int:
    tc = corpus_mod.load_corpus(args.corpus)
    index = fm_mod.load_index(args.index)
    if args.tokens:
        ngram = [int(t) for t in args.tokens.split(",") if t]
    else:
        ngram = tc.tokenizer.tokenize(args.text)
    if not ngram:
        raise ValueError("empty n-gram")
    rng = index.match_range(ngram)
    print(f"n-gram: {ngram} ({tc.tokenizer.detokenize(ngram)})")
    print(f"match range: [{rng.lo}, {rng.hi}) count={max(0, rng.size)}")
    if rng.empty:
        return 0
    entries, end_of_context = index.successors(rng)
    print(f"end of context reachable: {end_of_context}")
    for token, sub in entries:
        word = tc.tokenizer.token_string(token)
        print(f"  successor {token} ({word}): [{sub.lo}, {sub.hi}) count={sub.size}")
    contexts = sorted(index.locate_contexts(ngram, limit=20))
    print(f"contexts (up to 20): {contexts}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, TypeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
