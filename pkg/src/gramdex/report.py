"""Delimited report files with companion matplotlib figures."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport

_FIG_DPI = 120


def _save(fig, path) -> None:
    fig.savefig(path, dpi=_FIG_DPI, bbox_inches="tight")
    plt.close(fig)


def write_eval_report(report: EvalReport, out_dir) -> dict[str, Path]:
    """Per-query TSV, JSON summary, and a per-task mean bar figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv_path = out_dir / "report.tsv"
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("query_id\ttask\tr_precision\n")
        for qid in sorted(report.per_query):
            task = report.task_of_query.get(qid, report.task)
            fh.write(f"{qid}\t{task}\t{report.per_query[qid]:.6f}\n")

    summary_path = out_dir / "summary.json"
    summary = {
        "dataset": report.dataset,
        "task": report.task,
        "macro_mean_r_precision": report.macro_mean,
        "by_task": dict(sorted(report.by_task.items())),
        "n_queries": len(report.per_query),
    }
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    fig, ax = plt.subplots(figsize=(5, 3))
    labels = sorted(report.by_task) + ["mean"]
    values = [report.by_task[t] for t in sorted(report.by_task)] + [report.macro_mean]
    ax.bar(labels, values, color="#4878d0")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("R-precision")
    ax.set_title(f"{report.dataset}: macro R-precision")
    fig_path = out_dir / "r_precision.png"
    _save(fig, fig_path)
    return {"tsv": tsv_path, "summary": summary_path, "figure": fig_path}


def write_sweep_report(rows: list[dict], out_dir) -> dict[str, Path]:
    """Sweep TSV plus a repetition-rate line figure per swept variable."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv_path = out_dir / "sweep.tsv"
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("sweep\tn\tv\trepetition_rate\n")
        for row in rows:
            fh.write(
                f"{row['sweep']}\t{row['n']}\t{row['v']}\t"
                f"{row['repetition_rate']:.6f}\n"
            )

    fig, ax = plt.subplots(figsize=(5, 3))
    for sweep_name, x_key in (("length", "n"), ("count", "v")):
        pts = [r for r in rows if r["sweep"] == sweep_name]
        if pts:
            ax.plot(
                [p[x_key] for p in pts],
                [100.0 * p["repetition_rate"] for p in pts],
                marker="o",
                label=f"vary {x_key}",
            )
    ax.set_xlabel("identifier length n / count v")
    ax.set_ylabel("repetition rate (%)")
    ax.legend()
    fig_path = out_dir / "repetition_rate.png"
    _save(fig, fig_path)
    return {"tsv": tsv_path, "figure": fig_path}


def write_bench_report(result: dict, out_dir) -> dict[str, Path]:
    """Resource table as TSV and JSON: memory, parameters, time."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv_path = out_dir / "bench.tsv"
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("memory_index_bytes\tmemory_peak_rss_bytes\tparameters\t")
        fh.write("time_mean_ms\ttime_median_ms\n")
        fh.write(
            f"{result['memory_index_bytes']}\t{result['memory_peak_rss_bytes']}\t"
            f"{result['parameters']}\t{result['time_mean_ms']:.3f}\t"
            f"{result['time_median_ms']:.3f}\n"
        )
    json_path = out_dir / "bench.json"
    json_path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return {"tsv": tsv_path, "json": json_path}
