"""Rendering of evaluation reports: delimited tables plus matplotlib figures."""

from __future__ import annotations

import csv
import io as _io
from pathlib import Path
from typing import Optional

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .eval.suite import EvalReport

COLUMNS = ["method", "dataset", "fault_type", "AC@1", "AC@2", "AC@3", "AC@4", "AC@5",
           "Avg@5", "mean_runtime_s", "F1", "F1-S", "SHD"]


def _num(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.2f}"


def report_table(report: EvalReport) -> list[list[str]]:
    rows = [COLUMNS]
    for r in report.rows:
        g = r.graph or {}
        rows.append([r.method, r.dataset, r.fault_type,
                     *(_num(r.ac.get(k)) for k in range(1, 6)),
                     _num(r.avg5), _num(r.mean_runtime_s),
                     _num(g.get("f1")), _num(g.get("f1_s")), _num(g.get("shd"))])
    return rows


def emit_report(report: EvalReport, fmt: str = "csv") -> str:
    table = report_table(report)
    if fmt == "csv":
        buf = _io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(table)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(table[0]) + " |", "|" + "---|" * len(table[0])]
        lines += ["| " + " | ".join(row) + " |" for row in table[1:]]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def _save(fig: Figure, path: Path) -> Path:
    FigureCanvasAgg(fig)
    tmp = path.with_name(f".{path.name}.tmp.png")
    fig.savefig(tmp, dpi=120, bbox_inches="tight")
    tmp.replace(path)
    return path


def _grouped_bars(ax, methods, datasets, value, legend=True):
    width = 0.8 / max(1, len(datasets))
    x = np.arange(len(methods))
    for i, ds in enumerate(datasets):
        ys = [value(m, ds) for m in methods]
        ax.bar(x + i * width - 0.4 + width / 2, [np.nan if y is None else y for y in ys], width, label=ds)
    ax.set_xticks(x)
    ax.set_xticklabels(methods, rotation=45, ha="right")
    if legend and len(datasets) > 1:
        ax.legend(fontsize=8, frameon=False, loc="best")


def write_figures(report: EvalReport, stem: Path | str) -> list[Path]:
    """PNG figures next to a report: Avg@5 per method, mean runtime, and graph F1 if present."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    methods = list(dict.fromkeys(r.method for r in report.rows))
    datasets = list(dict.fromkeys(r.dataset for r in report.rows))

    def pick(field):
        def value(m, ds):
            vals = [field(r) for r in report.rows if r.method == m and r.dataset == ds]
            vals = [v for v in vals if v is not None]
            return float(np.mean(vals)) if vals else None
        return value

    out = []
    ranked = [m for m in methods if any(r.avg5 is not None for r in report.rows if r.method == m)]
    if ranked:
        fig = Figure(figsize=(max(4, 0.6 * len(ranked) + 2), 3.2))
        ax = fig.add_subplot()
        _grouped_bars(ax, ranked, datasets, pick(lambda r: r.avg5))
        ax.set_ylabel("Avg@5")
        ax.set_ylim(0, 1)
        out.append(_save(fig, stem.with_name(stem.name + "_avg5.png")))

    timed = [m for m in methods if any(r.mean_runtime_s for r in report.rows if r.method == m)]
    if timed:
        fig = Figure(figsize=(max(4, 0.6 * len(timed) + 2), 3.2))
        ax = fig.add_subplot()
        _grouped_bars(ax, timed, datasets, pick(lambda r: r.mean_runtime_s))
        ax.set_ylabel("mean runtime per case (s)")
        ax.set_yscale("log")
        out.append(_save(fig, stem.with_name(stem.name + "_runtime.png")))

    graphed = [m for m in methods if any(r.graph for r in report.rows if r.method == m)]
    if graphed:
        fig = Figure(figsize=(max(6, 1.0 * len(graphed) + 3), 3.2))
        ax1, ax2 = fig.subplots(1, 2)
        _grouped_bars(ax1, graphed, datasets, pick(lambda r: r.graph and r.graph["f1"]), legend=False)
        ax1.set_ylabel("F1 (directed)")
        ax1.set_ylim(0, 1)
        _grouped_bars(ax2, graphed, datasets, pick(lambda r: r.graph and r.graph["f1_s"]), legend=False)
        ax2.set_ylabel("F1-S (skeleton)")
        ax2.set_ylim(0, 1)
        if len(datasets) > 1:
            handles, labels = ax1.get_legend_handles_labels()
            fig.legend(handles, labels, loc="upper center", ncol=len(datasets), fontsize=8, frameon=False)
            fig.subplots_adjust(top=0.85)
        out.append(_save(fig, stem.with_name(stem.name + "_graph.png")))
    return out
