"""Command-line interface: gen, discover, rca, tune, bench, eval."""

from __future__ import annotations

import argparse
import csv
import io as _io
import itertools
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import datagen, io
from .core import ConfigError, FaultType, FormatError, RCAError, Ranking
from .discovery import METHODS as DISCOVERY_METHODS
from .discovery import DiscoveryConfig
from .eval import EvalReport, ReportRow, SuiteConfig, ac_at_k, derive_seed, run_suite, tune_bic
from .eval.metrics import Mode, graph_f1, shd
from .rca import GUARD_ROWS, method_names, run_method
from .report import emit_report, write_figures

log = logging.getLogger("rcakit")


# --- helpers -------------------------------------------------------------------------

def _table(rows: Sequence[Sequence], fmt: str) -> str:
    rows = [[str(c) for c in r] for r in rows]
    if fmt == "markdown":
        lines = ["| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
        lines += ["| " + " | ".join(r) + " |" for r in rows[1:]]
        return "\n".join(lines) + "\n"
    buf = _io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        io.atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _read_json(path: str, what: str):
    p = Path(path)
    if not p.exists():
        raise FormatError(f"missing {what} file {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: invalid JSON ({exc})") from None


def _discovery_config(args) -> DiscoveryConfig:
    base = _read_json(args.config, "config") if args.config else {}
    for key in ("alpha", "max_cond_size", "max_lag", "penalty"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    return DiscoveryConfig.from_dict(base)


def _case_path(path: str) -> Path:
    p = Path(path)
    return p.parent if p.name == io.DATA_FILE else p


def _ranking_table(r: Ranking) -> list[list]:
    return [["rank", "metric", "score"]] + [[i + 1, n, f"{s:.6g}"] for i, (n, s) in enumerate(r)]


def _read_ranking(path: Path) -> list[str]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["rank", "metric"]:
        raise FormatError(f"{path}: expected a ranking CSV with header rank,metric,score")
    return [r[1] for r in sorted(rows[1:], key=lambda r: int(r[0]))]


# --- commands ------------------------------------------------------------------------

def cmd_gen(args) -> int:
    out = Path(args.out)
    written = []
    for i in range(args.cases):
        seed = derive_seed(args.seed, i)
        if args.generator == "var":
            if args.edges is None:
                raise ConfigError("--edges is required for the var generator")
            data, meta, dag = datagen.var_case(args.nodes, args.edges, args.length, args.inject_index, seed,
                                               args.magnitude, args.duration)
        else:
            data, meta, dag = datagen.discrete_case(args.nodes, args.length, args.inject_index, seed)
        if args.delta_s:
            meta = replace(meta, delta_s=args.delta_s)
        d = out / f"case_{i:03d}"
        io.write_case(d, data, meta, dag)
        written.append(str(d))
    sys.stdout.write("\n".join(written) + "\n")
    return 0


def cmd_discover(args) -> int:
    data, _, truth = io.load_case(_case_path(args.case), io.load_name_map(args.name_map))
    cfg = _discovery_config(args)
    if args.method not in DISCOVERY_METHODS:
        raise ConfigError(f"unknown discovery method {args.method!r}; choose from {sorted(DISCOVERY_METHODS)}")
    start = time.perf_counter()
    graph = DISCOVERY_METHODS[args.method](data, cfg)
    elapsed = time.perf_counter() - start
    text = io.format_graph(graph)
    _emit(text, args.out)
    if truth is not None:
        rows = [["method", "F1", "F1-S", "SHD", "runtime_s"],
                [args.method, f"{graph_f1(graph, truth, Mode.DIRECTED).f1:.2f}",
                 f"{graph_f1(graph, truth, Mode.SKELETON).f1:.2f}", shd(graph, truth), f"{elapsed:.2f}"]]
        (sys.stdout if args.out else sys.stderr).write(_table(rows, args.format))
    return 0


def cmd_rca(args) -> int:
    case_dir = _case_path(args.case)
    data, case, _ = io.load_case(case_dir, io.load_name_map(args.name_map))
    guard = args.guard_rows
    if guard is None:
        # synthetic cases carry exact injection rows; ingested dumps get a guard band
        guard = 0 if case.fault_type is FaultType.SIM else GUARD_ROWS
    opts = {}
    if args.graph:
        opts["graph"] = io.read_graph(args.graph)
    if args.t_f_unknown:
        opts["t_f_known"] = False
    ranking = run_method(args.method, data, case, _discovery_config(args), args.seed, guard, **opts)
    for w in ranking.warnings:
        log.warning("%s", w)
    if args.by_service:
        ranking = ranking.by_service()
    _emit(_table(_ranking_table(ranking), args.format), args.out)
    return 0


def _grid(spec) -> list[DiscoveryConfig]:
    if isinstance(spec, list):
        return [DiscoveryConfig.from_dict(d) for d in spec]
    if isinstance(spec, dict):
        keys = sorted(spec)
        values = [spec[k] if isinstance(spec[k], list) else [spec[k]] for k in keys]
        return [DiscoveryConfig.from_dict(dict(zip(keys, combo))) for combo in itertools.product(*values)]
    raise FormatError("grid must be a list of configs or an object of value lists")


def cmd_tune(args) -> int:
    data, _, _ = io.load_case(_case_path(args.case), io.load_name_map(args.name_map))
    best = tune_bic(args.method, data, _grid(_read_json(args.grid, "grid")))
    _emit(json.dumps(best.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_bench(args) -> int:
    path = Path(args.suite)
    cfg = SuiteConfig.from_dict(_read_json(args.suite, "suite"), base_dir=path.parent)
    timeout = cfg.timeout_s if args.timeout_s is None else (args.timeout_s or None)
    seed = cfg.master_seed if args.seed_given is False else args.seed
    report = run_suite(cfg, seed, jobs=args.jobs, timeout_s=timeout)
    text = emit_report(report, args.format)
    _emit(text, args.out)
    if args.out:
        out = Path(args.out)
        stem = out.with_suffix("")
        io.atomic_write(stem.with_suffix(".json"), json.dumps(report.to_dict(), indent=1) + "\n")
        for fig in write_figures(report, stem):
            log.info("wrote %s", fig)
    return 0


def cmd_eval(args) -> int:
    dirs = io.case_dirs(args.cases)
    groups: dict[str, list] = {}
    for d in dirs:
        data, case, _ = io.load_case(d)
        rfile = Path(args.rankings) / f"{d.name}.csv"
        if not rfile.exists():
            raise FormatError(f"missing ranking file {rfile}")
        names = _read_ranking(rfile)
        roots = case.root_causes()
        if not roots:
            raise FormatError(f"{d}: case has no root cause")
        if not roots <= set(data.metric_names):
            # service-level truth: score the ranking at service granularity
            names = Ranking({n: float(len(names) - i) for i, n in enumerate(names)}).by_service().names
        fault = case.fault_type.value if case.fault_type else "NA"
        groups.setdefault(fault, []).append((names, roots))
    rows = []
    for fault in sorted(groups):
        ac = {k: ac_at_k(groups[fault], k) for k in range(1, 6)}
        rows.append(ReportRow(args.method, Path(args.cases).name, fault, ac,
                              sum(ac.values()) / 5, None, None, len(groups[fault])))
    _emit(emit_report(EvalReport(rows), args.format), args.out)
    return 0


# --- parser --------------------------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    p.add_argument("--timeout-s", type=float, default=d(None), help="per-case time limit; 0 disables")
    p.add_argument("--jobs", type=int, default=d(1), help="parallel case executions")
    p.add_argument("--format", choices=["csv", "markdown"], default=d("csv"), help="table output format")
    p.add_argument("-v", "--verbose", action="count", default=d(0))


def _discovery_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with discovery settings")
    p.add_argument("--alpha", type=float)
    p.add_argument("--max-cond-size", type=int)
    p.add_argument("--max-lag", type=int)
    p.add_argument("--penalty", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcakit", description="Causal discovery and root-cause analysis toolkit")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic fault cases")
    _global_flags(p, suppress=True)
    p.add_argument("--generator", choices=["var", "discrete"], default="var")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--edges", type=int, default=None)
    p.add_argument("--length", type=int, default=4000)
    p.add_argument("--inject-index", type=int, default=None, help="fault row (default: 3/4 of the length)")
    p.add_argument("--cases", type=int, default=1, help="number of fault cases")
    p.add_argument("--magnitude", type=float, default=10.0)
    p.add_argument("--duration", type=int, default=2)
    p.add_argument("--delta-s", type=float, default=0.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("discover", help="learn a causal graph from one case")
    _global_flags(p, suppress=True)
    p.add_argument("case", help="case directory or its data.csv")
    p.add_argument("--method", default="pc", choices=sorted(DISCOVERY_METHODS))
    _discovery_flags(p)
    p.add_argument("--name-map", help="JSON header rename map")
    p.add_argument("--out", help="graph.edges output (default stdout)")
    p.set_defaults(fn=cmd_discover)

    p = sub.add_parser("rca", help="rank root-cause candidates for one case")
    _global_flags(p, suppress=True)
    p.add_argument("case", help="case directory or its data.csv")
    p.add_argument("--method", default="nsigma", help=f"one of {', '.join(method_names())}")
    _discovery_flags(p)
    p.add_argument("--graph", help="graph.edges file for circa")
    p.add_argument("--guard-rows", type=int, default=None)
    p.add_argument("--t-f-unknown", action="store_true", help="baro: estimate the failure time")
    p.add_argument("--by-service", action="store_true", help="collapse the ranking to services")
    p.add_argument("--name-map", help="JSON header rename map")
    p.add_argument("--out", help="ranking CSV output (default stdout)")
    p.set_defaults(fn=cmd_rca)

    p = sub.add_parser("tune", help="pick discovery settings by held-out BIC")
    _global_flags(p, suppress=True)
    p.add_argument("case")
    p.add_argument("--method", default="pc", choices=sorted(DISCOVERY_METHODS))
    p.add_argument("--grid", required=True, help="JSON grid: list of configs or object of value lists")
    p.add_argument("--name-map", help="JSON header rename map")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("bench", help="run a JSON benchmark suite")
    _global_flags(p, suppress=True)
    p.add_argument("suite", help="suite JSON file")
    p.add_argument("--out", help="report file; figures and a JSON dump are written next to it")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("eval", help="score ranking CSVs against case truths")
    _global_flags(p, suppress=True)
    p.add_argument("rankings", help="directory of <case>.csv rankings")
    p.add_argument("cases", help="directory of case directories")
    p.add_argument("--method", default="method", help="label for the report row")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "gen" and args.inject_index is None:
        args.inject_index = (3 * args.length) // 4
    try:
        return args.fn(args)
    except RCAError as exc:
        sys.stderr.write(f"error [{exc.category}]: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error [io]: {exc.filename or ''}: {exc.strerror or exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
