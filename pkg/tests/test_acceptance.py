"""Acceptance criteria, one test per criterion.

Each criterion function returns ``(passed, detail)``. Under pytest the
outcomes are collected and printed as one PASS/FAIL line per criterion in
the terminal summary; ``python tests/test_acceptance.py`` prints the same
lines directly.
"""

from __future__ import annotations

import contextlib
import functools
import io as pyio
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import sem_data
from test_discovery import all_dags, equivalence_class

from rcakit import io
from rcakit.citest import fisher_z, g_square
from rcakit.cli import main as cli_main
from rcakit.core import CausalGraph, Edge, Mark, skeleton
from rcakit.datagen import VarModel, gen_var, random_dag, var_case
from rcakit.discovery import bic_score, ges, pc
from rcakit.eval import SuiteConfig, ac_at_k, avg_at_k, graph_f1, run_suite, shd
from rcakit.rca import baro, nsigma
from rcakit.scoring import pagerank

DISCOVERY = ["pc", "fci", "granger", "ges"]


# --- shared suites ------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def discovery_report():
    """10 fault-free VAR datasets at 10 and 50 nodes (T = 4000), every discovery method, run serially."""
    cfg = SuiteConfig.from_dict({
        "datasets": [
            {"name": "var10", "generator": "var", "nodes": 10, "edges": 20, "length": 4000, "cases": 10},
            {"name": "var50", "generator": "var", "nodes": 50, "edges": 100, "length": 4000, "cases": 10},
        ],
        "methods": DISCOVERY,
        "repeats": 1,
        "timeout_s": None,
    })
    return run_suite(cfg, master_seed=0)


@functools.lru_cache(maxsize=None)
def discrete_length_report():
    cfg = SuiteConfig.from_dict({
        "datasets": [
            {"name": "disc125", "generator": "discrete", "nodes": 10, "length": 125, "cases": 10},
            {"name": "disc4000", "generator": "discrete", "nodes": 10, "length": 4000, "cases": 10},
        ],
        "methods": ["fci"],
        "repeats": 1,
        "timeout_s": None,
    })
    return run_suite(cfg, master_seed=0)


# --- criteria -----------------------------------------------------------------------

def criterion_1():
    cfg = SuiteConfig.from_dict({
        "datasets": [
            {"name": "n10", "generator": "var", "nodes": 10, "edges": 20, "length": 103,
             "inject_index": 100, "cases": 200},
            {"name": "n50", "generator": "var", "nodes": 50, "edges": 100, "length": 103,
             "inject_index": 100, "cases": 200},
        ],
        "methods": ["dummy"],
        "repeats": 10,
        "timeout_s": None,
    })
    report = run_suite(cfg, master_seed=1)
    a10, a50 = report.row("dummy", "n10").avg5, report.row("dummy", "n50").avg5
    ok = abs(a10 - 0.30) <= 0.02 and abs(a50 - 0.06) <= 0.01
    return ok, f"10 nodes {a10:.3f} (0.30 +- 0.02), 50 nodes {a50:.3f} (0.06 +- 0.01)"


def criterion_2():
    rep = discovery_report()
    parts, ok = [], True
    for m in DISCOVERY:
        small, large = rep.row(m, "var10").graph["f1"], rep.row(m, "var50").graph["f1"]
        ok &= large < small
        parts.append(f"{m} {small:.2f}->{large:.2f}")
    return ok, "directed F1 10->50 nodes: " + ", ".join(parts)


def criterion_3():
    records = discovery_report().records + discrete_length_report().records
    scored = [r for r in records if r.f1 is not None]
    bad = [r for r in scored if r.f1 > r.f1_s]
    ok = not bad and len(scored) == len(records)
    return ok, f"{len(bad)} violations of F1 <= F1-S over {len(scored)} discovery runs ({len(records)} attempted)"


def criterion_4():
    row = discovery_report().row("pc", "var10")
    f1, s = row.graph["f1"], row.graph["shd"]
    ok = 0.34 <= f1 <= 0.64 and s <= 26
    return ok, f"PC alpha 0.05 on 10-node VAR: F1 {f1:.3f} in [0.34, 0.64], SHD {s:.1f} <= 26"


def criterion_5():
    cases = [var_case(10, 20, 103, 100, seed=s) for s in range(100)]

    def score(method, delta):
        return avg_at_k([(method(d, replace(c, delta_s=delta)), c.root_causes()) for d, c, _ in cases], 5)

    ns0, ns1 = score(nsigma, 0.0), score(nsigma, 120.0)
    ba0, ba1 = score(baro, 0.0), score(baro, 120.0)
    ns_drop, ba_drop = ns0 - ns1, ba0 - ba1
    ok = ns0 >= 0.75 and ns_drop >= 0.4 and ba_drop <= ns_drop
    return ok, (f"NSigma Avg@5 {ns0:.2f} -> {ns1:.2f} (drop {ns_drop:.2f} >= 0.4), "
                f"BARO {ba0:.2f} -> {ba1:.2f} (drop {ba_drop:.2f} <= NSigma drop)")


def criterion_6():
    cfg = SuiteConfig.from_dict({
        "datasets": [{"name": "disc10", "generator": "discrete", "nodes": 10, "length": 2000,
                      "inject_index": 1000, "cases": 100}],
        "methods": ["rcd"],
        "repeats": 1,
        "timeout_s": None,
    })
    row = run_suite(cfg, master_seed=0).row("rcd", "disc10")
    return row.avg5 >= 0.6, f"RCD Avg@5 on 100 discrete cases: {row.avg5:.3f} >= 0.6"


def criterion_7():
    rep = discrete_length_report()
    short, long = rep.row("fci", "disc125").graph["f1"], rep.row("fci", "disc4000").graph["f1"]
    return long - short >= 0.15, f"FCI discrete F1 T=125 {short:.3f} -> T=4000 {long:.3f} (gain >= 0.15)"


def criterion_8():
    rep = discovery_report()
    t = {m: rep.row(m, "var50").mean_runtime_s for m in DISCOVERY}
    ok = t["pc"] < t["granger"] and max(t, key=t.get) == "ges"
    return ok, "50-node mean runtime (s): " + ", ".join(f"{m} {t[m]:.2f}" for m in DISCOVERY)


def _calibration():
    rates = []
    for test in ("fisher_z0", "fisher_z2", "g_square"):
        rejections = 0
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            if test == "g_square":
                res = g_square(rng.integers(0, 6, (1000, 2)), 0, 1, (), 0.05)
            else:
                k = int(test[-1])
                res = fisher_z(rng.standard_normal((1000, 2 + k)), 0, 1, list(range(2, 2 + k)), 0.05)
            rejections += not res.independent
        rates.append(rejections / 1000)
    return all(abs(r - 0.05) <= 0.03 for r in rates)


def _pc_small_graphs():
    chain, chain_dag = sem_data(["x", "y", "z"], [("x", "y", 1.0), ("y", "z", 1.0)], seed=11)
    coll, _ = sem_data(["x", "y", "z"], [("x", "z", 1.0), ("y", "z", 1.0)], seed=12)
    g = pc(chain)
    c = pc(coll)
    return (skeleton(g) == skeleton(chain_dag)
            and c.edges == frozenset({Edge("x", "z", Mark.DIRECTED), Edge("y", "z", Mark.DIRECTED)}))


def _ges_exhaustive():
    ok = True
    for edges, seed in (([("x", "y", 1.0), ("y", "z", 1.0)], 11), ([("x", "z", 1.0), ("y", "z", 1.0)], 12)):
        data, _ = sem_data(["x", "y", "z"], edges, seed=seed)
        best = min(all_dags(["x", "y", "z"]), key=lambda d: bic_score(data, d))
        ok &= set(ges(data).edges) == equivalence_class(best)
    return ok


def _pagerank_props():
    rng = np.random.default_rng(0)
    ok = True
    for _ in range(50):
        n = int(rng.integers(2, 8))
        m = int(rng.integers(0, n * (n - 1) // 2 + 1))
        g = random_dag(n, m, int(rng.integers(1 << 30)))
        ok &= abs(sum(s for _, s in pagerank(g)) - 1.0) < 1e-9
    r = pagerank(CausalGraph("AB", [("A", "B", Mark.BIDIRECTED)]))
    return ok and abs(r.score("A") - 0.5) < 1e-9 and abs(r.score("B") - 0.5) < 1e-9


def _ac_monotone():
    rng = np.random.default_rng(1)
    names = list("abcdefg")
    for _ in range(200):
        cases = [(list(rng.permutation(names)), {names[rng.integers(7)]}) for _ in range(int(rng.integers(1, 20)))]
        if any(ac_at_k(cases, k) > ac_at_k(cases, k + 1) for k in range(1, 7)):
            return False
    return True


def _metric_examples():
    t = CausalGraph("ABC", [("A", "B"), ("B", "C")])
    rev = CausalGraph("ABC", [("B", "A"), ("B", "C")])
    extra = CausalGraph("ABC", [("A", "B"), ("B", "C"), ("A", "C")])
    one = CausalGraph("ABC", [("A", "B")])
    return (shd(t, t) == 0 and shd(rev, t) == 1 and shd(extra, t) == 1
            and graph_f1(CausalGraph("ABC", [("B", "A")]), one, "skeleton").f1 == 1
            and graph_f1(CausalGraph("ABC", [("B", "A")]), one, "directed").f1 == 0
            and graph_f1(t, t, "directed").f1 == 1)


def _determinism_and_round_trip():
    dag = random_dag(6, 8, 5)
    model = VarModel.random(dag, 6)
    a = io.format_data(gen_var(model, 300, seed=7)[0])
    b = io.format_data(gen_var(model, 300, seed=7)[0])
    ok = a == b
    with tempfile.TemporaryDirectory() as tmp:
        args = ["gen", "--nodes", "6", "--edges", "8", "--length", "300", "--seed", "4"]
        with contextlib.redirect_stdout(pyio.StringIO()):
            ok &= cli_main(args + ["--out", f"{tmp}/a"]) == 0
            ok &= cli_main(args + ["--out", f"{tmp}/b"]) == 0
        for f in (io.DATA_FILE, io.META_FILE, io.GRAPH_FILE):
            ok &= Path(tmp, "a/case_000", f).read_bytes() == Path(tmp, "b/case_000", f).read_bytes()
        data, case, truth = io.load_case(Path(tmp, "a/case_000"))
        ok &= io.format_data(data) == Path(tmp, "a/case_000", io.DATA_FILE).read_text()
        ok &= case.inject_index == 225 and truth is not None and len(truth.edges) == 8
    return ok


def criterion_9():
    checks = {
        "CI calibration": _calibration,
        "PC chain/collider": _pc_small_graphs,
        "GES exhaustive": _ges_exhaustive,
        "PageRank": _pagerank_props,
        "AC@k monotone": _ac_monotone,
        "SHD/F1 examples": _metric_examples,
        "determinism+round trip": _determinism_and_round_trip,
    }
    results = {name: bool(fn()) for name, fn in checks.items()}
    failed = [n for n, v in results.items() if not v]
    return not failed, f"{len(results) - len(failed)}/{len(results)} property checks" + (
        f"; failed: {', '.join(failed)}" if failed else "")


CRITERIA = {
    1: ("Dummy analytic Avg@5", criterion_1),
    2: ("graph-size degradation", criterion_2),
    3: ("F1 <= F1-S everywhere", criterion_3),
    4: ("PC ballpark", criterion_4),
    5: ("failure-time sensitivity", criterion_5),
    6: ("RCD on discrete faults", criterion_6),
    7: ("data-length trend", criterion_7),
    8: ("runtime ordering", criterion_8),
    9: ("property suites", criterion_9),
}


def evaluate(number: int) -> tuple[bool, str]:
    title, fn = CRITERIA[number]
    start = time.perf_counter()
    ok, detail = fn()
    status = "PASS" if ok else "FAIL"
    return ok, f"criterion {number} [{status}] {title}: {detail} ({time.perf_counter() - start:.0f}s)"


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, acceptance_log):
    ok, line = evaluate(number)
    acceptance_log[number] = line
    assert ok, line


if __name__ == "__main__":
    outcomes = []
    for n in sorted(CRITERIA):
        ok, line = evaluate(n)
        print(line, flush=True)
        outcomes.append(ok)
    sys.exit(0 if all(outcomes) else 1)
