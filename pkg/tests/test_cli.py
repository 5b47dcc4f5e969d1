import csv
import json

import numpy as np
import pytest

from rcakit import io
from rcakit.cli import main
from rcakit.core import CaseMetadata, Dataset, FormatError, MetricReferenceError
from rcakit.datagen import var_case
from rcakit.eval import EvalReport, ReportRow
from rcakit.rca import run_method
from rcakit.report import emit_report


@pytest.fixture
def case_dir(tmp_path):
    data, meta, dag = var_case(5, 6, 240, 180, seed=7, duration=5)
    d = tmp_path / "case"
    io.write_case(d, data, meta, dag)
    return d, data, meta, dag


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# --- loader ------------------------------------------------------------------------

def test_write_load_round_trip(case_dir):
    d, data, meta, dag = case_dir
    got, case, truth = io.load_case(d)
    assert got.metric_names == data.metric_names
    np.testing.assert_array_equal(got.values, data.values)
    assert case.inject_index == meta.inject_index
    assert case.root_cause_metrics == meta.root_cause_metrics
    assert truth == dag
    assert io.format_data(got) == (d / io.DATA_FILE).read_text()


def test_blank_cell_names_row_and_column(tmp_path):
    p = tmp_path / "data.csv"
    p.write_text("time,a_x,b_x\n0,1,2\n1,,3\n")
    with pytest.raises(FormatError, match="row 2, column a_x"):
        io.parse_data(p)


def test_missing_meta_names_the_path(tmp_path):
    io.atomic_write(tmp_path / "data.csv", "time,a_x\n0,1\n1,2\n")
    with pytest.raises(FormatError, match="meta.json"):
        io.load_case(tmp_path)


def test_meta_without_inject_time(tmp_path):
    io.atomic_write(tmp_path / "data.csv", "time,a_x\n0,1\n1,2\n")
    io.atomic_write(tmp_path / "meta.json", "{}")
    _, case, truth = io.load_case(tmp_path)
    assert case.inject_index is None and truth is None


def test_unknown_root_metric(tmp_path):
    io.atomic_write(tmp_path / "data.csv", "time,a_x\n0,1\n1,2\n")
    io.atomic_write(tmp_path / "meta.json", json.dumps({"root_cause_metrics": ["zz_x"]}))
    with pytest.raises(MetricReferenceError):
        io.load_case(tmp_path)


def test_inject_time_maps_to_row(tmp_path):
    io.atomic_write(tmp_path / "data.csv", "time,a_x\n0,1\n60,2\n120,3\n180,4\n")
    io.atomic_write(tmp_path / "meta.json", json.dumps({"inject_time": 120}))
    data, case, _ = io.load_case(tmp_path)
    assert case.inject_index == 2 and data.sampling_interval_s == 60


def test_name_map_renames_headers(tmp_path):
    io.atomic_write(tmp_path / "data.csv", "time,cpu-front,mem-db\n0,1,2\n1,2,3\n")
    io.atomic_write(tmp_path / "meta.json", json.dumps({"root_cause_metrics": ["cpu-front"]}))
    data, case, _ = io.load_case(tmp_path, {"cpu-front": "front_cpu", "mem-db": "db_mem"})
    assert data.metric_names == ("front_cpu", "db_mem")
    assert case.root_cause_metrics == {"front_cpu"}


# --- report rendering ---------------------------------------------------------------

def row():
    return ReportRow("nsigma", "d", "SIM", {k: 0.5 for k in range(1, 6)}, 0.5, 0.01, None, 3)


def test_emit_report_shapes():
    assert emit_report(EvalReport([])).count("\n") == 1
    assert emit_report(EvalReport([row()])).count("\n") == 2
    md = emit_report(EvalReport([row()]), "markdown").splitlines()
    assert md[1].startswith("|---")


# --- commands -----------------------------------------------------------------------

def test_gen_then_load_is_byte_identical(tmp_path, capsys):
    args = ["gen", "--nodes", 5, "--edges", 6, "--length", 200, "--cases", 2, "--seed", 3]
    code, out, _ = run(capsys, *args, "--out", tmp_path / "a")
    assert code == 0 and len(out.split()) == 2
    run(capsys, *args, "--out", tmp_path / "b")
    for name in ("case_000", "case_001"):
        for f in (io.DATA_FILE, io.META_FILE, io.GRAPH_FILE):
            assert (tmp_path / "a" / name / f).read_bytes() == (tmp_path / "b" / name / f).read_bytes()
        data, case, truth = io.load_case(tmp_path / "a" / name)
        assert case.inject_index == 150 and truth is not None
        assert io.format_data(data) == (tmp_path / "a" / name / io.DATA_FILE).read_text()


def test_gen_var_needs_edges(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "--out", tmp_path)
    assert code == 2 and "error [config]" in err


def test_rca_command(case_dir, capsys):
    d, data, meta, _ = case_dir
    code, out, _ = run(capsys, "rca", d, "--method", "nsigma")
    assert code == 0
    rows = list(csv.reader(out.splitlines()))
    assert rows[0] == ["rank", "metric", "score"] and len(rows) == 6
    assert [r[1] for r in rows[1:]] == run_method("nsigma", data, meta).names
    code, out, _ = run(capsys, "rca", d / "data.csv", "--by-service", "--format", "markdown")
    assert code == 0 and out.splitlines()[1].startswith("|---")


def test_rca_with_graph_file(case_dir, capsys):
    d, _, _, _ = case_dir
    code, out, _ = run(capsys, "rca", d, "--method", "circa", "--graph", d / io.GRAPH_FILE)
    assert code == 0 and len(out.splitlines()) == 6


def test_errors_exit_nonzero_with_category(tmp_path, case_dir, capsys):
    d, _, _, _ = case_dir
    code, _, err = run(capsys, "rca", tmp_path / "nope")
    assert code == 2 and err.startswith("error [format]")
    code, _, err = run(capsys, "rca", d, "--method", "bogus")
    assert code == 2 and "error [config]" in err
    bad = tmp_path / "bad"
    io.atomic_write(bad / "data.csv", "time,a_x\n0,1\n1,oops\n")
    io.atomic_write(bad / "meta.json", "{}")
    code, _, err = run(capsys, "rca", bad)
    assert code == 2 and "row 2, column a_x" in err


def test_discover_command(case_dir, tmp_path, capsys):
    d, _, _, _ = case_dir
    out_file = tmp_path / "g.edges"
    code, out, _ = run(capsys, "discover", d, "--method", "pc", "--alpha", 0.01, "--out", out_file)
    assert code == 0 and out.startswith("method,F1,F1-S,SHD")
    g = io.read_graph(out_file)
    assert set(g.nodes) <= set(io.load_case(d)[0].metric_names)


def test_tune_command(case_dir, tmp_path, capsys):
    d, _, _, _ = case_dir
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"alpha": [0.01, 0.05]}))
    code, out, _ = run(capsys, "tune", d, "--method", "pc", "--grid", grid)
    assert code == 0 and json.loads(out)["alpha"] in (0.01, 0.05)


def test_eval_command(tmp_path, capsys):
    cases = tmp_path / "cases"
    ranks = tmp_path / "ranks"
    for i, pos in enumerate((1, 4)):
        names = [f"s{j}_m" for j in range(6)]
        data = Dataset(tuple(names), np.zeros((4, 6)))
        io.write_case(cases / f"c{i}", data, CaseMetadata(inject_index=2, root_cause_metrics={"s0_m"}))
        order = names[1:]
        order.insert(pos - 1, "s0_m")
        text = "rank,metric,score\n" + "".join(f"{k + 1},{n},{6 - k}\n" for k, n in enumerate(order))
        io.atomic_write(ranks / f"c{i}.csv", text)
    code, out, _ = run(capsys, "eval", ranks, cases, "--method", "mine")
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert rows[0]["AC@1"] == "0.50" and rows[0]["AC@4"] == "1.00"
    (ranks / "c1.csv").unlink()
    code, _, err = run(capsys, "eval", ranks, cases)
    assert code == 2 and "c1.csv" in err


def test_bench_writes_table_json_and_figures(tmp_path, capsys):
    suite = {
        "datasets": [{"name": "tiny", "generator": "var", "nodes": 5, "edges": 6, "length": 200, "cases": 2}],
        "methods": ["nsigma", "dummy", "pc"],
        "repeats": 1,
        "timeout_s": None,
    }
    sfile = tmp_path / "suite.json"
    sfile.write_text(json.dumps(suite))
    out = tmp_path / "report.csv"
    code, _, _ = run(capsys, "bench", sfile, "--out", out)
    assert code == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert {r["method"] for r in rows} == {"nsigma", "dummy", "pc"}
    assert json.loads((tmp_path / "report.json").read_text())["rows"]
    pngs = sorted(tmp_path.glob("report*.png"))
    assert pngs and all(p.read_bytes()[:4] == b"\x89PNG" for p in pngs)
