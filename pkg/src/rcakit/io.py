"""On-disk formats: case directories (data.csv + meta.json [+ graph.edges]) and edge lists."""

from __future__ import annotations

import csv
import json
import math
import os
import re
import tempfile
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    CaseMetadata,
    CausalGraph,
    Dataset,
    Edge,
    FaultType,
    FormatError,
    Kind,
    Mark,
    MetricReferenceError,
)

DATA_FILE = "data.csv"
META_FILE = "meta.json"
GRAPH_FILE = "graph.edges"
_EDGE_RE = re.compile(r"^\s*(\S+)\s*(<->|->|--)\s*(\S+)\s*$")


def atomic_write(path: Path | str, text: str) -> None:
    """Write via a temp file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


# --- graphs ------------------------------------------------------------------------

def format_graph(g: CausalGraph) -> str:
    lines = [str(e) for e in g]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_graph(text: str, nodes: Optional[Sequence[str]] = None, source: str = "<graph>") -> CausalGraph:
    edges = []
    seen_nodes: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _EDGE_RE.match(line)
        if not m:
            raise FormatError(f"{source}: line {lineno}: cannot parse edge {raw.strip()!r}")
        a, mark, b = m.groups()
        edges.append(Edge.make(a, b, Mark(mark)))
        for n in (a, b):
            if n not in seen_nodes:
                seen_nodes.append(n)
    if nodes is None:
        nodes = seen_nodes
    else:
        unknown = [n for n in seen_nodes if n not in set(nodes)]
        if unknown:
            raise MetricReferenceError(f"{source}: edges mention unknown metrics {unknown[:5]}")
    return CausalGraph(nodes, edges)


def read_graph(path: Path | str, nodes: Optional[Sequence[str]] = None) -> CausalGraph:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing graph file {path}")
    return parse_graph(path.read_text(), nodes, str(path))


def write_graph(path: Path | str, g: CausalGraph) -> None:
    atomic_write(path, format_graph(g))


# --- data.csv ----------------------------------------------------------------------

def format_data(data: Dataset, start_time: float = 0.0) -> str:
    lines = [",".join(["time", *data.metric_names])]
    step = data.sampling_interval_s
    for i, row in enumerate(np.asarray(data.values)):
        lines.append(",".join([_fmt(start_time + i * step), *(_fmt(v) for v in row)]))
    return "\n".join(lines) + "\n"


def _looks_discrete(values: np.ndarray) -> bool:
    return values.size > 0 and bool(np.all((values == np.round(values)) & (values >= 0) & (values <= 5)))


def parse_data(path: Path | str, name_map: Optional[Mapping[str, str]] = None,
               kind: Optional[Kind] = None) -> tuple[Dataset, np.ndarray]:
    """Parse data.csv into a Dataset and its sorted time column (seconds).

    Errors name the 1-based data row (header excluded) and the column.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing data file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "time":
            raise FormatError(f"{path}: first column must be 'time'")
        names = [name_map.get(h, h) if name_map else h for h in header[1:]]
        if not names:
            raise FormatError(f"{path}: no metric columns")
        rows = []
        for r, cells in enumerate(reader, 1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise FormatError(f"{path}: row {r} has {len(cells)} cells, expected {len(header)}")
            parsed = []
            for c, cell in enumerate(cells):
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise FormatError(f"{path}: row {r}, column {header[c]}: non-numeric value {cell!r}")
                parsed.append(v)
            rows.append(parsed)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    table = np.array(rows)
    table = table[np.argsort(table[:, 0], kind="stable")]
    times = table[:, 0]
    diffs = np.diff(times)
    interval = float(np.median(diffs)) if len(diffs) else 1.0
    if not interval > 0:
        raise FormatError(f"{path}: time column must increase")
    values = table[:, 1:]
    if kind is None:
        kind = Kind.DISCRETE if _looks_discrete(values) else Kind.CONTINUOUS
    try:
        data = Dataset(tuple(names), values, interval, kind)
    except Exception as exc:
        raise FormatError(f"{path}: {exc}") from None
    return data, times


# --- meta.json ---------------------------------------------------------------------

def format_meta(case: CaseMetadata, times: np.ndarray) -> str:
    meta: dict = {}
    if case.inject_index is not None:
        meta["inject_time"] = float(times[case.inject_index])
    if case.fault_type is not None:
        meta["fault_type"] = case.fault_type.value
    if case.root_cause_service is not None:
        meta["root_cause_service"] = case.root_cause_service
    if case.root_cause_metrics:
        meta["root_cause_metrics"] = sorted(case.root_cause_metrics)
    if case.delta_s:
        meta["delta_s"] = case.delta_s
    return json.dumps(meta, indent=2, sort_keys=True) + "\n"


def parse_meta(path: Path | str, data: Dataset, times: np.ndarray,
               name_map: Optional[Mapping[str, str]] = None) -> CaseMetadata:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing metadata file {path}")
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(meta, dict):
        raise FormatError(f"{path}: expected a JSON object")
    known = {"inject_time", "fault_type", "root_cause_service", "root_cause_metrics", "delta_s"}
    unknown = set(meta) - known
    if unknown:
        raise FormatError(f"{path}: unknown keys {sorted(unknown)}")
    inject_index = None
    if meta.get("inject_time") is not None:
        t = float(meta["inject_time"])
        inject_index = int(np.searchsorted(times, t - 1e-9 * max(1.0, abs(t)), side="left"))
        if inject_index >= len(times):
            raise FormatError(f"{path}: inject_time {t} is after the last row")
    metrics = meta.get("root_cause_metrics")
    if metrics is not None:
        metrics = frozenset(name_map.get(m, m) if name_map else m for m in metrics)
    try:
        fault = FaultType(meta["fault_type"]) if meta.get("fault_type") else None
    except ValueError:
        raise FormatError(f"{path}: unknown fault_type {meta['fault_type']!r}") from None
    case = CaseMetadata(
        inject_index=inject_index,
        delta_s=float(meta.get("delta_s", 0.0)),
        root_cause_service=meta.get("root_cause_service"),
        root_cause_metrics=metrics,
        fault_type=fault,
    )
    try:
        case.validate_against(data)
    except MetricReferenceError as exc:
        raise MetricReferenceError(f"{path}: {exc}") from None
    return case


# --- case directories --------------------------------------------------------------

def load_name_map(path: Optional[Path | str]) -> Optional[dict[str, str]]:
    if path is None:
        return None
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing name map {path}")
    try:
        mapping = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(mapping, dict) or not all(isinstance(v, str) for v in mapping.values()):
        raise FormatError(f"{path}: name map must be an object of strings")
    return mapping


def load_case(directory: Path | str, name_map: Optional[Mapping[str, str]] = None
              ) -> tuple[Dataset, CaseMetadata, Optional[CausalGraph]]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"case directory {directory} does not exist")
    data, times = parse_data(directory / DATA_FILE, name_map)
    case = parse_meta(directory / META_FILE, data, times, name_map)
    truth = None
    if (directory / GRAPH_FILE).exists():
        truth = read_graph(directory / GRAPH_FILE, data.metric_names)
    return data, case, truth


def write_case(directory: Path | str, data: Dataset, case: CaseMetadata,
               truth: Optional[CausalGraph] = None) -> None:
    directory = Path(directory)
    text = format_data(data)
    times = np.arange(data.n_rows) * data.sampling_interval_s
    atomic_write(directory / DATA_FILE, text)
    atomic_write(directory / META_FILE, format_meta(case, times))
    if truth is not None:
        write_graph(directory / GRAPH_FILE, truth)


def case_dirs(root: Path | str) -> list[Path]:
    """Case directories under ``root`` (itself, or its immediate children), sorted by name."""
    root = Path(root)
    if (root / DATA_FILE).exists():
        return [root]
    found = sorted(p for p in root.iterdir() if (p / DATA_FILE).exists()) if root.is_dir() else []
    if not found:
        raise FormatError(f"no case directories under {root}")
    return found
