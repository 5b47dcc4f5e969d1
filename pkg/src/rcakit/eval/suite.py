"""Benchmark runner: methods x datasets x repeats, aggregated into an EvalReport.

Suite configs are JSON objects::

    {
      "master_seed": 0,
      "repeats": 10,
      "timeout_s": 120,
      "datasets": [
        {"name": "var10", "generator": "var", "nodes": 10, "edges": 20,
         "length": 103, "inject_index": 100, "cases": 100, "delta_s": 0},
        {"name": "disc10", "generator": "discrete", "nodes": 10,
         "length": 2000, "inject_index": 1000, "cases": 100},
        {"name": "shop", "path": "cases/shop", "guard_rows": 5}
      ],
      "methods": ["nsigma", "pc-pr", {"name": "pc", "config": {"alpha": 0.01}}]
    }

Method names that are discovery algorithms (``pc``, ``fci``, ...) produce graph
accuracy rows; every other name is an RCA method producing AC@k rows.
Synthetic datasets are regenerated for each repeat; loaded ones are reused.
"""

from __future__ import annotations

import logging
import signal
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from multiprocessing import get_context
from pathlib import Path
from statistics import fmean
from typing import Any, Optional

from .. import datagen, io
from ..core import CaseMetadata, CausalGraph, ConfigError, Dataset, RCAError
from ..discovery import METHODS as DISCOVERY_METHODS
from ..discovery import DiscoveryConfig
from ..rca import check_method, run_method_with_graph
from .metrics import Mode, ac_at_k, graph_f1, shd

log = logging.getLogger(__name__)

DEFAULT_REPEATS = 10
DEFAULT_TIMEOUT_S = 120.0
MASK64 = 0xFFFFFFFFFFFFFFFF
K_MAX = 5


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Fold a path of small integers into the master seed, one splitmix64 step per element."""
    s = splitmix64(int(master) & MASK64)
    for p in path:
        s = splitmix64(s ^ (int(p) & MASK64))
    return s


# --- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    name: str
    config: DiscoveryConfig = DiscoveryConfig()
    options: dict = field(default_factory=dict)

    @property
    def is_discovery(self) -> bool:
        return self.name in DISCOVERY_METHODS


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    generator: Optional[str] = None
    nodes: int = 10
    edges: Optional[int] = None
    length: int = 4000
    inject_index: Optional[int] = None
    cases: int = 10
    delta_s: float = 0.0
    path: Optional[str] = None
    guard_rows: int = 0


@dataclass(frozen=True)
class SuiteConfig:
    datasets: tuple[DatasetSpec, ...]
    methods: tuple[MethodSpec, ...]
    repeats: int = DEFAULT_REPEATS
    timeout_s: Optional[float] = DEFAULT_TIMEOUT_S
    master_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | str = ".") -> "SuiteConfig":
        if not isinstance(d, dict):
            raise ConfigError("suite config must be a JSON object")
        unknown = set(d) - {"datasets", "methods", "repeats", "timeout_s", "master_seed"}
        if unknown:
            raise ConfigError(f"unknown suite keys {sorted(unknown)}")
        methods = []
        for m in d.get("methods", []):
            if isinstance(m, str):
                m = {"name": m}
            try:
                spec = MethodSpec(m["name"], DiscoveryConfig.from_dict(m.get("config", {})),
                                  dict(m.get("options", {})))
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"bad method entry {m!r}: {exc}") from None
            if not spec.is_discovery:
                check_method(spec.name)
            methods.append(spec)
        datasets = []
        fields = set(DatasetSpec.__dataclass_fields__)
        for ds in d.get("datasets", []):
            bad = set(ds) - fields
            if bad or "name" not in ds:
                raise ConfigError(f"bad dataset entry {ds!r}")
            ds = dict(ds)
            if ds.get("path") is not None:
                ds["path"] = str(Path(base_dir) / ds["path"])
            elif ds.get("generator") not in ("var", "discrete"):
                raise ConfigError(f"dataset {ds['name']!r} needs a path or generator 'var'/'discrete'")
            if ds.get("generator") == "var" and ds.get("edges") is None:
                raise ConfigError(f"dataset {ds['name']!r}: var generator needs 'edges'")
            datasets.append(DatasetSpec(**ds))
        if not methods or not datasets:
            raise ConfigError("suite needs at least one method and one dataset")
        names = [x.name for x in datasets]
        if len(set(names)) != len(names):
            raise ConfigError("dataset names must be unique")
        repeats = int(d.get("repeats", DEFAULT_REPEATS))
        if repeats < 1:
            raise ConfigError("repeats must be positive")
        timeout = d.get("timeout_s", DEFAULT_TIMEOUT_S)
        return cls(tuple(datasets), tuple(methods), repeats,
                   None if timeout is None else float(timeout), int(d.get("master_seed", 0)))


# --- results -----------------------------------------------------------------------

@dataclass(frozen=True)
class CaseRecord:
    method: str
    dataset: str
    repeat: int
    case: int
    fault_type: str
    runtime_s: float
    timed_out: bool = False
    error: Optional[str] = None
    top: Optional[tuple[str, ...]] = None
    roots: tuple[str, ...] = ()
    f1: Optional[float] = None
    f1_s: Optional[float] = None
    shd: Optional[int] = None


@dataclass(frozen=True)
class ReportRow:
    method: str
    dataset: str
    fault_type: str
    ac: dict
    avg5: Optional[float]
    mean_runtime_s: Optional[float]
    graph: Optional[dict] = None
    n_cases: int = 0
    n_timeouts: int = 0
    n_errors: int = 0


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    records: list[CaseRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "records": [asdict(r) for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rows = [ReportRow(**{**r, "ac": {int(k): v for k, v in r["ac"].items()}}) for r in d.get("rows", [])]
        recs = [CaseRecord(**{**r, "top": None if r["top"] is None else tuple(r["top"]),
                              "roots": tuple(r["roots"])}) for r in d.get("records", [])]
        return cls(rows, recs)

    def row(self, method: str, dataset: str) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.dataset == dataset:
                return r
        raise KeyError((method, dataset))


# --- execution ---------------------------------------------------------------------

class CaseTimeout(Exception):
    pass


def _on_alarm(signum, frame):
    raise CaseTimeout()


def _with_timeout(fn, timeout_s: Optional[float]):
    """Run fn() under a wall-clock limit (SIGALRM; main thread only, otherwise unlimited)."""
    if not timeout_s or threading.current_thread() is not threading.main_thread():
        return fn()
    old = signal.signal(signal.SIGALRM, _on_alarm)
    signal.setitimer(signal.ITIMER_REAL, timeout_s)
    try:
        return fn()
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, old)


@dataclass(frozen=True)
class _Task:
    method: MethodSpec
    dataset: str
    repeat: int
    case: int
    seed: int
    data: Dataset
    meta: CaseMetadata
    truth: Optional[CausalGraph]
    guard_rows: int
    timeout_s: Optional[float]


def _graph_scores(graph: Optional[CausalGraph], truth: Optional[CausalGraph]) -> dict:
    if graph is None or truth is None:
        return {}
    return {"f1": graph_f1(graph, truth, Mode.DIRECTED).f1,
            "f1_s": graph_f1(graph, truth, Mode.SKELETON).f1,
            "shd": shd(graph, truth)}


def execute(task: _Task) -> CaseRecord:
    m = task.method
    roots = tuple(sorted(task.meta.root_causes()))
    fault = task.meta.fault_type.value if task.meta.fault_type else "NA"
    base = dict(method=m.name, dataset=task.dataset, repeat=task.repeat, case=task.case,
                fault_type=fault, roots=roots)

    def call():
        if m.is_discovery:
            return None, DISCOVERY_METHODS[m.name](task.data, m.config)
        return run_method_with_graph(m.name, task.data, task.meta, m.config, task.seed,
                                     task.guard_rows, **m.options)

    start = time.perf_counter()
    try:
        ranking, graph = _with_timeout(call, task.timeout_s)
    except CaseTimeout:
        return CaseRecord(runtime_s=time.perf_counter() - start, timed_out=True, **base)
    except RCAError as exc:
        log.warning("%s on %s case %d failed: %s", m.name, task.dataset, task.case, exc)
        return CaseRecord(runtime_s=time.perf_counter() - start,
                          error=f"{type(exc).__name__}: {exc}", **base)
    elapsed = time.perf_counter() - start
    top = tuple(ranking.top(K_MAX)) if ranking is not None else None
    return CaseRecord(runtime_s=elapsed, top=top, **base, **_graph_scores(graph, task.truth))


def _load_dataset(spec: DatasetSpec, repeat: int, ds_index: int, master: int
                  ) -> list[tuple[Dataset, CaseMetadata, Optional[CausalGraph]]]:
    if spec.path is not None:
        cases = [io.load_case(p) for p in io.case_dirs(spec.path)]
    else:
        cases = []
        for c in range(spec.cases):
            seed = derive_seed(master, ds_index, repeat, c)
            if spec.generator == "var":
                if spec.inject_index is None:
                    dag = datagen.random_dag(spec.nodes, spec.edges, seed)
                    model = datagen.VarModel.random(dag, derive_seed(seed, 1))
                    data, meta = datagen.gen_var(model, spec.length, None, derive_seed(seed, 2))
                else:
                    data, meta, dag = datagen.var_case(spec.nodes, spec.edges, spec.length,
                                                       spec.inject_index, seed)
            else:
                if spec.inject_index is None:
                    net = datagen.random_bayes_net(spec.nodes, seed)
                    data, meta = datagen.gen_discrete(net, spec.length, None, derive_seed(seed, 2))
                    dag = net.dag
                else:
                    data, meta, dag = datagen.discrete_case(spec.nodes, spec.length, spec.inject_index, seed)
            cases.append((data, meta, dag))
    if spec.delta_s:
        cases = [(d, replace(m, delta_s=spec.delta_s), g) for d, m, g in cases]
    return cases


def _aggregate(cfg: SuiteConfig, records: list[CaseRecord]) -> list[ReportRow]:
    rows = []
    for m in cfg.methods:
        for ds in cfg.datasets:
            mine = [r for r in records if r.method == m.name and r.dataset == ds.name]
            for fault in sorted({r.fault_type for r in mine}):
                group = [r for r in mine if r.fault_type == fault]
                ac: dict[int, float] = {}
                avg5 = None
                if not m.is_discovery and all(r.roots for r in group):
                    cases = [(r.top if not (r.timed_out or r.error) else None, r.roots) for r in group]
                    ac = {k: ac_at_k(cases, k) for k in range(1, K_MAX + 1)}
                    avg5 = fmean(ac.values())
                scored = [r for r in group if r.f1 is not None]
                graph = None
                if scored:
                    graph = {"f1": fmean(r.f1 for r in scored), "f1_s": fmean(r.f1_s for r in scored),
                             "shd": fmean(r.shd for r in scored)}
                rows.append(ReportRow(
                    m.name, ds.name, fault, ac, avg5,
                    fmean(r.runtime_s for r in group), graph, len(group),
                    sum(r.timed_out for r in group), sum(r.error is not None for r in group)))
    return rows


_UNSET: Any = object()


def run_suite(cfg: SuiteConfig, master_seed: Optional[int] = None, jobs: int = 1,
              timeout_s: Optional[float] = _UNSET) -> EvalReport:
    """Run every method on every case of every dataset and repeat.

    ``master_seed`` and ``timeout_s`` override the config when given (pass
    ``timeout_s=None`` to disable the limit). Records are ordered by
    (method, dataset, repeat, case) whatever the completion order.
    """
    master = cfg.master_seed if master_seed is None else int(master_seed)
    limit = cfg.timeout_s if timeout_s is _UNSET else timeout_s
    tasks = []
    for di, ds in enumerate(cfg.datasets):
        on_disk = _load_dataset(ds, 0, di, master) if ds.path is not None else None
        for rep in range(cfg.repeats):
            cases = on_disk if on_disk is not None else _load_dataset(ds, rep, di, master)
            for ci, (data, meta, truth) in enumerate(cases):
                for mi, m in enumerate(cfg.methods):
                    seed = derive_seed(master, di, rep, ci, mi + 1)
                    tasks.append(((mi, di, rep, ci),
                                  _Task(m, ds.name, rep, ci, seed, data, meta, truth, ds.guard_rows, limit)))
    tasks.sort(key=lambda kt: kt[0])
    if jobs <= 1:
        records = [execute(t) for _, t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs, mp_context=get_context("fork")) as pool:
            records = list(pool.map(execute, [t for _, t in tasks], chunksize=1))
    return EvalReport(_aggregate(cfg, records), records)
