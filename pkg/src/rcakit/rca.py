"""Root-cause analysis methods: each maps a dataset plus case metadata to a Ranking."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from .citest import g_square_codes, strata_codes
from .core import (
    CaseMetadata,
    CausalGraph,
    ConfigError,
    Dataset,
    Kind,
    Ranking,
    StructureError,
    WindowError,
)
from .discovery import DiscoveryConfig, get_method, pc
from .discovery.score import consistent_extension
from .scoring import SCORERS, AnomalyEvidence, score_graph

log = logging.getLogger(__name__)

EPS = 1e-6
GUARD_ROWS = 5
RCD_LEVELS = 5
RCD_MAX_COND = 3
CP_WARMUP = 30
CP_Z = 5.0
CP_RUN = 3
CP_FRACTION = 0.10
CP_STRIDE = 10
#: IQR of a normal sample in units of its standard deviation
IQR_PER_SIGMA = 1.349


@dataclass(frozen=True)
class SplitView:
    """Pre window [pre_start, pre_stop) and post window [t_hat, post_stop) in row indices."""

    pre_start: int
    pre_stop: int
    t_hat: int
    post_stop: int

    def __post_init__(self):
        if self.pre_stop <= self.pre_start:
            raise WindowError(f"empty pre-failure window (rows {self.pre_start}..{self.pre_stop})")
        if self.post_stop <= self.t_hat:
            raise WindowError(f"empty post-failure window (t_hat={self.t_hat})")

    @classmethod
    def from_case(cls, data: Dataset, case: CaseMetadata, guard_rows: int = 0,
                  t_hat: Optional[int] = None) -> "SplitView":
        end = case.end(data)
        if end >= data.n_rows:
            raise WindowError("observation_end beyond the last row")
        if t_hat is None:
            if case.inject_index is None:
                raise WindowError("case has no failure time")
            t_hat = case.inject_index + int(round(case.delta_s / data.sampling_interval_s))
        # a shifted split may run off the end; the post window is then empty
        t_hat = min(t_hat, end + 1)
        return cls(case.observation_start, t_hat - guard_rows, t_hat, end + 1)

    def pre(self, values: np.ndarray) -> np.ndarray:
        return values[self.pre_start:self.pre_stop]

    def post(self, values: np.ndarray) -> np.ndarray:
        return values[self.t_hat:self.post_stop]

    @property
    def window(self) -> slice:
        return slice(self.pre_start, self.post_stop)


def _values(data: Dataset) -> np.ndarray:
    return np.asarray(data.values, dtype=float)


def nsigma_scores(data: Dataset, view: SplitView) -> np.ndarray:
    v = _values(data)
    pre, post = view.pre(v), view.post(v)
    return np.abs(post.mean(axis=0) - pre.mean(axis=0)) / (pre.std(axis=0) + EPS)


def nsigma(data: Dataset, case: CaseMetadata, guard_rows: int = 0) -> Ranking:
    """Absolute mean shift of the post window in units of the pre-window std."""
    view = SplitView.from_case(data, case, guard_rows)
    return Ranking(zip(data.metric_names, nsigma_scores(data, view).tolist()))


def _iqr(x: np.ndarray, axis=0) -> np.ndarray:
    q75, q25 = np.percentile(x, [75, 25], axis=axis)
    return q75 - q25


def detect_changepoint(data: Dataset, start: int = 0, stop: Optional[int] = None) -> Optional[int]:
    """Earliest row where enough metrics stay robustly anomalous for a few consecutive rows.

    Each metric is compared against a median/IQR baseline built from all rows
    before it (refreshed every few rows); the IQR is rescaled to a normal
    standard deviation so the threshold reads in sigmas. Returns None when
    nothing qualifies.
    """
    v = _values(data)[start:stop]
    n, m = v.shape
    if n < 2 * CP_WARMUP:
        raise WindowError(f"changepoint detection needs at least {2 * CP_WARMUP} rows")
    need = max(1, int(np.ceil(CP_FRACTION * m)))
    flagged = np.zeros((n, m), dtype=bool)
    for block in range(CP_WARMUP, n, CP_STRIDE):
        base = v[:block]
        med = np.median(base, axis=0)
        scale = _iqr(base) / IQR_PER_SIGMA + EPS
        rows = v[block:block + CP_STRIDE]
        flagged[block:block + CP_STRIDE] = np.abs(rows - med) / scale > CP_Z
    hot = flagged.sum(axis=1) >= need
    run = 0
    for t in range(CP_WARMUP, n):
        run = run + 1 if hot[t] else 0
        if run == CP_RUN:
            return start + t - CP_RUN + 1
    return None


def baro(data: Dataset, case: CaseMetadata, t_f_known: bool = True, guard_rows: int = 0) -> Ranking:
    """Largest robust z (median / IQR of the pre window) reached in the post window."""
    warnings = []
    if t_f_known:
        view = SplitView.from_case(data, case, guard_rows)
    else:
        end = case.end(data)
        found = detect_changepoint(data, case.observation_start, end + 1)
        if found is None:
            found = (case.observation_start + end + 1) // 2
            warnings.append("no changepoint found; split at the midpoint")
            log.warning("baro: no changepoint found, splitting at row %d", found)
        view = SplitView.from_case(data, case, guard_rows, t_hat=found)
    v = _values(data)
    pre, post = view.pre(v), view.post(v)
    score = np.abs(post - np.median(pre, axis=0)).max(axis=0) / (_iqr(pre) + EPS)
    return Ranking(zip(data.metric_names, score.tolist()), warnings)


def _pair_abs_sum(sorted_x: np.ndarray) -> float:
    """Sum of |a - b| over unordered pairs of a sorted sample."""
    n = len(sorted_x)
    return float(sorted_x @ (2 * np.arange(n) - n + 1))


def energy_statistic(x: np.ndarray, y: np.ndarray) -> float:
    """Squared energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| (V-statistic, always >= 0)."""
    x, y = np.sort(np.asarray(x, float)), np.sort(np.asarray(y, float))
    n, m = len(x), len(y)
    sxx, syy = _pair_abs_sum(x), _pair_abs_sum(y)
    sxy = _pair_abs_sum(np.sort(np.concatenate([x, y]))) - sxx - syy
    e = 2 * sxy / (n * m) - 2 * sxx / n**2 - 2 * syy / m**2
    return max(e, 0.0)


def epsilon_diagnosis(data: Dataset, case: CaseMetadata, guard_rows: int = 0, min_rows: int = 10) -> Ranking:
    """Per-metric energy two-sample statistic between equal-length pre and post windows."""
    view = SplitView.from_case(data, case, guard_rows)
    v = _values(data)
    pre, post = view.pre(v), view.post(v)
    L = min(len(pre), len(post))
    if L < min_rows:
        raise WindowError(f"epsilon-diagnosis needs windows of at least {min_rows} rows, got {L}")
    pre, post = pre[-L:], post[:L]
    # n*m/(n+m) scaling turns the distance into the usual test statistic
    scores = [energy_statistic(pre[:, j], post[:, j]) * L / 2 for j in range(v.shape[1])]
    return Ranking(zip(data.metric_names, scores))


def _parent_map(graph: CausalGraph) -> dict[str, list[str]]:
    """Parents from a DAG extension of the graph, or its directed edges if none exists."""
    try:
        dag = consistent_extension(graph)
    except StructureError:
        dag = CausalGraph(graph.nodes, [e for e in graph.edges if e.mark.value == "->"])
    return {n: dag.parents(n) for n in dag.nodes}


def circa(data: Dataset, case: CaseMetadata, graph: Optional[CausalGraph] = None,
          cfg: DiscoveryConfig = DiscoveryConfig(), guard_rows: int = 0) -> Ranking:
    """Regression-based hypothesis test: shift of each node's residual given its parents."""
    view = SplitView.from_case(data, case, guard_rows)
    if graph is None:
        graph = pc(data.rows(view.pre_start, view.post_stop), cfg)
    warnings = []
    present = set(data.metric_names)
    absent = sorted(n for n in graph.nodes if n not in present)
    if absent:
        warnings.append(f"graph nodes missing from data skipped: {', '.join(absent)}")
        graph = CausalGraph([n for n in graph.nodes if n in present],
                            [e for e in graph.edges if e.a in present and e.b in present])
    parents = _parent_map(graph)
    v = _values(data)
    pre, post = view.pre(v), view.post(v)
    n_post = len(post)
    scores = {}
    for j, name in enumerate(data.metric_names):
        pa = [data.index(p) for p in parents.get(name, [])]
        design_pre = np.column_stack([np.ones(len(pre))] + [pre[:, i] for i in pa])
        coef, *_ = np.linalg.lstsq(design_pre, pre[:, j], rcond=None)
        r_pre = pre[:, j] - design_pre @ coef
        design_post = np.column_stack([np.ones(n_post)] + [post[:, i] for i in pa])
        r_post = post[:, j] - design_post @ coef
        z = (r_post - r_pre.mean()) / (r_pre.std() + EPS)
        scores[name] = abs(float(z.mean())) * np.sqrt(n_post)
    return Ranking(scores, warnings)


def quantile_levels(col: np.ndarray, levels: int = RCD_LEVELS) -> np.ndarray:
    edges = np.quantile(col, np.linspace(0, 1, levels + 1)[1:-1])
    return np.searchsorted(edges, col, side="right")


def _f_candidates(codes: np.ndarray, f: np.ndarray, metrics: list[int], alpha: float) -> list[int]:
    """Stable PC restricted to edges between the indicator F and the given metrics."""
    adj = list(metrics)
    level = 0
    while level <= RCD_MAX_COND and len(adj) > level:
        frozen = list(adj)
        removed = set()
        for m in frozen:
            others = [o for o in frozen if o != m]
            for cond in combinations(others, level):
                res = g_square_codes(codes[:, m], f, strata_codes(codes, cond), alpha)
                if res.independent:
                    removed.add(m)
                    break
        adj = [m for m in adj if m not in removed]
        level += 1
    return adj


def rcd(data: Dataset, case: CaseMetadata, chunk_size: int = 5, seed: int = 0,
        alpha: float = 0.05, guard_rows: int = 0) -> Ranking:
    """Divide-and-conquer search for metrics whose distribution depends on the failure indicator."""
    if chunk_size < 2:
        raise ConfigError("chunk_size must be at least 2")
    view = SplitView.from_case(data, case, guard_rows)
    v = _values(data)
    pre, post = view.pre(v), view.post(v)
    rows = np.vstack([pre, post])
    if data.kind is Kind.DISCRETE:
        codes = rows.astype(np.int64)
    else:
        codes = np.column_stack([quantile_levels(rows[:, j]) for j in range(rows.shape[1])])
    f = np.concatenate([np.zeros(len(pre), np.int64), np.ones(len(post), np.int64)])
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cand = list(range(v.shape[1]))
    while True:
        order = list(rng.permutation(cand))
        found = []
        for k in range(0, len(order), chunk_size):
            found.extend(_f_candidates(codes, f, sorted(order[k:k + chunk_size]), alpha))
        single_chunk = len(cand) <= chunk_size
        shrunk = len(found) < len(cand)
        cand = sorted(found)
        if single_chunk or not shrunk or not cand:
            break
    marginal = [g_square_codes(codes[:, j], f, strata_codes(codes, ()), alpha) for j in range(v.shape[1])]
    chosen = set(cand)
    order = sorted(range(v.shape[1]),
                   key=lambda j: (j not in chosen, marginal[j].p_value, -marginal[j].statistic,
                                  data.metric_names[j]))
    n = len(order)
    return Ranking((data.metric_names[j], float(n - i)) for i, j in enumerate(order))


def dummy(data: Dataset, seed: int = 0) -> Ranking:
    """Uniformly random order; scores are reciprocal ranks."""
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    perm = rng.permutation(data.n_metrics)
    return Ranking((data.metric_names[j], 1.0 / (i + 1)) for i, j in enumerate(perm))


def graph_rca(discovery_name: str, scorer_name: str, data: Dataset, case: CaseMetadata,
              cfg: DiscoveryConfig = DiscoveryConfig(), seed: int = 0,
              guard_rows: int = 0) -> tuple[Ranking, CausalGraph]:
    """Learn a graph on the observation window, rank it with NSigma evidence; returns both."""
    if scorer_name not in SCORERS:
        raise ConfigError(f"unknown scorer {scorer_name!r}; choose from {list(SCORERS)}")
    method = get_method(discovery_name)
    view = SplitView.from_case(data, case, guard_rows)
    graph = method(data.rows(view.pre_start, view.post_stop), cfg)
    evidence = AnomalyEvidence(dict(zip(data.metric_names, nsigma_scores(data, view).tolist())))
    return score_graph(scorer_name, graph, evidence, seed), graph


def run_graph_rca(discovery_name: str, scorer_name: str, data: Dataset, case: CaseMetadata,
                  cfg: DiscoveryConfig = DiscoveryConfig(), seed: int = 0, guard_rows: int = 0) -> Ranking:
    return graph_rca(discovery_name, scorer_name, data, case, cfg, seed, guard_rows)[0]


SCORER_ALIASES = {"pr": "pagerank", "rw": "random_walk", "dfs": "dfs", "root": "root_nodes"}
SIMPLE_METHODS = ("nsigma", "baro", "epsilon_diagnosis", "circa", "rcd", "dummy")


def method_names() -> list[str]:
    from .discovery import METHODS
    graph = [f"{d}-{s}" for d in METHODS for s in SCORER_ALIASES]
    return list(SIMPLE_METHODS) + graph


def split_method(name: str) -> Optional[tuple[str, str]]:
    """``pc-pr`` -> ("pc", "pagerank"); None for methods that learn no graph."""
    if name in SIMPLE_METHODS or "-" not in name:
        return None
    disc, scorer = name.split("-", 1)
    return disc, SCORER_ALIASES.get(scorer, scorer)


def check_method(name: str) -> None:
    from .discovery import METHODS
    parts = split_method(name)
    if parts is None:
        if name not in SIMPLE_METHODS:
            raise ConfigError(f"unknown RCA method {name!r}")
        return
    disc, scorer = parts
    if disc not in METHODS:
        raise ConfigError(f"unknown discovery method {disc!r} in {name!r}")
    if scorer not in SCORERS:
        raise ConfigError(f"unknown scorer {scorer!r} in {name!r}")


def run_method_with_graph(name: str, data: Dataset, case: CaseMetadata,
                          cfg: DiscoveryConfig = DiscoveryConfig(), seed: int = 0, guard_rows: int = 0,
                          **opts) -> tuple[Ranking, Optional[CausalGraph]]:
    """Dispatch by method name; graph pipelines are named ``<discovery>-<scorer>``, e.g. ``pc-pr``."""
    check_method(name)
    parts = split_method(name)
    if parts is not None:
        return graph_rca(parts[0], parts[1], data, case, cfg, seed, guard_rows)
    if name == "nsigma":
        return nsigma(data, case, guard_rows), None
    if name == "baro":
        return baro(data, case, opts.get("t_f_known", True), guard_rows), None
    if name == "epsilon_diagnosis":
        return epsilon_diagnosis(data, case, guard_rows), None
    if name == "circa":
        return circa(data, case, opts.get("graph"), cfg, guard_rows), None
    if name == "rcd":
        return rcd(data, case, opts.get("chunk_size", 5), seed, cfg.alpha, guard_rows), None
    return dummy(data, seed), None


def run_method(name: str, data: Dataset, case: CaseMetadata, cfg: DiscoveryConfig = DiscoveryConfig(),
               seed: int = 0, guard_rows: int = 0, **opts) -> Ranking:
    return run_method_with_graph(name, data, case, cfg, seed, guard_rows, **opts)[0]
