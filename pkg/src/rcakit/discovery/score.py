"""Gaussian BIC scoring and greedy score-based search."""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from ..core import CausalGraph, Dataset, Edge, Mark, StructureError, topological_order
from .common import DiscoveryConfig, reattach, split_constant
from .constraint import _pdag_to_graph, meek_rules

LOG_2PI = math.log(2 * math.pi)


def bic_score(data: Dataset, g: CausalGraph, penalty: float = 1.0) -> float:
    """Sum over nodes of -2 log-likelihood of the OLS fit on the parents plus the BIC penalty.

    Lower is better. ``g`` must be a DAG over (a subset of) the dataset's metrics.
    """
    if not g.is_directed():
        raise StructureError("BIC needs a fully directed graph")
    if topological_order(g.nodes, g.directed_edges()) is None:
        raise StructureError("BIC needs an acyclic graph")
    t = data.n_rows
    total = 0.0
    for node in g.nodes:
        y = data.column(node)
        parents = g.parents(node)
        design = np.column_stack([np.ones(t)] + [data.column(p) for p in parents])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        var = max(float(resid @ resid) / t, 1e-300)
        total += t * math.log(var) + t * (1 + LOG_2PI) + penalty * (len(parents) + 1) * math.log(t)
    return total


class LocalBIC:
    """Per-node BIC terms from the data's covariance, cached by parent set."""

    def __init__(self, values: np.ndarray, penalty: float):
        self.t = values.shape[0]
        self.cov = np.cov(values, rowvar=False, bias=True)
        self.penalty = penalty
        self._cache: dict[tuple[int, frozenset], float] = {}

    def __call__(self, v: int, parents: frozenset) -> float:
        key = (v, parents)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        var = self.cov[v, v]
        if parents:
            p = sorted(parents)
            s_pp = self.cov[np.ix_(p, p)]
            s_pv = self.cov[p, v]
            try:
                var = var - s_pv @ np.linalg.solve(s_pp, s_pv)
            except np.linalg.LinAlgError:
                var = var - s_pv @ np.linalg.lstsq(s_pp, s_pv, rcond=None)[0]
        var = max(float(var), 1e-300)
        t = self.t
        score = t * math.log(var) + t * (1 + LOG_2PI) + self.penalty * (len(parents) + 1) * math.log(t)
        self._cache[key] = score
        return score


def _subsets(items: list[int], limit: int):
    for size in range(min(len(items), limit) + 1):
        yield from combinations(items, size)


class _Pdag:
    """Adjacency-matrix PDAG: m[i, j] = m[j, i] = 1 undirected, m[i, j] = 1 alone for i -> j."""

    def __init__(self, m: np.ndarray):
        self.m = m

    def parents(self, y: int) -> set[int]:
        col, row = self.m[:, y], self.m[y, :]
        return set(np.nonzero(col & (row == 0))[0].tolist())

    def undirected_nbrs(self, y: int) -> set[int]:
        return set(np.nonzero(self.m[:, y] & self.m[y, :])[0].tolist())

    def adjacent(self, a: int, b: int) -> bool:
        return bool(self.m[a, b] or self.m[b, a])

    def is_clique(self, nodes) -> bool:
        nodes = list(nodes)
        return all(self.adjacent(a, b) for a, b in combinations(nodes, 2))

    def semi_directed_blocked(self, src: int, dst: int, blocked: set[int]) -> bool:
        """True if every semi-directed path src ~> dst meets ``blocked``."""
        seen = {src}
        stack = [src]
        while stack:
            cur = stack.pop()
            # forward moves: cur -> nxt or cur - nxt
            for nxt in np.nonzero(self.m[cur, :])[0].tolist():
                if nxt == dst:
                    return False
                if nxt in seen or nxt in blocked:
                    continue
                seen.add(nxt)
                stack.append(nxt)
        return True


def _rebuild_cpdag(m: np.ndarray) -> np.ndarray:
    names = [str(i) for i in range(m.shape[0])]
    pdag = _pdag_to_graph(names, m)
    dag = consistent_extension(pdag)
    cp = dag_to_cpdag(dag)
    return cp.adjacency(names).astype(np.int8)


def ges_search(score: LocalBIC, n: int, max_subset: int = 12) -> np.ndarray:
    """Greedy equivalence search: forward Insert then backward Delete operators.

    Returns the CPDAG adjacency matrix. ``max_subset`` bounds the size of the
    operator subsets enumerated per pair.
    """
    m = np.zeros((n, n), dtype=np.int8)
    while True:
        g = _Pdag(m)
        best = None
        for y in range(n):
            pa_y = g.parents(y)
            und_y = g.undirected_nbrs(y)
            for x in range(n):
                if x == y or g.adjacent(x, y):
                    continue
                na = {t for t in und_y if g.adjacent(t, x)}
                t0 = sorted(t for t in und_y if not g.adjacent(t, x))
                for tset in _subsets(t0, max_subset):
                    cond = na | set(tset)
                    if not g.is_clique(cond):
                        continue
                    if not g.semi_directed_blocked(y, x, cond):
                        continue
                    base = frozenset(pa_y | cond)
                    delta = score(y, base | {x}) - score(y, base)
                    key = (delta, x, y, tset)
                    if delta < 0 and (best is None or key < best):
                        best = key
        if best is None:
            break
        _, x, y, tset = best
        m = m.copy()
        m[x, y], m[y, x] = 1, 0
        for t in tset:
            m[t, y], m[y, t] = 1, 0
        m = _rebuild_cpdag(m)
    while True:
        g = _Pdag(m)
        best = None
        for y in range(n):
            pa_y = g.parents(y)
            und_y = g.undirected_nbrs(y)
            for x in sorted(pa_y | und_y):
                na = sorted(t for t in und_y if g.adjacent(t, x))
                for hset in _subsets(na, max_subset):
                    rest = set(na) - set(hset)
                    if not g.is_clique(rest):
                        continue
                    base = frozenset((pa_y | rest) - {x})
                    delta = score(y, base) - score(y, base | {x})
                    key = (delta, x, y, hset)
                    if delta < 0 and (best is None or key < best):
                        best = key
        if best is None:
            break
        _, x, y, hset = best
        m = m.copy()
        m[x, y] = m[y, x] = 0
        for h in hset:
            m[y, h], m[h, y] = 1, 0
            if m[x, h] and m[h, x]:
                m[x, h], m[h, x] = 1, 0
        m = _rebuild_cpdag(m)
    return m


def dag_to_cpdag(g: CausalGraph) -> CausalGraph:
    """Equivalence-class representative: v-structures kept, Meek closure, rest undirected."""
    names = list(g.nodes)
    pos = {n: i for i, n in enumerate(names)}
    n = len(names)
    pa = [set() for _ in range(n)]
    for a, b in g.directed_edges():
        pa[pos[b]].add(pos[a])
    m = np.zeros((n, n), dtype=np.int8)
    for v in range(n):
        for u in pa[v]:
            m[u, v] = m[v, u] = 1
    for v in range(n):
        for a, b in combinations(sorted(pa[v]), 2):
            if not (m[a, b] or m[b, a]):
                m[v, a] = 0
                m[v, b] = 0
    return _pdag_to_graph(names, meek_rules(m))


def ges(data: Dataset, cfg: DiscoveryConfig = DiscoveryConfig()) -> CausalGraph:
    """Greedy equivalence search under the Gaussian BIC, returning a CPDAG."""
    work, _ = split_constant(data)
    names = work.metric_names
    if len(names) < 2:
        return CausalGraph(data.metric_names)
    score = LocalBIC(np.asarray(work.values), cfg.penalty)
    m = ges_search(score, len(names))
    return reattach(_pdag_to_graph(names, m), data)


def consistent_extension(g: CausalGraph) -> CausalGraph:
    """Orient every non-directed edge to obtain a DAG.

    Uses the Dor-Tarsi sink-elimination procedure, visiting candidate sinks in
    lexicographic order. When the partial graph admits no consistent
    extension, remaining edges are oriented greedily along whichever direction
    keeps the graph acyclic.
    """
    nodes = sorted(g.nodes)
    out = {n: set() for n in nodes}      # directed children
    inn = {n: set() for n in nodes}      # directed parents
    und = {n: set() for n in nodes}      # undirected neighbours
    for e in g.edges:
        if e.mark is Mark.DIRECTED:
            out[e.a].add(e.b)
            inn[e.b].add(e.a)
        else:
            und[e.a].add(e.b)
            und[e.b].add(e.a)
    result = set(g.directed_edges())
    alive = set(nodes)
    while alive:
        pick = None
        for x in sorted(alive):
            if out[x] & alive:
                continue
            adj_x = (inn[x] | und[x]) & alive
            ok = True
            for y in und[x] & alive:
                adj_y = (inn[y] | out[y] | und[y]) & alive
                if not (adj_x - {y}) <= adj_y:
                    ok = False
                    break
            if ok:
                pick = x
                break
        if pick is None:
            break
        for y in und[pick] & alive:
            result.add((y, pick))
            und[y].discard(pick)
        alive.discard(pick)
    leftover = sorted({(a, b) if a < b else (b, a) for a in alive for b in und[a] & alive})
    for a, b in leftover:
        for cand in ((a, b), (b, a)):
            if topological_order(g.nodes, result | {cand}) is not None:
                result.add(cand)
                break
        else:
            raise StructureError(f"cannot orient {a} - {b} without a cycle")
    if topological_order(g.nodes, result) is None:
        raise StructureError("directed part of the graph is cyclic")
    return CausalGraph(g.nodes, [Edge(a, b) for a, b in result])
