"""Graph scorers: turn a causal graph plus anomaly evidence into a root-cause ranking.

Walks run on the edge-reversed graph so that mass flows from anomalous effects
back to their causes. Undirected and bidirected edges are traversed both ways.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import CausalGraph, ConfigError, InputError, Mark, MetricReferenceError, Ranking

WALK_EPS = 1e-4
PR_TOL = 1e-10
PR_MAX_ITER = 1000


@dataclass(frozen=True)
class AnomalyEvidence:
    scores: Mapping[str, float] = field(default_factory=dict)
    frontend: Optional[str] = None

    def __post_init__(self):
        clean = {}
        for k, v in dict(self.scores).items():
            v = float(v)
            if not np.isfinite(v) or v < 0:
                raise InputError(f"anomaly score for {k!r} must be finite and nonnegative")
            clean[k] = v
        object.__setattr__(self, "scores", clean)

    def check(self, g: CausalGraph) -> None:
        nodes = set(g.nodes)
        missing = [k for k in self.scores if k not in nodes]
        if missing:
            raise MetricReferenceError(f"evidence names metrics not in the graph: {missing[:5]}")
        if self.frontend is not None and self.frontend not in nodes:
            raise MetricReferenceError(f"frontend {self.frontend!r} not in the graph")

    def get(self, node: str) -> float:
        return self.scores.get(node, 0.0)


def _reverse_adjacency(g: CausalGraph) -> np.ndarray:
    """a[i, j] = 1 when a walker at node i may step to node j (effect -> cause)."""
    pos = {n: i for i, n in enumerate(g.nodes)}
    a = np.zeros((len(pos), len(pos)))
    for e in g.edges:
        i, j = pos[e.a], pos[e.b]
        a[j, i] = 1.0
        if e.mark is not Mark.DIRECTED:
            a[i, j] = 1.0
    return a


def pagerank(g: CausalGraph, damping: float = 0.85, personalization: Optional[AnomalyEvidence] = None) -> Ranking:
    if not 0 < damping < 1:
        raise ConfigError(f"damping must lie in (0, 1), got {damping}")
    nodes = g.nodes
    n = len(nodes)
    if n == 0:
        raise InputError("pagerank needs a nonempty graph")
    v = np.full(n, 1.0 / n)
    if personalization is not None:
        personalization.check(g)
        w = np.array([personalization.get(x) for x in nodes])
        if w.sum() > 0:
            v = w / w.sum()
    a = _reverse_adjacency(g)
    out = a.sum(axis=1)
    dangling = out == 0
    # column-stochastic transition over the non-dangling rows
    trans = np.divide(a, out[:, None], out=np.zeros_like(a), where=~dangling[:, None]).T
    p = np.full(n, 1.0 / n)
    for _ in range(PR_MAX_ITER):
        nxt = damping * (trans @ p + p[dangling].sum() * v) + (1 - damping) * v
        nxt /= nxt.sum()
        done = np.abs(nxt - p).sum() < PR_TOL
        p = nxt
        if done:
            break
    return Ranking(zip(nodes, p.tolist()))


def random_walk(g: CausalGraph, evidence: AnomalyEvidence, steps: int = 10000,
                restart_prob: float = 0.0, seed: int = 0) -> Ranking:
    """Visit frequencies of a biased walk that prefers anomalous neighbours."""
    if steps < 1:
        raise ConfigError("random walk needs at least one step")
    if not 0 <= restart_prob < 1:
        raise ConfigError("restart_prob must lie in [0, 1)")
    evidence.check(g)
    nodes = g.nodes
    if not nodes:
        raise InputError("random walk needs a nonempty graph")
    pos = {n: i for i, n in enumerate(nodes)}
    if evidence.frontend is not None:
        start = pos[evidence.frontend]
    else:
        start = pos[min(nodes, key=lambda x: (-evidence.get(x), x))]
    a = _reverse_adjacency(g)
    score = np.array([evidence.get(x) for x in nodes])
    weights = a * (WALK_EPS + score)[None, :]
    cum = []
    for i in range(len(nodes)):
        row = weights[i]
        nbrs = np.nonzero(row)[0]
        cum.append((nbrs, np.cumsum(row[nbrs]) / row[nbrs].sum() if len(nbrs) else None))
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    draws = rng.random((steps, 2))
    visits = np.zeros(len(nodes))
    cur = start
    for t in range(steps):
        if restart_prob and draws[t, 0] < restart_prob:
            cur = start
        else:
            nbrs, c = cum[cur]
            if c is not None:
                cur = int(nbrs[min(int(np.searchsorted(c, draws[t, 1], side="right")), len(nbrs) - 1)])
            # no outgoing move: the walker stays put
        visits[cur] += 1
    return Ranking(zip(nodes, (visits / steps).tolist()))


def _tiered(tiers: list[list[str]], evidence: AnomalyEvidence, n: int) -> Ranking:
    """Ranking whose order is tier by tier, each tier by descending evidence."""
    order = []
    for tier in tiers:
        order.extend(sorted(tier, key=lambda x: (-evidence.get(x), x)))
    return Ranking((name, float(n - i)) for i, name in enumerate(order))


def dfs_roots(g: CausalGraph, evidence: AnomalyEvidence, threshold: float = 3.0) -> Ranking:
    """Roots of the abnormal subgraph first, then other abnormal nodes, then normal ones."""
    evidence.check(g)
    nodes = g.nodes
    abnormal = {x for x in nodes if evidence.get(x) > threshold}
    if not abnormal:
        return _tiered([list(nodes)], evidence, len(nodes))
    roots = [x for x in abnormal if not any(p in abnormal for p in g.parents(x))]
    rest = [x for x in abnormal if x not in roots]
    normal = [x for x in nodes if x not in abnormal]
    return _tiered([roots, rest, normal], evidence, len(nodes))


def root_nodes(g: CausalGraph, evidence: Optional[AnomalyEvidence] = None) -> Ranking:
    """Nodes without directed parents first; falls back to pure score order when none exist."""
    evidence = evidence or AnomalyEvidence()
    evidence.check(g)
    nodes = g.nodes
    has_parent = {b for _, b in g.directed_edges()}
    roots = [x for x in nodes if x not in has_parent]
    if not roots:
        return _tiered([list(nodes)], evidence, len(nodes))
    return _tiered([roots, [x for x in nodes if x in has_parent]], evidence, len(nodes))


SCORERS = ("pagerank", "random_walk", "dfs", "root_nodes")


def score_graph(name: str, g: CausalGraph, evidence: AnomalyEvidence, seed: int = 0) -> Ranking:
    if name == "pagerank":
        # structural score only; evidence steers the other three scorers
        evidence.check(g)
        return pagerank(g)
    if name == "random_walk":
        return random_walk(g, evidence, seed=seed)
    if name == "dfs":
        return dfs_roots(g, evidence)
    if name == "root_nodes":
        return root_nodes(g, evidence)
    raise ConfigError(f"unknown scorer {name!r}; choose from {list(SCORERS)}")
