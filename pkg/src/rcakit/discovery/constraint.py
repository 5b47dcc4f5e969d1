"""Constraint-based discovery: stable PC and FCI."""

from __future__ import annotations

from collections import deque
from itertools import combinations
from typing import Optional

import numpy as np

from ..core import CausalGraph, Dataset, Edge, Mark, SampleSizeError
from .common import CITester, DiscoveryConfig, reattach, split_constant

Sepsets = dict[tuple[int, int], tuple[int, ...]]


def _key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def learn_skeleton(tester: CITester, n: int, max_cond: Optional[int]) -> tuple[list[set[int]], Sepsets]:
    """Order-independent skeleton search.

    Adjacencies are frozen at the start of each conditioning level, so the
    result does not depend on the order in which edges are visited.
    """
    adj = [set(range(n)) - {i} for i in range(n)]
    sepsets: Sepsets = {}
    level = 0
    while True:
        if max_cond is not None and level > max_cond:
            break
        frozen = [sorted(a) for a in adj]
        if all(len(a) - 1 < level for a in frozen):
            break
        if level + 3 >= tester.n:
            raise SampleSizeError(
                f"{tester.n} rows cannot support conditioning sets of size {level}"
            )
        removals = []
        for i in range(n):
            for j in frozen[i]:
                if j < i and i in frozen[j]:
                    # pair already handled from the other side
                    continue
                found = None
                for base, other in ((i, j), (j, i)):
                    candidates = [k for k in frozen[base] if k != other]
                    if len(candidates) < level:
                        continue
                    for cond in combinations(candidates, level):
                        if tester.independent(i, j, cond):
                            found = cond
                            break
                    if found is not None:
                        break
                if found is not None:
                    removals.append((i, j, found))
        for i, j, cond in removals:
            adj[i].discard(j)
            adj[j].discard(i)
            sepsets[_key(i, j)] = tuple(cond)
        level += 1
    return adj, sepsets


# --- PC orientation -------------------------------------------------------

def _orient_colliders_pdag(adj: list[set[int]], sepsets: Sepsets) -> np.ndarray:
    n = len(adj)
    g = np.zeros((n, n), dtype=np.int8)
    for i in range(n):
        for j in adj[i]:
            g[i, j] = 1
    for k in range(n):
        nbrs = sorted(adj[k])
        for i, j in combinations(nbrs, 2):
            if j in adj[i]:
                continue
            if k in sepsets.get(_key(i, j), ()):
                continue
            # keep the first orientation if an earlier collider disagrees
            if g[k, i] and g[i, k]:
                g[k, i] = 0
            if g[k, j] and g[j, k]:
                g[k, j] = 0
    return g


def _undirected(g, i, j):
    return g[i, j] and g[j, i]


def _directed(g, i, j):
    return g[i, j] and not g[j, i]


def _adjacent(g, i, j):
    return g[i, j] or g[j, i]


def meek_rules(g: np.ndarray) -> np.ndarray:
    """Apply Meek's rules R1-R4 to a PDAG matrix (g[i,j]=g[j,i]=1 undirected) until closure."""
    g = g.copy()
    n = g.shape[0]
    changed = True
    while changed:
        changed = False
        for i in range(n):
            for j in range(n):
                if i == j or not _undirected(g, i, j):
                    continue
                orient = False
                # R1: k -> i - j, k and j not adjacent
                for k in range(n):
                    if _directed(g, k, i) and not _adjacent(g, k, j):
                        orient = True
                        break
                # R2: i -> k -> j
                if not orient:
                    for k in range(n):
                        if _directed(g, i, k) and _directed(g, k, j):
                            orient = True
                            break
                # R3: i - k -> j, i - l -> j, k and l not adjacent
                if not orient:
                    ks = [k for k in range(n) if _undirected(g, i, k) and _directed(g, k, j)]
                    for k, l in combinations(ks, 2):
                        if not _adjacent(g, k, l):
                            orient = True
                            break
                # R4: i - k -> l -> j with k, j not adjacent and i adjacent to l
                if not orient:
                    for k in range(n):
                        if not _undirected(g, i, k) or _adjacent(g, k, j):
                            continue
                        for l in range(n):
                            if _directed(g, k, l) and _directed(g, l, j) and _adjacent(g, i, l):
                                orient = True
                                break
                        if orient:
                            break
                if orient:
                    g[j, i] = 0
                    changed = True
    return g


def _pdag_to_graph(names, g: np.ndarray) -> CausalGraph:
    edges = []
    n = g.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if g[i, j] and g[j, i]:
                edges.append(Edge.make(names[i], names[j], Mark.UNDIRECTED))
            elif g[i, j]:
                edges.append(Edge(names[i], names[j]))
            elif g[j, i]:
                edges.append(Edge(names[j], names[i]))
    return CausalGraph(names, edges)


def _check(data: Dataset):
    if data.n_metrics < 2:
        return
    if data.n_rows < 4:
        raise SampleSizeError(f"too few rows ({data.n_rows}) for CI testing")


def pc(data: Dataset, cfg: DiscoveryConfig = DiscoveryConfig()) -> CausalGraph:
    """Stable PC returning a CPDAG (directed plus undirected edges)."""
    _check(data)
    work, _ = split_constant(data)
    names = work.metric_names
    if len(names) < 2:
        return CausalGraph(data.metric_names)
    tester = CITester.for_dataset(work, cfg.alpha)
    adj, sepsets = learn_skeleton(tester, len(names), cfg.cond_cap(data.n_metrics))
    g = meek_rules(_orient_colliders_pdag(adj, sepsets))
    return reattach(_pdag_to_graph(names, g), data)


# --- FCI ------------------------------------------------------------------

# endpoint marks; m[i, j] is the mark at j's end of the edge i *-* j
NONE, CIRCLE, ARROW, TAIL = 0, 1, 2, 3


def _pag_from_skeleton(adj: list[set[int]]) -> np.ndarray:
    n = len(adj)
    m = np.zeros((n, n), dtype=np.int8)
    for i in range(n):
        for j in adj[i]:
            m[i, j] = CIRCLE
    return m


def _orient_colliders_pag(m: np.ndarray, sepsets: Sepsets) -> None:
    n = m.shape[0]
    for k in range(n):
        nbrs = [i for i in range(n) if m[i, k]]
        for i, j in combinations(nbrs, 2):
            if m[i, j]:
                continue
            if k in sepsets.get(_key(i, j), ()):
                continue
            m[i, k] = ARROW
            m[j, k] = ARROW


def possible_dsep(m: np.ndarray, x: int) -> set[int]:
    """Nodes reachable from x along paths whose inner nodes are colliders or triangles."""
    n = m.shape[0]
    out: set[int] = set()
    seen = set()
    queue = deque()
    for y in range(n):
        if m[x, y]:
            queue.append((x, y))
            seen.add((x, y))
            out.add(y)
    while queue:
        prev, cur = queue.popleft()
        for nxt in range(n):
            if nxt == prev or nxt == x or not m[cur, nxt]:
                continue
            collider = m[prev, cur] == ARROW and m[nxt, cur] == ARROW
            triangle = bool(m[prev, nxt])
            if (collider or triangle) and (cur, nxt) not in seen:
                seen.add((cur, nxt))
                out.add(nxt)
                queue.append((cur, nxt))
    out.discard(x)
    return out


def _pds_prune(m, adj, sepsets, tester, max_cond):
    n = m.shape[0]
    pds = [possible_dsep(m, x) for x in range(n)]
    cap = max_cond if max_cond is not None else 3
    removals = []
    for i in range(n):
        for j in sorted(adj[i]):
            if j < i:
                continue
            found = None
            for base, other in ((i, j), (j, i)):
                pool = sorted(pds[base] - {other})
                # sets already covered by the adjacency search are skipped
                covered = adj[base] - {other}
                for size in range(1, min(cap, len(pool)) + 1):
                    if tester.n <= size + 3:
                        break
                    for cond in combinations(pool, size):
                        if set(cond) <= covered:
                            continue
                        if tester.independent(i, j, cond):
                            found = cond
                            break
                    if found is not None:
                        break
                if found is not None:
                    break
            if found is not None:
                removals.append((i, j, found))
    for i, j, cond in removals:
        adj[i].discard(j)
        adj[j].discard(i)
        sepsets[_key(i, j)] = tuple(cond)
    return bool(removals)


def _rule1(m, a, b, c):
    # a *-> b o-* c, a and c not adjacent  =>  b -> c
    if m[a, b] == ARROW and m[c, b] == CIRCLE and m[b, c] and not m[a, c]:
        m[c, b] = TAIL
        m[b, c] = ARROW
        return True
    return False


def _rule2(m, a, b, c):
    # a -> b *-> c or a *-> b -> c, with a *-o c  =>  a *-> c
    if m[a, c] != CIRCLE:
        return False
    first = m[a, b] == ARROW and m[b, a] == TAIL and m[b, c] == ARROW
    second = m[a, b] == ARROW and m[b, c] == ARROW and m[c, b] == TAIL
    if first or second:
        m[a, c] = ARROW
        return True
    return False


def _rule3(m, n):
    changed = False
    for b in range(n):
        for d in range(n):
            if d == b or m[d, b] != CIRCLE:
                continue
            into_b = [x for x in range(n) if x not in (b, d) and m[x, b] == ARROW]
            for a, c in combinations(into_b, 2):
                if m[a, c]:
                    continue
                if m[a, d] == CIRCLE and m[c, d] == CIRCLE:
                    m[d, b] = ARROW
                    changed = True
                    break
    return changed


def _rule4(m, n, sepsets):
    """Discriminating-path rule."""
    changed = False
    for b in range(n):
        for c in range(n):
            if b == c or m[c, b] != CIRCLE or m[b, c] == NONE:
                continue
            # paths <d, ..., a, b, c>: every inner node before b is a collider and parent of c
            for a in range(n):
                if a in (b, c) or m[a, b] != ARROW or m[b, a] != ARROW or not m[a, c]:
                    continue
                if not (m[a, c] == ARROW and m[c, a] == TAIL):
                    continue
                found = _discriminating_start(m, n, a, b, c)
                if found is None:
                    continue
                d, last = found
                if b in sepsets.get(_key(d, c), ()):
                    m[c, b] = TAIL
                    m[b, c] = ARROW
                else:
                    m[a, b] = ARROW
                    m[b, a] = ARROW
                    m[c, b] = ARROW
                    m[b, c] = ARROW
                changed = True
                break
    return changed


def _discriminating_start(m, n, a, b, c):
    # breadth-first search backwards from a through colliders that are parents of c
    queue = deque([(a, b)])
    visited = {a, b, c}
    while queue:
        cur, nxt = queue.popleft()
        for d in range(n):
            if d in visited or m[d, cur] != ARROW:
                continue
            if not m[d, c]:
                return d, cur
            # d continues the path only as a collider that is a parent of c
            if m[cur, d] == ARROW and m[d, c] == ARROW and m[c, d] == TAIL:
                visited.add(d)
                queue.append((d, cur))
    return None


def orient_pag(m: np.ndarray, sepsets: Sepsets) -> None:
    n = m.shape[0]
    changed = True
    while changed:
        changed = False
        for b in range(n):
            for a in range(n):
                if a == b or not m[a, b]:
                    continue
                for c in range(n):
                    if c in (a, b) or not m[b, c]:
                        continue
                    changed |= _rule1(m, a, b, c)
                    changed |= _rule2(m, a, b, c)
        changed |= _rule3(m, n)
        changed |= _rule4(m, n, sepsets)


def _pag_to_graph(names, m: np.ndarray) -> CausalGraph:
    edges = []
    n = m.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if not m[i, j]:
                continue
            at_j, at_i = m[i, j], m[j, i]
            if at_i == ARROW and at_j == ARROW:
                edges.append(Edge.make(names[i], names[j], Mark.BIDIRECTED))
            elif at_i in (TAIL, CIRCLE) and at_j == ARROW:
                # i o-> j: j is not an ancestor of i
                edges.append(Edge(names[i], names[j]))
            elif at_j in (TAIL, CIRCLE) and at_i == ARROW:
                edges.append(Edge(names[j], names[i]))
            else:
                edges.append(Edge.make(names[i], names[j], Mark.UNDIRECTED))
    return CausalGraph(names, edges)


def fci_pag(data: Dataset, cfg: DiscoveryConfig = DiscoveryConfig()) -> tuple[tuple[str, ...], np.ndarray]:
    """Run FCI and return the raw endpoint-mark matrix over the non-constant columns."""
    _check(data)
    work, _ = split_constant(data)
    names = work.metric_names
    n = len(names)
    if n < 2:
        return names, np.zeros((n, n), dtype=np.int8)
    tester = CITester.for_dataset(work, cfg.alpha)
    cap = cfg.cond_cap(data.n_metrics)
    adj, sepsets = learn_skeleton(tester, n, cap)
    m = _pag_from_skeleton(adj)
    _orient_colliders_pag(m, sepsets)
    _pds_prune(m, adj, sepsets, tester, cap)
    # marks are re-derived from scratch on the pruned skeleton
    m = _pag_from_skeleton(adj)
    _orient_colliders_pag(m, sepsets)
    orient_pag(m, sepsets)
    return names, m


def fci(data: Dataset, cfg: DiscoveryConfig = DiscoveryConfig()) -> CausalGraph:
    """FCI with R1-R4; circle endpoints collapse to undirected edges."""
    names, m = fci_pag(data, cfg)
    if len(names) < 2:
        return CausalGraph(data.metric_names)
    return reattach(_pag_to_graph(names, m), data)
