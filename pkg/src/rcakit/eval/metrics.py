"""Graph accuracy (precision / recall / F1, SHD) and ranking accuracy (AC@k, Avg@k)."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..core import CausalGraph, InputError, Mark, Ranking


class Mode(str, enum.Enum):
    SKELETON = "skeleton"
    DIRECTED = "directed"


@dataclass(frozen=True)
class GraphScore:
    precision: float
    recall: float
    f1: float
    mode: Mode


def _prf(tp: int, n_est: int, n_true: int, mode: Mode) -> GraphScore:
    p = tp / n_est if n_est else 0.0
    r = tp / n_true if n_true else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return GraphScore(p, r, f, mode)


def _same_nodes(est: CausalGraph, truth: CausalGraph) -> None:
    if set(est.nodes) != set(truth.nodes):
        raise InputError("estimated and true graphs have different node sets")


def graph_f1(est: CausalGraph, truth: CausalGraph, mode: Mode | str = Mode.DIRECTED) -> GraphScore:
    """Edge-level precision/recall; in directed mode only correctly oriented directed edges count."""
    mode = Mode(mode)
    _same_nodes(est, truth)
    if mode is Mode.SKELETON:
        e = {x.pair for x in est.edges}
        t = {x.pair for x in truth.edges}
        return _prf(len(e & t), len(e), len(t), mode)
    true_dir = set(truth.directed_edges())
    tp = sum(1 for x in est.edges if x.mark is Mark.DIRECTED and (x.a, x.b) in true_dir)
    return _prf(tp, len(est.edges), len(truth.edges), mode)


def shd(est: CausalGraph, truth: CausalGraph) -> int:
    """Missing plus extra plus differently oriented adjacencies."""
    _same_nodes(est, truth)
    e = {x.pair: x for x in est.edges}
    t = {x.pair: x for x in truth.edges}
    total = 0
    for pair in e.keys() | t.keys():
        a, b = e.get(pair), t.get(pair)
        if a is None or b is None:
            total += 1
        elif (a.a, a.b, a.mark) != (b.a, b.b, b.mark):
            total += 1
    return total


def _top_hits(ranking: Ranking | Sequence[str], roots: frozenset, k: int) -> float:
    names = ranking.names if isinstance(ranking, Ranking) else list(ranking)
    if not roots:
        raise InputError("each case needs a nonempty root-cause set")
    hits = sum(1 for n in names[:k] if n in roots)
    return hits / min(k, len(roots))


def ac_at_k(cases: Iterable[tuple[Ranking | Sequence[str] | None, Iterable[str]]], k: int) -> float:
    """Mean top-k hit rate. A case whose ranking is None (e.g. a timeout) counts as a miss."""
    if k < 1:
        raise InputError("k must be at least 1")
    vals = []
    for ranking, roots in cases:
        roots = frozenset(roots)
        if not roots:
            raise InputError("each case needs a nonempty root-cause set")
        vals.append(0.0 if ranking is None else _top_hits(ranking, roots, k))
    if not vals:
        raise InputError("no cases to score")
    return sum(vals) / len(vals)


def avg_at_k(cases, k: int) -> float:
    cases = list(cases)
    return sum(ac_at_k(cases, j) for j in range(1, k + 1)) / k
