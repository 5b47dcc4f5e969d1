"""DirectLiNGAM: causal ordering by residual independence, then OLS pruning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import CausalGraph, Dataset, Edge, InputError, Kind, SampleSizeError
from .common import reattach, split_constant

PRUNE_TAU = 0.05


@dataclass(frozen=True)
class LingamFit:
    order: tuple[str, ...]
    # coef[i, j]: weight of order[i] in the regression of order[j] on its predecessors
    coef: np.ndarray
    graph: CausalGraph


def _standardize(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else v - v.mean()


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def dependence(r: np.ndarray, x: np.ndarray) -> float:
    """Nonlinear dependence proxy |corr(tanh r, x)| + |corr(r, tanh x)| on standardized inputs."""
    r, x = _standardize(r), _standardize(x)
    return abs(_corr(np.tanh(r), x)) + abs(_corr(r, np.tanh(x)))


def residual(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Residual of the simple OLS regression of y on x (both centred)."""
    xc, yc = x - x.mean(), y - y.mean()
    vx = float(xc @ xc)
    if vx == 0:
        return yc
    return yc - (float(xc @ yc) / vx) * xc


def exogeneity_score(values: np.ndarray, j: int, rest: list[int]) -> float:
    """Total dependence between candidate j and the residuals of the others regressed on it."""
    xj = values[:, j]
    return sum(dependence(residual(values[:, i], xj), xj) for i in rest)


def causal_order(values: np.ndarray) -> list[int]:
    work = values - values.mean(axis=0)
    remaining = list(range(values.shape[1]))
    order = []
    while remaining:
        if len(remaining) == 1:
            order.append(remaining.pop())
            break
        scores = [exogeneity_score(work, j, [i for i in remaining if i != j]) for j in remaining]
        best = remaining[int(np.argmin(scores))]
        order.append(best)
        remaining.remove(best)
        xb = work[:, best]
        for i in remaining:
            work[:, i] = residual(work[:, i], xb)
    return order


def prune(values: np.ndarray, order: list[int], tau: float = PRUNE_TAU) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """OLS of each variable on its predecessors; keep i -> j when |b| exceeds tau in std units."""
    m = len(order)
    coef = np.zeros((m, m))
    edges = []
    sd = values.std(axis=0)
    for pos in range(1, m):
        j = order[pos]
        preds = order[:pos]
        design = np.column_stack([np.ones(values.shape[0])] + [values[:, i] for i in preds])
        b, *_ = np.linalg.lstsq(design, values[:, j], rcond=None)
        for k, i in enumerate(preds):
            coef[order.index(i), pos] = b[k + 1]
            if sd[j] > 0 and abs(b[k + 1]) * sd[i] / sd[j] > tau:
                edges.append((i, j))
    return coef, edges


def direct_lingam_fit(data: Dataset, tau: float = PRUNE_TAU) -> LingamFit:
    if data.kind is Kind.DISCRETE:
        raise InputError("DirectLiNGAM needs continuous data")
    if data.n_rows < data.n_metrics + 10:
        raise SampleSizeError(f"DirectLiNGAM needs at least {data.n_metrics + 10} rows")
    work, _ = split_constant(data)
    names = work.metric_names
    values = np.asarray(work.values, dtype=float)
    if len(names) < 2:
        return LingamFit(tuple(names), np.zeros((len(names), len(names))), CausalGraph(data.metric_names))
    order = causal_order(values)
    coef, edges = prune(values, order, tau)
    graph = CausalGraph(names, [Edge(names[i], names[j]) for i, j in edges])
    return LingamFit(tuple(names[i] for i in order), coef, reattach(graph, data))


def direct_lingam(data: Dataset, cfg=None) -> CausalGraph:
    """Graph-only wrapper so LiNGAM fits the common discovery signature."""
    return direct_lingam_fit(data).graph
