"""Pairwise Granger causality via restricted/full autoregression F-tests."""

from __future__ import annotations

import logging

import numpy as np
from scipy import special

from ..core import CausalGraph, ConfigError, Dataset, Edge, Mark, SampleSizeError
from .common import DiscoveryConfig, reattach, split_constant

log = logging.getLogger(__name__)


def lag_matrix(x: np.ndarray, lags: int) -> np.ndarray:
    """Columns x[t-1], ..., x[t-lags] for t = lags .. len(x)-1."""
    n = len(x)
    return np.column_stack([x[lags - k:n - k] for k in range(1, lags + 1)])


def granger_test(x: np.ndarray, y: np.ndarray, lags: int) -> tuple[float, float]:
    """F statistic and p-value for "x Granger-causes y" with ``lags`` lags.

    Raises ``np.linalg.LinAlgError`` when the full design is rank deficient.
    """
    n = len(y) - lags
    target = y[lags:]
    ones = np.ones((n, 1))
    restricted = np.hstack([ones, lag_matrix(y, lags)])
    full = np.hstack([restricted, lag_matrix(x, lags)])
    if np.linalg.matrix_rank(full) < full.shape[1]:
        raise np.linalg.LinAlgError("rank-deficient Granger regression")
    rss_r = _rss(restricted, target)
    rss_f = _rss(full, target)
    dof = n - full.shape[1]
    if rss_f <= 0:
        return np.inf, 0.0
    f = ((rss_r - rss_f) / lags) / (rss_f / dof)
    return float(f), float(special.fdtrc(lags, dof, f))


def _rss(design: np.ndarray, target: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    return float(resid @ resid)


def granger(data: Dataset, cfg: DiscoveryConfig = DiscoveryConfig()) -> CausalGraph:
    """Edge x -> y whenever past x improves the prediction of y at level alpha.

    Mutual Granger causality is reported as a bidirected edge.
    """
    lags = cfg.max_lag
    if lags < 1:
        raise ConfigError("max_lag must be positive")
    if data.n_metrics < 2:
        return CausalGraph(data.metric_names)
    if data.n_rows < 2 * lags + 10:
        raise SampleSizeError(f"Granger with {lags} lags needs at least {2 * lags + 10} rows")
    work, _ = split_constant(data)
    names = work.metric_names
    values = np.asarray(work.values)
    n_rows = values.shape[0]
    m = len(names)
    # restricted fits depend only on the target, so they are shared across causes
    ones = np.ones((n_rows - lags, 1))
    own = [np.hstack([ones, lag_matrix(values[:, j], lags)]) for j in range(m)]
    own_rss = [_rss(own[j], values[lags:, j]) for j in range(m)]
    lagged = [lag_matrix(values[:, i], lags) for i in range(m)]
    dof = n_rows - lags - (2 * lags + 1)
    found = set()
    skipped = []
    for j in range(m):
        target = values[lags:, j]
        for i in range(m):
            if i == j:
                continue
            full = np.hstack([own[j], lagged[i]])
            coef, _, rank, _ = np.linalg.lstsq(full, target, rcond=None)
            if rank < full.shape[1]:
                skipped.append((names[i], names[j]))
                continue
            resid = target - full @ coef
            rss_f = float(resid @ resid)
            if rss_f <= 0:
                p = 0.0
            else:
                f = ((own_rss[j] - rss_f) / lags) / (rss_f / dof)
                p = float(special.fdtrc(lags, dof, f))
            if p < cfg.alpha:
                found.add((i, j))
    if skipped:
        log.info("granger skipped %d rank-deficient pairs", len(skipped))
    edges = []
    for i, j in sorted(found):
        if (j, i) in found:
            if i < j:
                edges.append(Edge.make(names[i], names[j], Mark.BIDIRECTED))
        else:
            edges.append(Edge(names[i], names[j]))
    return reattach(CausalGraph(names, edges), data)
