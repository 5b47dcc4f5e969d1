"""Configuration and helpers shared by the discovery algorithms."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ..citest import (
    VAR_FLOOR,
    fisher_z_from_r,
    g_square_codes,
    partial_corr_from_cov,
    strata_codes,
)
from ..core import CausalGraph, ConfigError, Dataset, DegeneracyError, Kind

#: default conditioning-set cap applied to datasets wider than this
WIDE_DATASET = 50


@dataclass(frozen=True)
class DiscoveryConfig:
    alpha: float = 0.05
    max_cond_size: Optional[int] = None
    max_lag: int = 5
    penalty: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.max_cond_size is not None and self.max_cond_size < 0:
            raise ConfigError("max_cond_size must be nonnegative")
        if self.max_lag < 1:
            raise ConfigError(f"max_lag must be positive, got {self.max_lag}")
        if not self.penalty > 0:
            raise ConfigError("penalty must be positive")

    def cond_cap(self, n_metrics: int) -> Optional[int]:
        if self.max_cond_size is not None:
            return self.max_cond_size
        return 3 if n_metrics > WIDE_DATASET else None

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "max_cond_size": self.max_cond_size,
            "max_lag": self.max_lag,
            "penalty": self.penalty,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscoveryConfig":
        unknown = set(d) - {"alpha", "max_cond_size", "max_lag", "penalty"}
        if unknown:
            raise ConfigError(f"unknown discovery settings: {sorted(unknown)}")
        return replace(cls(), **d)


def split_constant(data: Dataset) -> tuple[Dataset, list[str]]:
    """Separate flat columns, which discovery leaves as isolated nodes."""
    var = data.values.var(axis=0)
    keep = [n for n, v in zip(data.metric_names, var) if v >= VAR_FLOOR]
    dropped = [n for n, v in zip(data.metric_names, var) if v < VAR_FLOOR]
    if len(keep) == data.n_metrics:
        return data, []
    return data.subset(keep), dropped


def reattach(graph: CausalGraph, data: Dataset) -> CausalGraph:
    """Restore the dataset's node order, adding dropped columns as isolated nodes."""
    return CausalGraph(data.metric_names, graph.edges)


class CITester:
    """Caches CI decisions over integer column indices of one dataset.

    Fisher-z is used for continuous data, G-square for discrete data.
    """

    def __init__(self, values: np.ndarray, discrete: bool, alpha: float):
        self.values = values
        self.n = values.shape[0]
        self.discrete = discrete
        self.alpha = alpha
        self._cache: dict[tuple, float] = {}
        self.calls = 0
        if discrete:
            self._codes = values.astype(np.int64)
        else:
            self._cov = np.atleast_2d(np.cov(values, rowvar=False)).tolist()

    @classmethod
    def for_dataset(cls, data: Dataset, alpha: float) -> "CITester":
        return cls(np.asarray(data.values), data.kind is Kind.DISCRETE, alpha)

    def pvalue(self, i: int, j: int, cond: Sequence[int]) -> float:
        if j < i:
            i, j = j, i
        key = (i, j, tuple(sorted(cond)))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        self.calls += 1
        if self.discrete:
            res = g_square_codes(self._codes[:, i], self._codes[:, j],
                                 strata_codes(self._codes, key[2]), self.alpha)
            p = res.p_value
        else:
            try:
                r = partial_corr_from_cov(self._cov, i, j, key[2])
            except DegeneracyError:
                # collinear conditioning set: treat as no evidence of dependence
                p = 1.0
            else:
                p = fisher_z_from_r(r, self.n, len(key[2]), self.alpha).p_value
        self._cache[key] = p
        return p

    def independent(self, i: int, j: int, cond: Sequence[int]) -> bool:
        return self.pvalue(i, j, cond) > self.alpha
