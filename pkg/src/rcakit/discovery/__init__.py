"""Causal structure learning over metric datasets."""

from typing import Callable

from ..core import CausalGraph, ConfigError, Dataset
from .common import DiscoveryConfig
from .constraint import fci, pc
from .granger import granger
from .lingam import direct_lingam, direct_lingam_fit
from .score import bic_score, dag_to_cpdag, ges

DiscoveryFn = Callable[[Dataset, DiscoveryConfig], CausalGraph]

METHODS: dict[str, DiscoveryFn] = {
    "pc": pc,
    "fci": fci,
    "granger": granger,
    "lingam": direct_lingam,
    "ges": ges,
}


def get_method(name: str) -> DiscoveryFn:
    try:
        return METHODS[name]
    except KeyError:
        raise ConfigError(f"unknown discovery method {name!r}; choose from {sorted(METHODS)}") from None


def discover(name: str, data: Dataset, cfg: DiscoveryConfig = DiscoveryConfig()) -> CausalGraph:
    return get_method(name)(data, cfg)


__all__ = [
    "DiscoveryConfig", "METHODS", "bic_score", "dag_to_cpdag", "direct_lingam", "direct_lingam_fit",
    "discover", "fci", "ges", "get_method", "granger", "pc",
]
