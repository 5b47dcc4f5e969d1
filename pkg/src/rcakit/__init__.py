"""Causal discovery and root-cause analysis for microservice metrics."""

from .core import (
    CaseMetadata,
    CausalGraph,
    Dataset,
    Edge,
    FaultType,
    Kind,
    Mark,
    RCAError,
    Ranking,
)

__version__ = "0.1.0"

__all__ = [
    "CaseMetadata", "CausalGraph", "Dataset", "Edge", "FaultType", "Kind", "Mark", "RCAError", "Ranking",
]
