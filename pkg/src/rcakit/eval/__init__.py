"""Accuracy metrics, BIC tuning and the benchmark runner."""

from .metrics import GraphScore, Mode, ac_at_k, avg_at_k, graph_f1, shd
from .suite import CaseRecord, EvalReport, ReportRow, SuiteConfig, derive_seed, run_suite, splitmix64
from .tuning import tune_bic

__all__ = [
    "CaseRecord", "EvalReport", "GraphScore", "Mode", "ReportRow", "SuiteConfig", "ac_at_k", "avg_at_k",
    "derive_seed", "graph_f1", "run_suite", "shd", "splitmix64", "tune_bic",
]
