"""Post-hoc analysis of a discovered edit set."""

from .analysis import (MAX_ENUMERATED, RESCUE, History, InteractionGraph, Separation, SubsetTable,
                       WeakResult, canonical_order, discovery_history, enumerate_subsets,
                       interaction_graph, marginal, minimize_weak_edits, separate_edits)
from .oracle import FAILURE, FunctionOracle, Oracle, ProgramOracle, failed
from .report import EDGE_RULE, AnalysisReport, analyze, source_map

__all__ = [
    "MAX_ENUMERATED", "RESCUE", "History", "InteractionGraph", "Separation", "SubsetTable",
    "WeakResult", "canonical_order", "discovery_history", "enumerate_subsets",
    "interaction_graph", "marginal", "minimize_weak_edits", "separate_edits", "FAILURE",
    "FunctionOracle", "Oracle", "ProgramOracle", "failed", "EDGE_RULE", "AnalysisReport",
    "analyze", "source_map",
]
