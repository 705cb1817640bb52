"""Evolutionary search over edit lists applied to a seed program."""

from .edits import (EDIT_KINDS, FRESH_ID_BASE, INST_COPY, INST_DELETE, INST_MOVE, INST_REPLACE,
                    INST_SWAP, OPERAND_REPLACE, ApplyError, Edit, MaterializeError, Materializer,
                    apply_edit, in_scope_values, materialize)
from .fitness import Evaluator, evaluate, evaluate_program
from .search import (GenerationRecord, SearchConfig, SearchError, SearchResult, breed, evolve,
                     read_generation_log, rng_stream)
from .variation import Fitness, Invalid, Variant, crossover, mutate

__all__ = [
    "EDIT_KINDS", "FRESH_ID_BASE", "INST_COPY", "INST_DELETE", "INST_MOVE", "INST_REPLACE",
    "INST_SWAP", "OPERAND_REPLACE", "ApplyError", "Edit", "MaterializeError", "Materializer",
    "apply_edit", "in_scope_values", "materialize", "Evaluator", "evaluate", "evaluate_program",
    "GenerationRecord", "SearchConfig", "SearchError", "SearchResult", "breed", "evolve",
    "read_generation_log", "rng_stream", "Fitness", "Invalid", "Variant", "crossover", "mutate",
]
