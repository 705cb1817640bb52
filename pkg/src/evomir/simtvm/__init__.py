"""Deterministic SIMT virtual machine with a per-opcode cycle cost model."""

from .vm import (DEFAULT_BUDGET, DEFAULT_COST_MODEL, CostModel, ExecutionResult, Fault,
                 LaunchConfig, default_costs, format_trace, instruction_mix, launch,
                 post_dominators)

__all__ = [
    "DEFAULT_BUDGET", "DEFAULT_COST_MODEL", "CostModel", "ExecutionResult", "Fault",
    "LaunchConfig", "default_costs", "format_trace", "instruction_mix", "launch",
    "post_dominators",
]
