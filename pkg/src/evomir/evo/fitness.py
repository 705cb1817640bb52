"""Test-validated fitness of variants."""

from __future__ import annotations

import threading
from dataclasses import replace
from typing import Optional

from ..bench.suites import TestSuite, run_case
from ..mir.types import Program
from ..simtvm import DEFAULT_BUDGET, DEFAULT_COST_MODEL, CostModel, LaunchConfig
from .edits import MaterializeError, materialize
from .variation import Fitness, Invalid, Variant


def _with_launch(case, launch_config: Optional[LaunchConfig]):
    if launch_config is None:
        return case
    return replace(case, launch=launch_config)


def evaluate_program(program: Program, suite: TestSuite, launch_config: Optional[LaunchConfig] = None,
                     cost_model: CostModel = DEFAULT_COST_MODEL, cycle_budget: int = DEFAULT_BUDGET,
                     partition: str = "fitness"):
    """Fitness over every test of ``partition``, or Invalid at the first failure."""
    per_test = []
    for case in suite.cases(partition):
        res = run_case(program, _with_launch(case, launch_config), suite.validator,
                       cost_model, cycle_budget)
        if not res.passed:
            return Invalid(res.reason, case.name)
        per_test.append(res.cycles)
    if not per_test:
        return Invalid("empty suite")
    return Fitness(sum(per_test) / len(per_test), tuple(per_test))


def evaluate(variant: Variant, suite: TestSuite, launch_config: Optional[LaunchConfig] = None,
             cost_model: CostModel = DEFAULT_COST_MODEL, cycle_budget: int = DEFAULT_BUDGET,
             seed_program: Optional[Program] = None):
    """Fitness of ``variant`` on the fitness partition of ``suite``.

    ``launch_config``, when given, replaces every test's own launch shape.
    Variants without a cached program are materialized from ``seed_program``.
    """
    program = variant.program
    if program is None:
        if seed_program is None:
            raise ValueError("variant has no program and no seed program was given")
        try:
            program = materialize(seed_program, variant.edits)
        except MaterializeError as exc:
            return Invalid(f"materialize:{exc.index}:{exc.cause.cause}")
    return evaluate_program(program, suite, launch_config, cost_model, cycle_budget)


class Evaluator:
    """Memoizing, thread-safe ``evaluate`` bound to one suite and VM setup.

    Structurally equal programs share one result.
    """

    def __init__(self, suite: TestSuite, launch_config: Optional[LaunchConfig] = None,
                 cost_model: CostModel = DEFAULT_COST_MODEL, cycle_budget: int = DEFAULT_BUDGET):
        self.suite = suite
        self.launch_config = launch_config
        self.cost_model = cost_model
        self.cycle_budget = cycle_budget
        self._memo: dict = {}
        self._lock = threading.Lock()
        self.calls = 0
        self.runs = 0

    def program_fitness(self, program: Program):
        with self._lock:
            self.calls += 1
            hit = self._memo.get(program)
        if hit is not None:
            return hit
        result = evaluate_program(program, self.suite, self.launch_config, self.cost_model,
                                  self.cycle_budget)
        with self._lock:
            self.runs += 1
            self._memo.setdefault(program, result)
        return result

    def __call__(self, variant: Variant) -> Variant:
        if variant.program is None:
            raise ValueError("Evaluator needs materialized variants")
        return variant.with_fitness(self.program_fitness(variant.program))
