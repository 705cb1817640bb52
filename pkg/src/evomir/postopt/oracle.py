"""Memoizing fitness oracles over edit subsets."""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional

from ..bench.suites import TestSuite
from ..evo.edits import MaterializeError, Materializer
from ..evo.fitness import evaluate_program
from ..evo.variation import Fitness
from ..mir.types import Program
from ..simtvm import DEFAULT_BUDGET, DEFAULT_COST_MODEL, CostModel, LaunchConfig


class _Failure:
    """Distinguished oracle value for a subset that fails to build or test."""
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FAILURE"

    def __reduce__(self):
        return (_Failure, ())


FAILURE = _Failure()


def failed(value) -> bool:
    return value is FAILURE


class Oracle:
    """f(S) for edit-uid subsets S, memoized and safe for concurrent use.

    ``evaluations`` counts distinct subsets actually computed.
    """

    def __init__(self, edits: Iterable[int]):
        self.order = tuple(edits)
        self._rank = {u: k for k, u in enumerate(self.order)}
        self._memo: dict = {}
        self._lock = threading.Lock()
        self._pending: dict = {}
        self.evaluations = 0

    def key(self, subset) -> frozenset:
        s = frozenset(subset)
        unknown = s - self._rank.keys()
        if unknown:
            raise KeyError(f"edits not known to the oracle: {sorted(unknown)}")
        return s

    def _compute(self, subset: frozenset):
        raise NotImplementedError

    def __call__(self, subset=()):
        s = self.key(subset)
        with self._lock:
            if s in self._memo:
                return self._memo[s]
            event = self._pending.get(s)
            owner = event is None
            if owner:
                event = self._pending[s] = threading.Event()
        if not owner:
            event.wait()
            return self._memo[s]
        try:
            value = self._compute(s)
        except BaseException:
            with self._lock:
                del self._pending[s]
            event.set()
            raise
        with self._lock:
            self._memo[s] = value
            self.evaluations += 1
            del self._pending[s]
        event.set()
        return value

    def known(self) -> dict:
        with self._lock:
            return dict(self._memo)

    @property
    def baseline(self) -> float:
        return self(())

    def ordered(self, subset) -> list:
        return sorted(subset, key=self._rank.__getitem__)


class FunctionOracle(Oracle):
    """Oracle backed by a plain function of a frozenset (synthetic landscapes)."""

    def __init__(self, edits: Iterable[int], fn: Callable[[frozenset], object]):
        super().__init__(edits)
        self.fn = fn

    def _compute(self, subset):
        value = self.fn(subset)
        return FAILURE if value is None or value is FAILURE else float(value)


class ProgramOracle(Oracle):
    """Mean cycles of the seed program with a subset of edits applied.

    Edits are applied in their original list order; a subset that does not
    materialize or fails any test is FAILURE.
    """

    def __init__(self, seed: Program, edits, suite: TestSuite,
                 launch_config: Optional[LaunchConfig] = None,
                 cost_model: CostModel = DEFAULT_COST_MODEL, cycle_budget: int = DEFAULT_BUDGET,
                 partition: str = "fitness"):
        edits = list(edits)
        super().__init__(e.uid for e in edits)
        self.edits = {e.uid: e for e in edits}
        self.seed = seed
        self.suite = suite
        self.launch_config = launch_config
        self.cost_model = cost_model
        self.cycle_budget = cycle_budget
        self.partition = partition
        self._build = Materializer(seed)

    def program(self, subset) -> Program:
        return self._build(tuple(self.edits[u] for u in self.ordered(self.key(subset))))

    def _compute(self, subset):
        try:
            prog = self.program(subset)
        except MaterializeError:
            return FAILURE
        fit = evaluate_program(prog, self.suite, self.launch_config, self.cost_model,
                               self.cycle_budget, self.partition)
        return fit.mean_cycles if isinstance(fit, Fitness) else FAILURE
