"""The generational search loop."""

from __future__ import annotations

import json
import logging
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

from ..bench.suites import TestSuite, run_case
from ..mir.types import Program
from ..simtvm import DEFAULT_COST_MODEL, CostModel, LaunchConfig
from .edits import Edit, Materializer
from .fitness import Evaluator, _with_launch
from .variation import Fitness, Invalid, Variant, crossover, mutate

log = logging.getLogger(__name__)


class SearchError(Exception):
    pass


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 256
    elitism: int = 4
    crossover_prob: float = 0.8
    mutation_prob: float = 0.3
    generations: int = 50
    seed: int = 0
    tournament_size: int = 2
    # per-warp cycle budget = budget_factor * the seed's slowest warp + budget_slack
    budget_factor: float = 2.0
    budget_slack: int = 10_000

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("elitism must be in [0, population_size)")
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")
        if self.budget_factor < 1.0:
            raise ValueError("budget_factor must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown search config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SearchConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: Optional[float]
    mean_fitness: Optional[float]
    validity_rate: float
    best_uids: tuple
    individuals: tuple  # edit-uid list of every individual in the population

    def to_dict(self) -> dict:
        return {"generation": self.generation, "best_fitness": self.best_fitness,
                "mean_fitness": self.mean_fitness, "validity_rate": self.validity_rate,
                "best_uids": list(self.best_uids),
                "individuals": [list(u) for u in self.individuals]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationRecord":
        return cls(d["generation"], d["best_fitness"], d["mean_fitness"], d["validity_rate"],
                   tuple(d["best_uids"]), tuple(tuple(u) for u in d["individuals"]))


def read_generation_log(path) -> list:
    with open(path) as fh:
        return [GenerationRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


@dataclass
class SearchResult:
    best_variant: Variant
    generation_log: list
    seed_fitness: Fitness
    cycle_budget: int
    edits: dict = field(default_factory=dict)  # uid -> Edit, every edit seen in a survivor

    @property
    def speedup(self) -> float:
        best = self.best_variant.fitness
        return self.seed_fitness.mean_cycles / best.mean_cycles if isinstance(best, Fitness) else 0.0


def rng_stream(seed: int, generation: int, slot: int, purpose: str) -> random.Random:
    """Independent RNG per (run seed, generation, slot, purpose)."""
    return random.Random(f"{seed}:{generation}:{slot}:{purpose}")


def edit_uid(config: SearchConfig, generation: int, slot: int) -> int:
    return 1 + generation * config.population_size + slot


def _sort_key(v: Variant):
    # invalid variants only meet in tournaments when nothing is valid
    if not v.valid:
        return (float("inf"), len(v.edits), v.uids)
    return (v.fitness.mean_cycles, 0, v.uids)


def _tournament(pool: list, rng: random.Random, size: int) -> Variant:
    entrants = [pool[rng.randrange(len(pool))] for _ in range(size)]
    return min(entrants, key=_sort_key)


def breed(population: list, config: SearchConfig, generation: int, build: Callable) -> list:
    """Next population (for ``generation``) from an evaluated one.

    Elites are carried unchanged; the remaining slots are filled pairwise by
    two tournament winners, crossed with ``crossover_prob`` and each mutated
    with ``mutation_prob``.
    """
    size = config.population_size
    valid = sorted((v for v in population if v.valid), key=_sort_key)
    nxt = [Variant(v.edits, v.program) for v in valid[:config.elitism]]
    pool = valid or [min(population, key=lambda v: (len(v.edits), v.uids))]
    slot = len(nxt)
    while slot < size:
        rng = rng_stream(config.seed, generation, slot, "select")
        a = _tournament(pool, rng, config.tournament_size)
        b = _tournament(pool, rng, config.tournament_size)
        if rng.random() < config.crossover_prob:
            children = crossover(a, b, rng, build)
        else:
            children = (a, b)
        for child in children:
            if slot >= size:
                break
            mrng = rng_stream(config.seed, generation, slot, "mutate")
            child = Variant(child.edits, child.program)
            if mrng.random() < config.mutation_prob:
                child = mutate(child, mrng, edit_uid(config, generation, slot))
            nxt.append(child)
            slot += 1
    return nxt


def _record(generation: int, population: list) -> GenerationRecord:
    valid = [v for v in population if v.valid]
    best = min(valid, key=_sort_key) if valid else None
    mean = sum(v.fitness.mean_cycles for v in valid) / len(valid) if valid else None
    return GenerationRecord(generation, best.fitness.mean_cycles if best else None, mean,
                            len(valid) / len(population), best.uids if best else (),
                            tuple(v.uids for v in population))


def _checkpoint(path, generation, population, records, config):
    data = {"generation": generation, "config": config.to_dict(),
            "population": [[e.to_dict() for e in v.edits] for v in population],
            "log": [r.to_dict() for r in records]}
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(data, fh, sort_keys=True)
    os.replace(tmp, path)


def evolve(seed_program: Program, suite: TestSuite, config: SearchConfig = SearchConfig(),
           launch_config: Optional[LaunchConfig] = None, cost_model: CostModel = DEFAULT_COST_MODEL,
           jobs: int = 1, log_path=None, checkpoint_path=None, resume: bool = False,
           on_generation: Optional[Callable] = None) -> SearchResult:
    """Evolve ``seed_program`` against the fitness partition of ``suite``.

    Generation 0 is ``population_size`` mutated copies of the seed.  Each
    generation is evaluated, logged, and bred into the next until
    ``config.generations`` generations have been evaluated.  The result does
    not depend on ``jobs``.
    """
    probe = Evaluator(suite, launch_config, cost_model)
    seed_fit = probe.program_fitness(seed_program)
    if not isinstance(seed_fit, Fitness):
        raise SearchError(f"seed program fails its own suite: {seed_fit.reason} ({seed_fit.test})")
    budget = _budget(seed_program, suite, launch_config, cost_model, config)
    evaluator = Evaluator(suite, launch_config, cost_model, budget)
    build = Materializer(seed_program)

    records: list = []
    start = 0
    population = None
    if resume and checkpoint_path and os.path.exists(checkpoint_path):
        with open(checkpoint_path) as fh:
            state = json.load(fh)
        if state["config"] != config.to_dict():
            raise SearchError("checkpoint was written with a different search config")
        records = [GenerationRecord.from_dict(r) for r in state["log"]]
        edits = [tuple(Edit.from_dict(e) for e in ind) for ind in state["population"]]
        population = [Variant(e, build(e)) for e in edits]
        start = state["generation"]
        log.info("resuming after generation %d", start)
    if population is None:
        population = []
        for slot in range(config.population_size):
            rng = rng_stream(config.seed, 0, slot, "mutate")
            population.append(mutate(Variant((), seed_program), rng, edit_uid(config, 0, slot)))

    if log_path is not None:
        with open(log_path, "w") as fh:
            for r in records:
                fh.write(r.to_json() + "\n")

    seen: dict = {}
    best_overall: Optional[Variant] = None
    pool = ThreadPoolExecutor(jobs) if jobs > 1 else None
    try:
        gen = start
        while True:
            if pool is None:
                population = [evaluator(v) for v in population]
            else:
                population = list(pool.map(evaluator, population))
            for v in population:
                for e in v.edits:
                    seen.setdefault(e.uid, e)
            if gen >= len(records):
                rec = _record(gen, population)
                records.append(rec)
                if log_path is not None:
                    with open(log_path, "a") as fh:
                        fh.write(rec.to_json() + "\n")
                if on_generation is not None:
                    on_generation(rec)
                log.info("generation %d: best %s, valid %.2f", gen, rec.best_fitness, rec.validity_rate)
            valid = sorted((v for v in population if v.valid), key=_sort_key)
            if valid and (best_overall is None or _sort_key(valid[0]) < _sort_key(best_overall)):
                best_overall = valid[0]
            if gen + 1 >= config.generations:
                break
            population = breed(population, config, gen + 1, build)
            gen += 1
            if checkpoint_path is not None:
                _checkpoint(checkpoint_path, gen, population, records, config)
    finally:
        if pool is not None:
            pool.shutdown()
    if best_overall is None:
        best_overall = Variant((), seed_program, seed_fit)
    return SearchResult(best_overall, records, seed_fit, budget, seen)


def _budget(seed_program, suite, launch_config, cost_model, config) -> int:
    worst = 0
    for case in suite.cases("fitness"):
        res = run_case(seed_program, _with_launch(case, launch_config), suite.validator, cost_model)
        worst = max(worst, res.max_warp_cycles)
    return int(math.ceil(worst * config.budget_factor)) + config.budget_slack
