"""Variants and the two variation operators."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

from ..mir.types import Program
from .edits import (EDIT_KINDS, INST_COPY, INST_DELETE, INST_MOVE, INST_REPLACE, INST_SWAP,
                    ApplyError, Edit, MaterializeError, apply_edit, in_scope_values, locations,
                    materialize, operand_type)

MUTATION_ATTEMPTS = 20


@dataclass(frozen=True)
class Fitness:
    mean_cycles: float
    per_test_cycles: tuple

    def to_dict(self) -> dict:
        return {"mean_cycles": self.mean_cycles, "per_test_cycles": list(self.per_test_cycles)}


@dataclass(frozen=True)
class Invalid:
    reason: str
    test: Optional[str] = None

    def to_dict(self) -> dict:
        return {"invalid": self.reason, "test": self.test}


@dataclass(frozen=True)
class Variant:
    edits: tuple = ()
    program: Optional[Program] = None
    fitness: Optional[Union[Fitness, Invalid]] = None

    @property
    def uids(self) -> tuple:
        return tuple(e.uid for e in self.edits)

    @property
    def valid(self) -> bool:
        return isinstance(self.fitness, Fitness)

    def with_fitness(self, fitness) -> "Variant":
        return replace(self, fitness=fitness)


def _pick_edit(program: Program, rng: random.Random, uid: int) -> Optional[Edit]:
    kind = rng.choice(EDIT_KINDS)
    insts = list(program.instructions())
    body = [i for i in insts if not i.is_terminator]
    if not body:
        return None
    if kind == INST_COPY:
        return Edit(kind, uid, donor=rng.choice(body).id, before=rng.choice(insts).id)
    if kind == INST_DELETE:
        return Edit(kind, uid, target=rng.choice(body).id)
    if kind == INST_MOVE:
        return Edit(kind, uid, target=rng.choice(body).id, before=rng.choice(insts).id)
    if kind == INST_REPLACE:
        return Edit(kind, uid, target=rng.choice(body).id, donor=rng.choice(body).id)
    if kind == INST_SWAP:
        return Edit(kind, uid, target=rng.choice(body).id, other=rng.choice(body).id)
    # operand replacement: any instruction with a value operand, terminators included
    users = [i for i in insts if i.value_operand_indices()]
    if not users:
        return None
    target = rng.choice(users)
    index = rng.choice(target.value_operand_indices())
    func = program.find(target.id)[0]
    want = operand_type(func, target, index)
    current = getattr(target.operands[index], "name", None)
    pool = [v for v in in_scope_values(func, target.id, want) if v != current]
    if not pool:
        return None
    return Edit(kind, uid, target=target.id, index=index, value=rng.choice(pool))


def mutate(variant: Variant, rng: random.Random, uid: Optional[int] = None) -> Variant:
    """Append one random edit, retrying up to 20 times; identity on failure."""
    if variant.program is None:
        raise ValueError("mutate needs a materialized variant")
    if uid is None:
        uid = rng.getrandbits(40)
    for _ in range(MUTATION_ATTEMPTS):
        edit = _pick_edit(variant.program, rng, uid)
        if edit is None:
            continue
        try:
            prog = apply_edit(variant.program, edit)
        except ApplyError:
            continue
        edit = replace(edit, source_locs=locations(variant.program, edit))
        return Variant(variant.edits + (edit,), prog)
    return variant


Materialize = Callable[[tuple], Program]


def _materializer(seed: Union[Program, Materialize]) -> Materialize:
    if isinstance(seed, Program):
        return lambda edits: materialize(seed, edits)
    return seed


def crossover(a: Variant, b: Variant, rng: random.Random, seed: Union[Program, Materialize],
              cuts: Optional[tuple] = None) -> tuple:
    """One-point crossover on edit lists.

    child1 = a[:i] + b[j:], child2 = b[:j] + a[i:].  A child that does not
    materialize is replaced by the parent its prefix came from.
    """
    build = _materializer(seed)
    if cuts is None:
        i, j = rng.randint(0, len(a.edits)), rng.randint(0, len(b.edits))
    else:
        i, j = cuts
    children = []
    for edits, parent in ((a.edits[:i] + b.edits[j:], a), (b.edits[:j] + a.edits[i:], b)):
        if edits == parent.edits:
            children.append(Variant(parent.edits, parent.program))
            continue
        try:
            children.append(Variant(edits, build(edits)))
        except MaterializeError:
            children.append(Variant(parent.edits, parent.program))
    return children[0], children[1]
