"""Static well-formedness checks.  Violations are returned, never raised."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import cfg
from .types import (BOOL, I32, Buffer, Function, Imm, Instruction, Label, Program, Slot,
                    Value, value_types)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    function: str = ""
    block: str = ""
    inst_id: Optional[int] = None

    def __str__(self):
        where = f"@{self.function}"
        if self.block:
            where += f"/{self.block}"
        if self.inst_id is not None:
            where += f"#{self.inst_id}"
        return f"[{self.kind}] {where}: {self.message}"


def verify(program: Program) -> list[Violation]:
    out: list[Violation] = []
    kernels = [f for f in program.functions if f.name == program.entry]
    if len(kernels) != 1:
        out.append(Violation("entry", f"expected exactly one kernel named @{program.entry}"))
    seen_ids = set()
    for inst in program.instructions():
        if inst.id in seen_ids:
            out.append(Violation("duplicate-id", f"instruction id {inst.id} used twice", inst_id=inst.id))
        seen_ids.add(inst.id)
    names = [b.name for b in program.buffers]
    if len(set(names)) != len(names):
        out.append(Violation("buffer", "duplicate buffer declaration"))
    for func in program.functions:
        out.extend(_verify_function(program, func))
    return out


def _verify_function(program: Program, func: Function) -> list[Violation]:
    out = []

    def add(kind, msg, block="", inst=None):
        out.append(Violation(kind, msg, func.name, block, inst.id if inst is not None else None))

    if not func.blocks:
        add("terminator", "function has no blocks")
        return out
    labels = [b.label for b in func.blocks]
    if len(set(labels)) != len(labels):
        add("duplicate-label", "block labels are not unique")
        return out
    label_set = set(labels)

    # block structure
    structural_ok = True
    for b in func.blocks:
        if not b.instructions or not b.instructions[-1].is_terminator:
            add("terminator", "block does not end in a terminator", b.label)
            structural_ok = False
        for inst in b.instructions[:-1]:
            if inst.is_terminator:
                add("terminator", f"{inst.opcode} before end of block", b.label, inst)
                structural_ok = False
        for inst in b.instructions:
            for s in inst.successors():
                if s not in label_set:
                    add("label", f"branch to unknown block {s}", b.label, inst)
                    structural_ok = False
    exits = [b for b in func.blocks if b.terminator is not None and b.terminator.opcode == "ret"]
    if len(exits) != 1:
        add("exit", f"expected exactly one exit block, found {len(exits)}")
        structural_ok = False
    if not structural_ok:
        out.extend(_verify_operands(program, func, None))
        return out

    reach = cfg.reachable_blocks(func)
    for b in func.blocks:
        if b.label not in reach:
            add("unreachable", "block is unreachable from entry", b.label)
    to_exit = cfg.blocks_reaching(func, exits[0].label)
    for b in func.blocks:
        if b.label in reach and b.label not in to_exit:
            add("no-exit-path", "block cannot reach the exit block", b.label)
    if any(v.kind in ("unreachable", "no-exit-path") for v in out):
        out.extend(_verify_operands(program, func, None))
        return out
    if not cfg.is_reducible(func):
        add("irreducible", "control-flow graph is not reducible")
    out.extend(_verify_operands(program, func, cfg.immediate_dominators(func)))
    return out


def _verify_operands(program: Program, func: Function, idom) -> list[Violation]:
    out = []
    types = value_types(func)
    defs = {}  # value -> (block, position)
    for p in func.params:
        defs[p.name] = (None, -1)
    for b in func.blocks:
        for k, inst in enumerate(b.instructions):
            if inst.result is None:
                continue
            if inst.result in defs:
                out.append(Violation("duplicate-def", f"%{inst.result} defined more than once",
                                     func.name, b.label, inst.id))
            else:
                defs[inst.result] = (b.label, k)

    for b in func.blocks:
        for k, inst in enumerate(b.instructions):
            out.extend(_check_inst(program, func, b.label, k, inst, types, defs, idom))
    return out


def _check_inst(program, func, label, pos, inst: Instruction, types, defs, idom):
    out = []

    def add(kind, msg):
        out.append(Violation(kind, msg, func.name, label, inst.id))

    spec = inst.spec
    if len(inst.operands) != len(spec.args):
        add("arity", f"{inst.opcode} takes {len(spec.args)} operands, got {len(inst.operands)}")
        return out
    if (inst.result is None) != (spec.result is None):
        add("arity", f"{inst.opcode} result presence mismatch")
    poly_type = None
    for kind, op in zip(spec.args, inst.operands):
        if kind in "iba":
            if isinstance(op, Imm):
                t = op.type
            elif isinstance(op, Value):
                if op.name not in defs:
                    add("undefined", f"use of undefined value {op}")
                    continue
                t = types.get(op.name, I32)
                dblock, dpos = defs[op.name]
                if idom is not None and dblock is not None:
                    if dblock == label:
                        ok = dpos < pos
                    else:
                        ok = cfg.dominates(idom, dblock, label)
                    if not ok:
                        add("dominance", f"{op} does not dominate its use in {inst.opcode}")
            else:
                add("operand-kind", f"expected a value, got {op}")
                continue
            want = {"i": I32, "b": BOOL}.get(kind)
            if kind == "a":
                if poly_type is None:
                    poly_type = t
                elif t != poly_type:
                    add("type", f"{inst.opcode} mixes {poly_type} and {t} operands")
            elif t != want:
                add("type", f"{inst.opcode} expects {want} operand, {op} has type {t}")
        elif kind in "GS":
            space = "global" if kind == "G" else "shared"
            if not isinstance(op, Buffer):
                add("operand-kind", f"expected a {space} buffer, got {op}")
            elif not any(d.name == op.name and d.space == space for d in program.buffers):
                add("buffer", f"{op} is not a declared {space} buffer")
        elif kind == "K":
            if not isinstance(op, Slot):
                add("operand-kind", f"expected a local slot, got {op}")
            elif not 0 <= op.index < program.local_slots:
                add("slot", f"local slot {op.index} out of range (0..{program.local_slots - 1})")
        elif kind == "L":
            if not isinstance(op, Label):
                add("operand-kind", f"expected a label, got {op}")
    if spec.result == "a" and inst.result is not None and poly_type is not None:
        if types.get(inst.result) not in (None, poly_type):
            add("type", f"%{inst.result} type mismatch")
    return out


def is_valid(program: Program) -> bool:
    return not verify(program)
