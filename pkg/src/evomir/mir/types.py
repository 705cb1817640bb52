"""Data model of the mini parallel IR.

Programs are immutable.  Instruction ids are excluded from equality, so two
programs compare equal when they are structurally identical even if their
ids were assigned differently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

I32 = "i32"
BOOL = "bool"
SCALAR_TYPES = (I32, BOOL)

# Operand kinds used in opcode signatures:
#   i  value of type i32       b  value of type bool
#   a  value of any type (polymorphic, resolved per instruction)
#   G  global buffer           S  shared buffer
#   K  local slot constant     L  block label
ARITH = "arith"
COMPARE = "compare"
MEM_GLOBAL = "mem.global"
MEM_SHARED = "mem.shared"
MEM_LOCAL = "mem.local"
SYNC = "sync"
CONTROL = "control"
CONTEXT = "context"
PARALLEL = "parallel"
RANDOM = "random"

CATEGORIES = (ARITH, COMPARE, MEM_GLOBAL, MEM_SHARED, MEM_LOCAL, SYNC, CONTROL,
              CONTEXT, PARALLEL, RANDOM)


@dataclass(frozen=True)
class OpSpec:
    name: str
    args: str
    result: Optional[str]  # "i32", "bool", "a" (same as poly operands) or None
    category: str


def _specs() -> dict[str, OpSpec]:
    table = {}

    def add(name, args, result, category):
        table[name] = OpSpec(name, args, result, category)

    for op in ("add", "sub", "mul", "div", "rem", "min", "max", "shl", "shr"):
        add(op, "ii", I32, ARITH)
    for op in ("and", "or", "xor"):
        add(op, "aa", "a", ARITH)
    for cc in ("eq", "ne", "slt", "sle", "sgt", "sge"):
        add("icmp." + cc, "ii", BOOL, COMPARE)
    add("select", "baa", "a", ARITH)
    add("br", "L", None, CONTROL)
    add("condbr", "bLL", None, CONTROL)
    add("ret", "", None, CONTROL)
    add("ld.global", "Gi", I32, MEM_GLOBAL)
    add("st.global", "Gii", None, MEM_GLOBAL)
    add("ld.shared", "Si", I32, MEM_SHARED)
    add("st.shared", "Sii", None, MEM_SHARED)
    add("ld.local", "K", I32, MEM_LOCAL)
    add("st.local", "Ki", None, MEM_LOCAL)
    for op in ("tid.lane", "tid.warp", "tid.block", "bid", "dim.block", "dim.grid"):
        add(op, "", I32, CONTEXT)
    add("shfl", "ai", "a", PARALLEL)
    add("bar.block", "", None, SYNC)
    add("bar.warp", "", None, SYNC)
    add("rand", "", I32, RANDOM)
    return table


OPCODES: dict[str, OpSpec] = _specs()
TERMINATORS = frozenset({"br", "condbr", "ret"})
VALUE_KINDS = frozenset("iba")


@dataclass(frozen=True)
class Value:
    """Reference to an SSA value (parameter or instruction result)."""
    name: str

    def __str__(self):
        return "%" + self.name


@dataclass(frozen=True)
class Imm:
    value: Union[int, bool]

    @property
    def type(self) -> str:
        return BOOL if isinstance(self.value, bool) else I32

    def __str__(self):
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        return str(self.value)


@dataclass(frozen=True)
class Buffer:
    name: str

    def __str__(self):
        return "@" + self.name


@dataclass(frozen=True)
class Slot:
    index: int

    def __str__(self):
        return str(self.index)


@dataclass(frozen=True)
class Label:
    name: str

    def __str__(self):
        return self.name


Operand = Union[Value, Imm, Buffer, Slot, Label]


@dataclass(frozen=True)
class Instruction:
    opcode: str
    result: Optional[str] = None
    operands: tuple = ()
    loc: Optional[str] = None
    id: int = field(default=0, compare=False)

    @property
    def spec(self) -> OpSpec:
        return OPCODES[self.opcode]

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    def value_operand_indices(self) -> list[int]:
        kinds = self.spec.args
        return [i for i, k in enumerate(kinds) if k in VALUE_KINDS and i < len(self.operands)]

    def uses(self) -> Iterator[Value]:
        for op in self.operands:
            if isinstance(op, Value):
                yield op

    def successors(self) -> list[str]:
        return [op.name for op in self.operands if isinstance(op, Label)]

    def replace_operand(self, index: int, operand: Operand) -> "Instruction":
        ops = list(self.operands)
        ops[index] = operand
        return Instruction(self.opcode, self.result, tuple(ops), self.loc, self.id)


@dataclass(frozen=True)
class Block:
    label: str
    instructions: tuple = ()

    @property
    def terminator(self) -> Optional[Instruction]:
        if self.instructions and self.instructions[-1].is_terminator:
            return self.instructions[-1]
        return None

    def successors(self) -> list[str]:
        term = self.terminator
        return term.successors() if term is not None else []


@dataclass(frozen=True)
class Param:
    name: str
    type: str = I32


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple = ()
    blocks: tuple = ()
    kernel: bool = False

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    @property
    def exit_block(self) -> Optional[Block]:
        exits = [b for b in self.blocks if b.terminator is not None and b.terminator.opcode == "ret"]
        return exits[0] if len(exits) == 1 else None

    def instructions(self) -> Iterator[Instruction]:
        for b in self.blocks:
            yield from b.instructions


@dataclass(frozen=True)
class BufferDecl:
    space: str  # "global" | "shared"
    name: str
    size: int


@dataclass(frozen=True)
class Program:
    functions: tuple = ()
    entry: str = ""
    buffers: tuple = ()
    local_slots: int = 0
    metadata: tuple = ()  # ordered (key, value) pairs

    @property
    def kernel(self) -> Function:
        for f in self.functions:
            if f.name == self.entry:
                return f
        raise KeyError(self.entry)

    def buffer(self, name: str) -> BufferDecl:
        for b in self.buffers:
            if b.name == name:
                return b
        raise KeyError(name)

    def buffers_in(self, space: str) -> list[BufferDecl]:
        return [b for b in self.buffers if b.space == space]

    def instructions(self) -> Iterator[Instruction]:
        for f in self.functions:
            yield from f.instructions()

    def find(self, inst_id: int) -> Optional[tuple[Function, Block, int]]:
        for f in self.functions:
            for b in f.blocks:
                for k, inst in enumerate(b.instructions):
                    if inst.id == inst_id:
                        return f, b, k
        return None

    def instruction(self, inst_id: int) -> Optional[Instruction]:
        hit = self.find(inst_id)
        return hit[1].instructions[hit[2]] if hit else None

    def replace_function(self, func: Function) -> "Program":
        funcs = tuple(func if f.name == func.name else f for f in self.functions)
        return Program(funcs, self.entry, self.buffers, self.local_slots, self.metadata)

    def ids(self) -> list[int]:
        return [inst.id for inst in self.instructions()]


def value_types(func: Function) -> dict[str, str]:
    """Result type of every value defined in ``func``.

    Polymorphic results take the type of their first polymorphic operand that
    resolves; unresolvable values default to i32.
    """
    types = {p.name: p.type for p in func.params}
    pending = []
    for inst in func.instructions():
        if inst.result is None:
            continue
        res = inst.spec.result
        if res in SCALAR_TYPES:
            types.setdefault(inst.result, res)
        else:
            pending.append(inst)
    # poly results may chain through each other; iterate to a fixed point
    changed = True
    while pending and changed:
        changed = False
        rest = []
        for inst in pending:
            t = _poly_type(inst, types)
            if t is None:
                rest.append(inst)
            else:
                types.setdefault(inst.result, t)
                changed = True
        pending = rest
    for inst in pending:
        types.setdefault(inst.result, I32)
    return types


def _poly_type(inst: Instruction, types: dict[str, str]) -> Optional[str]:
    for kind, op in zip(inst.spec.args, inst.operands):
        if kind != "a":
            continue
        if isinstance(op, Imm):
            return op.type
        if isinstance(op, Value) and op.name in types:
            return types[op.name]
    return None
