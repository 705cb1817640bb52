"""Edit records, their application with operand repair, and materialization."""

from __future__ import annotations

import random
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Optional

from ..mir import cfg
from ..mir.types import (BOOL, I32, Block, Function, Imm, Instruction, Program,
                         Value, value_types)
from ..mir.verify import verify

INST_COPY = "InstCopy"
INST_DELETE = "InstDelete"
INST_MOVE = "InstMove"
INST_REPLACE = "InstReplace"
INST_SWAP = "InstSwap"
OPERAND_REPLACE = "OperandReplace"
EDIT_KINDS = (INST_COPY, INST_DELETE, INST_MOVE, INST_REPLACE, INST_SWAP, OPERAND_REPLACE)

# Instructions created by an edit get id FRESH_ID_BASE + uid, far above any
# id the parser hands out, so later edits can refer to them.
FRESH_ID_BASE = 1 << 48


class ApplyError(Exception):
    def __init__(self, cause: str, message: str = ""):
        super().__init__(f"{cause}: {message}" if message else cause)
        self.cause = cause


class MaterializeError(Exception):
    def __init__(self, index: int, cause: ApplyError):
        super().__init__(f"edit {index} failed: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True)
class Edit:
    """One recorded mutation.

    Field use by kind:
      InstCopy        donor, before (insertion point: id of the instruction to insert ahead of)
      InstDelete      target
      InstMove        target, before
      InstReplace     target, donor
      InstSwap        target, other
      OperandReplace  target, index, value (name of an SSA value)
    """
    kind: str
    uid: int
    target: Optional[int] = None
    donor: Optional[int] = None
    before: Optional[int] = None
    other: Optional[int] = None
    index: Optional[int] = None
    value: Optional[str] = None
    source_locs: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise ValueError(f"unknown edit kind {self.kind!r}")
        need = {INST_COPY: ("donor", "before"), INST_DELETE: ("target",),
                INST_MOVE: ("target", "before"), INST_REPLACE: ("target", "donor"),
                INST_SWAP: ("target", "other"), OPERAND_REPLACE: ("target", "index", "value")}
        for name in need[self.kind]:
            if getattr(self, name) is None:
                raise ValueError(f"{self.kind} requires {name}")

    @property
    def fresh_id(self) -> Optional[int]:
        """Id of the instruction this edit creates, if any."""
        if self.kind in (INST_COPY, INST_REPLACE):
            return FRESH_ID_BASE + self.uid
        return None

    @property
    def fresh_name(self) -> str:
        return f"_e{self.uid}"

    def touched(self) -> tuple:
        return tuple(i for i in (self.target, self.donor, self.other) if i is not None)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "uid": self.uid}
        for name in ("target", "donor", "before", "other", "index", "value"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        d["source_locs"] = list(self.source_locs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Edit":
        kw = {k: d[k] for k in ("target", "donor", "before", "other", "index", "value") if k in d}
        return cls(d["kind"], int(d["uid"]), source_locs=tuple(d.get("source_locs", ())), **kw)

    def __str__(self):
        parts = [f"{k}={v}" for k, v in self.to_dict().items() if k not in ("kind", "uid", "source_locs")]
        return f"{self.kind}#{self.uid}({', '.join(parts)})"


def _locate(func: Function, inst_id: int) -> tuple[int, int]:
    for bi, b in enumerate(func.blocks):
        for k, inst in enumerate(b.instructions):
            if inst.id == inst_id:
                return bi, k
    raise ApplyError("missing-target", f"instruction {inst_id} does not exist")


def _kernel_holding(program: Program, inst_id: int) -> Function:
    hit = program.find(inst_id)
    if hit is None:
        raise ApplyError("missing-target", f"instruction {inst_id} does not exist")
    return hit[0]


def _declared_types(func: Function) -> dict[int, str]:
    """Result type per instruction id, as the instruction currently defines it."""
    types = value_types(func)
    return {inst.id: types[inst.result] for inst in func.instructions() if inst.result is not None}


def locations(program: Program, edit: Edit) -> tuple:
    locs = []
    for i in edit.touched():
        inst = program.instruction(i)
        if inst is not None and inst.loc:
            locs.append(inst.loc)
    return tuple(locs)


def apply_edit(program: Program, edit: Edit) -> Program:
    """Apply ``edit`` to ``program``, repair dangling operands, verify."""
    func = _kernel_holding(program, edit.target if edit.target is not None else edit.donor)
    rtype = _declared_types(func)
    blocks = [list(b.instructions) for b in func.blocks]

    def get(inst_id):
        bi, k = _locate(func, inst_id)
        return func.blocks[bi].instructions[k]

    def remove(inst_id):
        for insts in blocks:
            for k, inst in enumerate(insts):
                if inst.id == inst_id:
                    del insts[k]
                    return
        raise ApplyError("missing-target", f"instruction {inst_id} does not exist")

    def insert_before(point_id, inst):
        for insts in blocks:
            for k, cur in enumerate(insts):
                if cur.id == point_id:
                    insts.insert(k, inst)
                    return
        raise ApplyError("missing-target", f"insertion point {point_id} does not exist")

    def no_terminator(inst, role):
        if inst.is_terminator:
            raise ApplyError("terminator", f"{role} {inst.id} is a terminator")

    kind = edit.kind
    if kind == INST_COPY:
        donor = get(edit.donor)
        no_terminator(donor, "donor")
        _locate(func, edit.before)
        result = edit.fresh_name if donor.result is not None else None
        new = Instruction(donor.opcode, result, donor.operands, donor.loc, edit.fresh_id)
        if result is not None:
            rtype[new.id] = rtype[donor.id]
        insert_before(edit.before, new)
    elif kind == INST_DELETE:
        no_terminator(get(edit.target), "target")
        remove(edit.target)
    elif kind == INST_MOVE:
        target = get(edit.target)
        no_terminator(target, "target")
        _locate(func, edit.before)
        if edit.before == edit.target:
            raise ApplyError("no-op", "instruction moved before itself")
        remove(edit.target)
        insert_before(edit.before, target)
    elif kind == INST_REPLACE:
        target, donor = get(edit.target), get(edit.donor)
        no_terminator(target, "target")
        no_terminator(donor, "donor")
        if donor.result is None:
            result = None
        else:
            result = target.result if target.result is not None else edit.fresh_name
        new = Instruction(donor.opcode, result, donor.operands, donor.loc, edit.fresh_id)
        if result is not None:
            rtype[new.id] = rtype[donor.id]
        bi, k = _locate(func, edit.target)
        blocks[bi][k] = new
    elif kind == INST_SWAP:
        a, b = get(edit.target), get(edit.other)
        no_terminator(a, "target")
        no_terminator(b, "other")
        if a.id == b.id:
            raise ApplyError("no-op", "instruction swapped with itself")
        ba, ka = _locate(func, a.id)
        bb, kb = _locate(func, b.id)
        blocks[ba][ka], blocks[bb][kb] = b, a
    else:  # OPERAND_REPLACE
        target = get(edit.target)
        idx = edit.index
        if idx not in target.value_operand_indices():
            raise ApplyError("operand-index", f"operand {idx} of {target.opcode} is not a value")
        bi, k = _locate(func, target.id)
        blocks[bi][k] = target.replace_operand(idx, Value(edit.value))

    new_func = Function(func.name, func.params,
                        tuple(Block(b.label, tuple(insts)) for b, insts in zip(func.blocks, blocks)),
                        func.kernel)
    new_func = _repair(new_func, rtype, random.Random(edit.uid))
    out = program.replace_function(new_func)
    problems = verify(out)
    if problems:
        raise ApplyError("verify", str(problems[0]))
    return out


def _repair(func: Function, rtype: dict[int, str], rng: random.Random) -> Function:
    """Rebind every operand whose definition is missing, out of scope or of
    the wrong type, drawing uniformly among in-scope values of the needed type."""
    for b in func.blocks:
        if not b.instructions or not b.instructions[-1].is_terminator:
            raise ApplyError("terminator", f"block {b.label} lost its terminator")
    idom = cfg.immediate_dominators(func)
    types = {p.name: p.type for p in func.params}
    defs = {p.name: (None, -1) for p in func.params}
    block_defs: dict[str, list[str]] = {}
    for b in func.blocks:
        names = []
        for k, inst in enumerate(b.instructions):
            if inst.result is not None:
                if inst.result in defs:
                    raise ApplyError("verify", f"%{inst.result} defined twice")
                defs[inst.result] = (b.label, k)
                types[inst.result] = rtype.get(inst.id, I32)
                names.append(inst.result)
        block_defs[b.label] = names

    def in_scope(label, pos, name):
        dblock, dpos = defs[name]
        if dblock is None:
            return True
        if dblock == label:
            return dpos < pos
        return cfg.dominates(idom, dblock, label)

    def candidates(label, pos, want):
        out = [p.name for p in func.params if p.type == want]
        chain = []
        cur = label
        while cur in idom:
            chain.append(cur)
            if idom[cur] == cur:
                break
            cur = idom[cur]
        for lab in reversed(chain):
            for name in block_defs[lab]:
                if types[name] == want and in_scope(label, pos, name):
                    out.append(name)
        return out

    changed = False
    new_blocks = []
    for b in func.blocks:
        insts = list(b.instructions)
        for k, inst in enumerate(insts):
            spec = inst.spec
            for i in inst.value_operand_indices():
                op = inst.operands[i]
                want = {"i": I32, "b": BOOL}.get(spec.args[i])
                if want is None:
                    want = types.get(inst.result, I32)
                if isinstance(op, Imm):
                    if op.type == want:
                        continue
                elif isinstance(op, Value) and op.name in defs and types[op.name] == want \
                        and b.label in idom and in_scope(b.label, k, op.name):
                    continue
                if b.label not in idom:
                    continue  # unreachable code is reported by verify
                pool = candidates(b.label, k, want)
                if not pool:
                    raise ApplyError("repair", f"no in-scope {want} value for operand {i} of #{inst.id}")
                inst = inst.replace_operand(i, Value(rng.choice(pool)))
                insts[k] = inst
                changed = True
        new_blocks.append(Block(b.label, tuple(insts)))
    if not changed:
        return func
    return replace(func, blocks=tuple(new_blocks))


def in_scope_values(func: Function, inst_id: int, want: str) -> list[str]:
    """Values of type ``want`` usable as operands of instruction ``inst_id``."""
    rtype = _declared_types(func)
    bi, k = _locate(func, inst_id)
    label = func.blocks[bi].label
    idom = cfg.immediate_dominators(func)
    out = [p.name for p in func.params if p.type == want]
    for b in func.blocks:
        if b.label == label:
            scope = b.instructions[:k]
        elif cfg.dominates(idom, b.label, label):
            scope = b.instructions
        else:
            continue
        out.extend(i.result for i in scope if i.result is not None and rtype[i.id] == want)
    return out


def operand_type(func: Function, inst: Instruction, index: int) -> str:
    kind = inst.spec.args[index]
    if kind == "i":
        return I32
    if kind == "b":
        return BOOL
    return value_types(func).get(inst.result, I32)


def materialize(seed: Program, edits) -> Program:
    """Fold ``apply_edit`` over ``edits``; MaterializeError names the first failure."""
    prog = seed
    for k, edit in enumerate(edits):
        try:
            prog = apply_edit(prog, edit)
        except ApplyError as exc:
            raise MaterializeError(k, exc) from None
    return prog


class Materializer:
    """``materialize`` with a bounded cache of edit-list prefixes.

    Children in a population share long prefixes with their parents, so most
    calls only apply the last one or two edits.  Failures are cached too.
    """

    def __init__(self, seed: Program, capacity: int = 4096):
        self.seed = seed
        self.capacity = capacity
        self._cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def _get(self, key):
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
            return hit

    def _put(self, key, value):
        with self._lock:
            self._cache[key] = value
            if len(self._cache) > self.capacity:
                self._cache.popitem(last=False)

    def __call__(self, edits) -> Program:
        edits = tuple(edits)
        start, prog = 0, self.seed
        for n in range(len(edits), 0, -1):
            hit = self._get(edits[:n])
            if hit is not None:
                if isinstance(hit, MaterializeError):
                    raise hit
                start, prog = n, hit
                break
        for k in range(start, len(edits)):
            try:
                prog = apply_edit(prog, edits[k])
            except ApplyError as exc:
                err = MaterializeError(k, exc)
                self._put(edits[:k + 1], err)
                raise err from None
            self._put(edits[:k + 1], prog)
        return prog

