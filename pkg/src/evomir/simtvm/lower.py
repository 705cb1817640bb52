"""Flatten a verified Program into integer arrays for the interpreter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mir import cfg
from ..mir.types import (BOOL, COMPARE, OPCODES, Buffer, Imm, Label, Program, Slot, Value,
                         value_types)

OPNAMES = tuple(OPCODES)
OPCODE_INDEX = {name: i for i, name in enumerate(OPNAMES)}

# numeric opcode constants used by the interpreter
OP_ADD = OPCODE_INDEX["add"]
OP_SUB = OPCODE_INDEX["sub"]
OP_MUL = OPCODE_INDEX["mul"]
OP_DIV = OPCODE_INDEX["div"]
OP_REM = OPCODE_INDEX["rem"]
OP_MIN = OPCODE_INDEX["min"]
OP_MAX = OPCODE_INDEX["max"]
OP_SHL = OPCODE_INDEX["shl"]
OP_SHR = OPCODE_INDEX["shr"]
OP_AND = OPCODE_INDEX["and"]
OP_OR = OPCODE_INDEX["or"]
OP_XOR = OPCODE_INDEX["xor"]
OP_EQ = OPCODE_INDEX["icmp.eq"]
OP_NE = OPCODE_INDEX["icmp.ne"]
OP_SLT = OPCODE_INDEX["icmp.slt"]
OP_SLE = OPCODE_INDEX["icmp.sle"]
OP_SGT = OPCODE_INDEX["icmp.sgt"]
OP_SGE = OPCODE_INDEX["icmp.sge"]
OP_SELECT = OPCODE_INDEX["select"]
OP_BR = OPCODE_INDEX["br"]
OP_CONDBR = OPCODE_INDEX["condbr"]
OP_RET = OPCODE_INDEX["ret"]
OP_LDG = OPCODE_INDEX["ld.global"]
OP_STG = OPCODE_INDEX["st.global"]
OP_LDS = OPCODE_INDEX["ld.shared"]
OP_STS = OPCODE_INDEX["st.shared"]
OP_LDL = OPCODE_INDEX["ld.local"]
OP_STL = OPCODE_INDEX["st.local"]
OP_LANE = OPCODE_INDEX["tid.lane"]
OP_WARP = OPCODE_INDEX["tid.warp"]
OP_TID = OPCODE_INDEX["tid.block"]
OP_BID = OPCODE_INDEX["bid"]
OP_DIMB = OPCODE_INDEX["dim.block"]
OP_DIMG = OPCODE_INDEX["dim.grid"]
OP_SHFL = OPCODE_INDEX["shfl"]
OP_BARB = OPCODE_INDEX["bar.block"]
OP_BARW = OPCODE_INDEX["bar.warp"]
OP_RAND = OPCODE_INDEX["rand"]

# operand kinds in the lowered form
K_NONE, K_REG, K_IMM, K_BUF, K_PC, K_SLOT = 0, 1, 2, 3, 4, 5

# category recorded per instruction; bool-typed and/or/xor is boundary logic
# and is reported with the comparisons
BOOL_LOGIC = COMPARE


@dataclass(frozen=True)
class Lowered:
    op: np.ndarray        # int64[n]
    dst: np.ndarray       # int64[n], -1 when no result
    okind: np.ndarray     # int64[n, 3]
    oval: np.ndarray      # int64[n, 3]
    reconv: np.ndarray    # int64[n], reconvergence pc for condbr, else -1
    ids: np.ndarray       # int64[n], instruction id per pc
    categories: tuple     # category name per pc
    nregs: int
    param_regs: dict      # param name -> register
    global_names: tuple
    global_base: np.ndarray
    global_size: np.ndarray
    shared_base: np.ndarray
    shared_size: np.ndarray
    shared_total: int
    local_slots: int

    @property
    def n(self) -> int:
        return len(self.op)


def lower(program: Program) -> Lowered:
    func = program.kernel
    types = value_types(func)

    regs: dict[str, int] = {}
    for p in func.params:
        regs[p.name] = len(regs)
    for inst in func.instructions():
        if inst.result is not None and inst.result not in regs:
            regs[inst.result] = len(regs)

    gdecl = program.buffers_in("global")
    sdecl = program.buffers_in("shared")
    gindex = {b.name: i for i, b in enumerate(gdecl)}
    sindex = {b.name: i for i, b in enumerate(sdecl)}
    gsize = np.array([b.size for b in gdecl], dtype=np.int64)
    ssize = np.array([b.size for b in sdecl], dtype=np.int64)
    gbase = np.concatenate([[0], np.cumsum(gsize)[:-1]]).astype(np.int64) if len(gdecl) else np.zeros(0, np.int64)
    sbase = np.concatenate([[0], np.cumsum(ssize)[:-1]]).astype(np.int64) if len(sdecl) else np.zeros(0, np.int64)

    block_pc = {}
    pc = 0
    for b in func.blocks:
        block_pc[b.label] = pc
        pc += len(b.instructions)
    n = pc
    ipdom = cfg.post_dominators(func)

    op = np.zeros(n, np.int64)
    dst = np.full(n, -1, np.int64)
    okind = np.zeros((n, 3), np.int64)
    oval = np.zeros((n, 3), np.int64)
    reconv = np.full(n, -1, np.int64)
    ids = np.zeros(n, np.int64)
    cats = []
    pc = 0
    for b in func.blocks:
        for inst in b.instructions:
            op[pc] = OPCODE_INDEX[inst.opcode]
            ids[pc] = inst.id
            if inst.result is not None:
                dst[pc] = regs[inst.result]
            for k, (kind, opnd) in enumerate(zip(inst.spec.args, inst.operands)):
                if isinstance(opnd, Value):
                    okind[pc, k], oval[pc, k] = K_REG, regs[opnd.name]
                elif isinstance(opnd, Imm):
                    okind[pc, k], oval[pc, k] = K_IMM, int(opnd.value)
                elif isinstance(opnd, Buffer):
                    table = gindex if kind == "G" else sindex
                    okind[pc, k], oval[pc, k] = K_BUF, table[opnd.name]
                elif isinstance(opnd, Label):
                    okind[pc, k], oval[pc, k] = K_PC, block_pc[opnd.name]
                elif isinstance(opnd, Slot):
                    okind[pc, k], oval[pc, k] = K_SLOT, opnd.index
            if inst.opcode == "condbr":
                reconv[pc] = block_pc[ipdom[b.label]]
            cat = inst.spec.category
            if inst.opcode in ("and", "or", "xor") and types.get(inst.result) == BOOL:
                cat = BOOL_LOGIC
            cats.append(cat)
            pc += 1

    return Lowered(op, dst, okind, oval, reconv, ids, tuple(cats), max(len(regs), 1),
                   {p.name: regs[p.name] for p in func.params},
                   tuple(b.name for b in gdecl), gbase, gsize, sbase, ssize,
                   int(ssize.sum()), program.local_slots)
