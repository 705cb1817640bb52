"""Public VM API: launch configuration, cost model, execution results."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np

from ..mir import cfg
from ..mir.types import (ARITH, COMPARE, CONTEXT, CONTROL, MEM_GLOBAL, MEM_LOCAL, MEM_SHARED,
                         OPCODES, PARALLEL, RANDOM, SYNC, Function, Program)
from . import interp
from .lower import OPNAMES, Lowered, lower

DEFAULT_BUDGET = 10**9


@dataclass(frozen=True)
class LaunchConfig:
    blocks: int = 1
    threads_per_block: int = 32
    warp_size: int = 32

    def __post_init__(self):
        if min(self.blocks, self.threads_per_block, self.warp_size) < 1:
            raise ValueError("launch dimensions must be >= 1")
        if self.warp_size > 62:
            raise ValueError("warp_size above 62 is not supported")
        if self.threads_per_block % self.warp_size:
            raise ValueError("threads_per_block must be a multiple of warp_size")

    @property
    def warps_per_block(self) -> int:
        return self.threads_per_block // self.warp_size


_CATEGORY_COST = {ARITH: 1, COMPARE: 1, CONTEXT: 1, CONTROL: 2, MEM_SHARED: 8,
                  MEM_GLOBAL: 100, MEM_LOCAL: 2, RANDOM: 4, PARALLEL: 2}
_SYNC_COST = {"bar.warp": 5, "bar.block": 20}


def default_costs() -> dict[str, int]:
    out = {}
    for name, spec in OPCODES.items():
        out[name] = _SYNC_COST[name] if spec.category == SYNC else _CATEGORY_COST[spec.category]
    return out


@dataclass(frozen=True)
class CostModel:
    """Cycle cost per opcode.  Unlisted opcodes keep their default."""
    costs: tuple = field(default_factory=lambda: tuple(sorted(default_costs().items())))

    def __post_init__(self):
        table = dict(self.costs)
        unknown = set(table) - set(OPCODES)
        if unknown:
            raise ValueError(f"unknown opcodes in cost model: {sorted(unknown)}")
        if any(int(v) < 1 for v in table.values()):
            raise ValueError("all opcode costs must be >= 1")

    @classmethod
    def from_dict(cls, overrides: Mapping[str, int]) -> "CostModel":
        table = default_costs()
        for k, v in overrides.items():
            if k not in table:
                raise ValueError(f"unknown opcode {k!r} in cost model")
            table[k] = int(v)
        return cls(tuple(sorted(table.items())))

    @classmethod
    def from_json(cls, path) -> "CostModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def table(self) -> dict[str, int]:
        return dict(self.costs)

    def __getitem__(self, opcode: str) -> int:
        return self.table()[opcode]

    def vector(self) -> np.ndarray:
        return _cost_vector(self.costs)


@lru_cache(maxsize=64)
def _cost_vector(costs: tuple) -> np.ndarray:
    table = dict(costs)
    vec = np.array([table[name] for name in OPNAMES], dtype=np.int64)
    vec.setflags(write=False)
    return vec


DEFAULT_COST_MODEL = CostModel()


@dataclass(frozen=True)
class Fault:
    kind: str  # oob | divzero | deadlock | stack
    inst_id: int


@dataclass
class ExecutionResult:
    outputs: dict            # global buffer name -> int32 array
    cycles: int
    status: str              # completed | timeout | fault
    fault: Optional[Fault]
    opcode_counts: dict      # opcode -> executed warp-instruction count
    category_counts: dict    # category -> executed warp-instruction count
    max_warp_cycles: int
    trace: Optional[list] = None  # rows of (block, warp, mask, id, opcode, cost)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def instruction_mix(self) -> dict:
        return self.opcode_counts

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "fault": None if self.fault is None else {"kind": self.fault.kind,
                                                      "inst_id": self.fault.inst_id},
            "cycles": self.cycles,
            "max_warp_cycles": self.max_warp_cycles,
            "instruction_mix": dict(sorted(self.opcode_counts.items())),
            "category_counts": dict(sorted(self.category_counts.items())),
            "outputs": {k: v.tolist() for k, v in self.outputs.items()},
        }


_lower_cache: dict = {}


def _lowered(program: Program) -> Lowered:
    # equality ignores ids, so key on them too; fault/trace report ids
    key = (program, tuple(program.ids()))
    low = _lower_cache.get(key)
    if low is None:
        if len(_lower_cache) > 512:
            _lower_cache.clear()
        low = lower(program)
        _lower_cache[key] = low
    return low


def _global_memory(low: Lowered, inputs: Optional[Mapping]) -> np.ndarray:
    gmem = np.zeros(int(low.global_size.sum()) if len(low.global_size) else 0, np.int64)
    for name, data in (inputs or {}).items():
        if name not in low.global_names:
            raise ValueError(f"input for undeclared global buffer @{name}")
        k = low.global_names.index(name)
        arr = np.asarray(data, dtype=np.int64).ravel()
        if len(arr) > low.global_size[k]:
            raise ValueError(f"input for @{name} has {len(arr)} values, capacity {low.global_size[k]}")
        base = low.global_base[k]
        gmem[base:base + len(arr)] = arr
    return gmem


def launch(program: Program, config: LaunchConfig = LaunchConfig(), inputs: Optional[Mapping] = None,
           args: Optional[Mapping] = None, seed: int = 0, cycle_budget: int = DEFAULT_BUDGET,
           cost_model: CostModel = DEFAULT_COST_MODEL, trace: bool = False) -> ExecutionResult:
    """Run the kernel of ``program``.

    ``inputs`` maps global buffer names to initial contents (a prefix of the
    declared capacity; the rest is zero).  ``args`` binds kernel parameters by
    name; unbound parameters are 0.  The call is a pure function of its
    arguments.
    """
    low = _lowered(program)
    args = dict(args or {})
    unknown = set(args) - set(low.param_regs)
    if unknown:
        raise ValueError(f"unknown kernel parameters: {sorted(unknown)}")
    pnames = list(low.param_regs)
    param_regs = np.array([low.param_regs[p] for p in pnames], dtype=np.int64)
    param_vals = np.array([interp.wrap32(int(args.get(p, 0))) for p in pnames], dtype=np.int64)
    cost = cost_model.vector()[low.op]
    cap = 1 << 16 if trace else 1
    while True:
        gmem = _global_memory(low, inputs)
        buf = np.zeros((cap, interp.TRACE_COLS), np.int64)
        status, fkind, fpc, total, max_wc, tlen, counts = interp.run(
            low.op, low.dst, low.okind, low.oval, low.reconv, cost,
            config.blocks, config.threads_per_block, config.warp_size, low.nregs,
            param_regs, param_vals, low.local_slots, gmem, low.global_base, low.global_size,
            low.shared_base, low.shared_size, low.shared_total,
            int(seed), int(cycle_budget), buf, bool(trace))
        if not trace or tlen <= cap:
            break
        cap = int(tlen) + 1

    outputs = {}
    for k, name in enumerate(low.global_names):
        base, size = low.global_base[k], low.global_size[k]
        outputs[name] = gmem[base:base + size].astype(np.int32)
    op_counts: dict[str, int] = {}
    cat_counts: dict[str, int] = {}
    for pc in np.nonzero(counts)[0]:
        name = OPNAMES[low.op[pc]]
        op_counts[name] = op_counts.get(name, 0) + int(counts[pc])
        cat = low.categories[pc]
        cat_counts[cat] = cat_counts.get(cat, 0) + int(counts[pc])
    status_name = {interp.ST_COMPLETED: "completed", interp.ST_TIMEOUT: "timeout",
                   interp.ST_FAULT: "fault"}[int(status)]
    fault = None
    if status == interp.ST_FAULT:
        fault = Fault(interp.FAULT_NAMES[int(fkind)], int(low.ids[fpc]))
    rows = None
    if trace:
        rows = [(int(b), int(w), int(m), int(low.ids[pc]), OPNAMES[int(o)], int(c))
                for b, w, m, pc, o, c in buf[:tlen]]
    return ExecutionResult(outputs, int(total), status_name, fault, op_counts, cat_counts,
                           int(max_wc), rows)


def format_trace(result: ExecutionResult) -> str:
    """One executed warp-instruction per line: block warp mask id opcode cost."""
    if result.trace is None:
        raise ValueError("launch was not traced")
    return "".join(f"{b} {w} {m:#x} {i} {o} {c}\n" for b, w, m, i, o, c in result.trace)


MIX_GROUPS = (ARITH, COMPARE, MEM_GLOBAL, MEM_SHARED, MEM_LOCAL, SYNC, CONTROL, CONTEXT,
              PARALLEL, RANDOM)


def instruction_mix(result: ExecutionResult) -> dict[str, float]:
    """Fraction of executed warp-instructions per category.

    ``compare`` covers icmp and boolean and/or/xor (boundary logic).
    """
    total = sum(result.category_counts.values())
    if total == 0:
        return {c: 0.0 for c in MIX_GROUPS}
    return {c: result.category_counts.get(c, 0) / total for c in MIX_GROUPS}


def post_dominators(function: Function) -> dict[str, str]:
    return cfg.post_dominators(function)
