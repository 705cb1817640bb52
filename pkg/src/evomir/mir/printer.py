from __future__ import annotations

from .types import Instruction, Program


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_instruction(inst: Instruction) -> str:
    head = f"%{inst.result} = {inst.opcode}" if inst.result is not None else inst.opcode
    text = head
    if inst.operands:
        text += " " + ", ".join(str(op) for op in inst.operands)
    if inst.loc is not None:
        text += " !" + _quote(inst.loc)
    return text


def print_program(program: Program) -> str:
    """Canonical text form; structurally equal programs print identically."""
    out = []
    for key, value in program.metadata:
        out.append(f"meta {key} {_quote(value)}")
    for b in program.buffers:
        out.append(f"{b.space} @{b.name}[i32 x {b.size}]")
    if program.local_slots:
        out.append(f"local [i32 x {program.local_slots}]")
    if out:
        out.append("")
    many = len(program.functions) > 1
    for f in program.functions:
        params = ", ".join(f"%{p.name}: {p.type}" for p in f.params)
        prefix = "kernel fn" if many and f.name == program.entry else "fn"
        out.append(f"{prefix} @{f.name}({params}) {{")
        for b in f.blocks:
            out.append(f"{b.label}:")
            for inst in b.instructions:
                out.append("  " + format_instruction(inst))
        out.append("}")
        out.append("")
    return "\n".join(out)
