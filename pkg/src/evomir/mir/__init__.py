"""Minimal SSA-style parallel IR: data model, text format, verifier."""

from .cfg import immediate_dominators, post_dominators
from .parser import ParseError, parse
from .printer import format_instruction, print_program
from .types import (BOOL, I32, OPCODES, TERMINATORS, Block, Buffer, BufferDecl, Function,
                    Imm, Instruction, Label, Param, Program, Slot, Value, value_types)
from .verify import Violation, is_valid, verify

print_ = print_program

__all__ = [
    "BOOL", "I32", "OPCODES", "TERMINATORS", "Block", "Buffer", "BufferDecl", "Function",
    "Imm", "Instruction", "Label", "Param", "ParseError", "Program", "Slot", "Value",
    "Violation", "format_instruction", "immediate_dominators", "is_valid", "parse",
    "post_dominators", "print_program", "value_types", "verify",
]
