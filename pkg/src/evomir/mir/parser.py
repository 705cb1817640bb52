"""Text -> Program.  The grammar is documented in docs/ir.md."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .types import (BOOL, I32, OPCODES, Block, Buffer, BufferDecl, Function, Imm,
                    Instruction, Label, Param, Program, Slot, Value)

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>;[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<value>%[A-Za-z0-9_.]+)
  | (?P<global>@[A-Za-z0-9_.]+)
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<punct>[{}()\[\],:=!])
""", re.VERBOSE)


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0
        self.next_id = 1

    # -- token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def error(self, message: str, tok: _Tok = None):
        tok = tok or self.tok
        raise ParseError(message, tok.line, tok.col)

    def advance(self) -> _Tok:
        tok = self.tok
        self.pos += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("punct", "ident"):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text:
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> _Tok:
        if self.tok.kind != kind:
            self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    # -- grammar
    def program(self) -> Program:
        functions, buffers, meta = [], [], []
        local_slots = 0
        while self.tok.kind != "eof":
            t = self.tok
            if t.text == "meta":
                self.advance()
                key = self.expect_kind("ident", "metadata key").text
                meta.append((key, _unquote(self.expect_kind("string", "string").text)))
            elif t.text in ("global", "shared"):
                self.advance()
                name = self.expect_kind("global", "buffer name").text[1:]
                size = self._array_type()
                if any(b.name == name for b in buffers):
                    self.error(f"duplicate buffer @{name}", t)
                buffers.append(BufferDecl(t.text, name, size))
            elif t.text == "local":
                self.advance()
                local_slots = self._array_type()
            elif t.text in ("fn", "kernel"):
                functions.append(self.function(buffers, local_slots))
            else:
                self.error(f"unexpected {t.text!r} at top level")
        if not functions:
            self.error("program defines no function")
        kernels = [f for f in functions if f.kernel]
        if len(kernels) > 1:
            raise ParseError("more than one kernel function", 1, 1)
        if not kernels and len(functions) > 1:
            raise ParseError("several functions but none marked 'kernel'", 1, 1)
        entry = kernels[0].name if kernels else functions[0].name
        functions = [replace(f, kernel=(f.name == entry)) for f in functions]
        return Program(tuple(functions), entry, tuple(buffers), local_slots, tuple(meta))

    def _array_type(self) -> int:
        self.expect("[")
        self.expect("i32")
        self.expect("x")
        size = int(self.expect_kind("int", "array size").text)
        self.expect("]")
        if size < 1:
            self.error("array size must be positive")
        return size

    def function(self, buffers, local_slots) -> Function:
        kernel = self.accept("kernel")
        self.expect("fn")
        name = self.expect_kind("global", "function name").text[1:]
        self.expect("(")
        params = []
        while not self.accept(")"):
            if params:
                self.expect(",")
            pname = self.expect_kind("value", "parameter").text[1:]
            self.expect(":")
            ptype = self.expect_kind("ident", "type").text
            if ptype not in (I32, BOOL):
                self.error(f"unknown type {ptype!r}")
            params.append(Param(pname, ptype))
        self.expect("{")
        blocks = []
        label, insts = None, []
        uses = []  # (name, tok) for definedness check
        labels_used = []
        while not self.accept("}"):
            if self.tok.kind == "ident" and self.peek().text == ":":
                if label is not None:
                    blocks.append(Block(label, tuple(insts)))
                label = self.advance().text
                self.advance()
                insts = []
                continue
            if label is None:
                self.error("instruction outside of a block")
            insts.append(self.instruction(buffers, local_slots, uses, labels_used))
        if label is None:
            self.error("function has no blocks")
        blocks.append(Block(label, tuple(insts)))

        defined = {p.name for p in params}
        for b in blocks:
            for inst in b.instructions:
                if inst.result is not None:
                    defined.add(inst.result)
        for vname, tok in uses:
            if vname not in defined:
                raise ParseError(f"undefined value %{vname}", tok.line, tok.col)
        block_names = {b.label for b in blocks}
        if len(block_names) != len(blocks):
            self.error(f"duplicate block label in @{name}")
        for lname, tok in labels_used:
            if lname not in block_names:
                raise ParseError(f"undefined label {lname}", tok.line, tok.col)
        return Function(name, tuple(params), tuple(blocks), kernel)

    def instruction(self, buffers, local_slots, uses, labels_used) -> Instruction:
        result = None
        if self.tok.kind == "value":
            result = self.advance().text[1:]
            self.expect("=")
        op_tok = self.expect_kind("ident", "opcode")
        spec = OPCODES.get(op_tok.text)
        if spec is None:
            self.error(f"unknown opcode {op_tok.text!r}", op_tok)
        if (result is not None) != (spec.result is not None):
            self.error(f"{op_tok.text} {'produces' if spec.result else 'has no'} result", op_tok)
        operands = []
        for k, kind in enumerate(spec.args):
            if k:
                self.expect(",")
            operands.append(self.operand(kind, buffers, local_slots, uses, labels_used))
        loc = None
        if self.accept("!"):
            loc = _unquote(self.expect_kind("string", "location string").text)
        inst = Instruction(op_tok.text, result, tuple(operands), loc, self.next_id)
        self.next_id += 1
        return inst

    def operand(self, kind, buffers, local_slots, uses, labels_used):
        t = self.tok
        if kind in "iba":
            if t.kind == "value":
                self.advance()
                uses.append((t.text[1:], t))
                return Value(t.text[1:])
            if t.kind == "int":
                self.advance()
                return Imm(_wrap32(int(t.text)))
            if t.text in ("true", "false"):
                self.advance()
                return Imm(t.text == "true")
            self.error(f"expected value operand, found {t.text!r}")
        if kind in "GS":
            space = "global" if kind == "G" else "shared"
            tok = self.expect_kind("global", f"{space} buffer")
            name = tok.text[1:]
            if not any(b.name == name and b.space == space for b in buffers):
                raise ParseError(f"undeclared {space} buffer @{name}", tok.line, tok.col)
            return Buffer(name)
        if kind == "K":
            tok = self.expect_kind("int", "local slot")
            return Slot(int(tok.text))
        if kind == "L":
            tok = self.expect_kind("ident", "block label")
            labels_used.append((tok.text, tok))
            return Label(tok.text)
        raise AssertionError(kind)


def _wrap32(v: int) -> int:
    return ((v + 2**31) % 2**32) - 2**31


def _unquote(s: str) -> str:
    body = s[1:-1]
    return re.sub(r"\\(.)", r"\1", body)


def parse(text: str) -> Program:
    """Parse IR text.  Raises ParseError with line and column on bad input."""
    return _Parser(text).program()
