"""Hand-written edit sets for the planted inefficiencies of the corpus.

These are the targets the search is expected to find, expressed as ordinary
edits so they can be materialized, evaluated and analysed like search output.
"""

from __future__ import annotations

from ..evo.edits import INST_DELETE, OPERAND_REPLACE, Edit
from ..mir import parse, print_program
from ..mir.types import Instruction, Program
from .kernels import load_kernel


def find_instruction(program: Program, opcode: str, loc: str, nth: int = 0) -> Instruction:
    hits = [i for i in program.instructions() if i.opcode == opcode and i.loc == loc]
    if len(hits) <= nth:
        raise LookupError(f"no {opcode} at {loc}")
    return hits[nth]


def _condbr_cond(program, loc, value, uid):
    inst = find_instruction(program, "condbr", loc)
    return Edit(OPERAND_REPLACE, uid, target=inst.id, index=0, value=value, source_locs=(loc,))


def planted_quad(program: Program = None) -> dict:
    """The four interdependent guard edits on the tuned SW kernel, keyed by uid.

    5   writer A (per-warp boundary cells) disabled
    6   writer B (full shared staging) enabled
    8   reader E (left neighbour) switched from shuffle to shared memory
    10  reader H (diagonal neighbour) switched from shuffle to shared memory
    """
    p = program or load_kernel("sw_tuned")
    return {
        5: _condbr_cond(p, "sw_tuned.cu:28", "late", 5),
        6: _condbr_cond(p, "sw_tuned.cu:33", "more", 6),
        8: _condbr_cond(p, "sw_tuned.cu:41", "more", 8),
        10: _condbr_cond(p, "sw_tuned.cu:52", "more", 10),
    }


def uniform_exchange_edits(program: Program = None) -> list:
    """Edits 6, 8 and 10: replace the divergent shuffle exchange by shared memory."""
    quad = planted_quad(program)
    return [quad[6], quad[8], quad[10]]


def memset_removal_edits(program: Program = None, first_uid: int = 1) -> list:
    """Delete the three redundant shared-memory initialisation loops' stores
    and the barriers that follow them, and make each loop run once."""
    p = program or load_kernel("sw_naive")
    edits = []
    uid = first_uid
    for line, barrier_line in ((22, 23), (25, 26), (28, 29)):
        loc = f"sw_naive.cu:{line}"
        store = next(i for i in p.instructions() if i.opcode == "st.shared" and i.loc == loc)
        cmp_ = find_instruction(p, "icmp.slt", loc)
        bar = find_instruction(p, "bar.block", f"sw_naive.cu:{barrier_line}")
        edits.append(Edit(INST_DELETE, uid, target=store.id, source_locs=(loc,)))
        # the loop bound becomes the gap penalty (negative): one trip
        edits.append(Edit(OPERAND_REPLACE, uid + 1, target=cmp_.id, index=1, value="gap",
                          source_locs=(loc,)))
        edits.append(Edit(INST_DELETE, uid + 2, target=bar.id, source_locs=(bar.loc,)))
        uid += 3
    return edits


def guard_removal_edits(program: Program = None, first_uid: int = 1) -> list:
    """Replace every neighbour guard of the checked diffusion kernel by the
    in-grid test alone, as if the boundary comparisons had been deleted."""
    p = program or load_kernel("grid_diffusion_checked")
    edits = []
    for k, line in enumerate((26, 31, 36, 41)):
        edits.append(_condbr_cond(p, f"diffusion_checked.cu:{line}", "inb", first_uid + k))
    return edits


def biased_walk(program: Program = None) -> Program:
    """Negative control: the walk never picks direction 1 or 3 (always +x / +y)."""
    p = program or load_kernel("tcell_walk")
    text = print_program(p)
    if "and %r, 3" not in text:
        raise LookupError("direction mask not found")
    return parse(text.replace("and %r, 3", "and %r, 2"))
