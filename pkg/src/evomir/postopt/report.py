"""Source annotations and the serialized analysis report."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

from ..evo.edits import INST_COPY, OPERAND_REPLACE, ApplyError, Edit, apply_edit
from ..mir.printer import format_instruction
from ..mir.types import Program
from .analysis import (History, InteractionGraph, Separation, SubsetTable, WeakResult,
                       canonical_order, discovery_history, enumerate_subsets, interaction_graph,
                       minimize_weak_edits, separate_edits)
from .oracle import Oracle, failed

EDGE_RULE = ("i -> j: every evaluated subset containing i but not j fails or shows i's "
             "marginal improvement below the threshold")


def source_map(edit: Edit, seed_program: Program, earlier=()) -> str:
    """Human-readable location of ``edit``: function, block, source line and IR.

    Ids created by ``earlier`` edits are resolved by replaying them on the
    seed; ids that still cannot be found give a synthetic location.
    """
    prog = seed_program
    anchor = edit.target if edit.target is not None else edit.donor
    if prog.find(anchor) is None and earlier:
        for e in earlier:
            try:
                prog = apply_edit(prog, e)
            except ApplyError:
                break
    hit = prog.find(anchor)
    if hit is None:
        return f"{edit.kind}#{edit.uid}: synthetic/derived location"
    func, block, k = hit
    inst = block.instructions[k]
    loc = inst.loc or "?"
    text = format_instruction(inst).split(" !")[0]
    out = f"{edit.kind}#{edit.uid} @{func.name}/{block.label} {loc}: {text}"
    if edit.kind == OPERAND_REPLACE:
        out += f" [operand {edit.index} -> %{edit.value}]"
    elif edit.kind == INST_COPY:
        before = prog.instruction(edit.before)
        where = prog.find(edit.before)
        if before is not None:
            out += f" [copied before {format_instruction(before).split(' !')[0]} in {where[1].label}]"
    elif edit.donor is not None:
        donor = prog.instruction(edit.donor)
        if donor is not None:
            out += f" [donor {donor.loc or '?'}: {format_instruction(donor).split(' !')[0]}]"
    elif edit.other is not None:
        other = prog.instruction(edit.other)
        if other is not None:
            out += f" [with {other.loc or '?'}: {format_instruction(other).split(' !')[0]}]"
    return out


@dataclass
class AnalysisReport:
    edits: list
    baseline: float
    full_fitness: Optional[float] = None
    theta: float = 0.01
    tol: float = 0.01
    weaks: Optional[list] = None
    kept_fitness: Optional[float] = None
    independent: Optional[dict] = None
    epistatic: Optional[list] = None
    subset_table: Optional[SubsetTable] = None
    graph: Optional[InteractionGraph] = None
    history: Optional[History] = None
    annotations: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def perf(v):
            return None if v is None or failed(v) else (self.baseline - v) / self.baseline

        d = {
            "edits": list(self.edits),
            "baseline_cycles": self.baseline,
            "full_cycles": self.full_fitness,
            "full_improvement": perf(self.full_fitness),
            "theta": self.theta,
            "tol": self.tol,
            "stages": list(self.stages),
            "weaks": self.weaks,
            "kept_cycles": self.kept_fitness,
            "kept_improvement": perf(self.kept_fitness),
            "independent": None if self.independent is None else
            [{"edit": u, "perf_incr": p} for u, p in self.independent.items()],
            "epistatic": self.epistatic,
            "subset_table": None,
            "clusters": None,
            "dependency_edges": None,
            "edge_rule": EDGE_RULE,
            "history": None,
            "annotations": {str(k): v for k, v in self.annotations.items()},
        }
        if self.subset_table is not None:
            d["subset_table"] = [{"edits": list(m), "cycles": None if failed(v) else v}
                                 for m, v in self.subset_table.rows()]
        if self.graph is not None:
            d["clusters"] = [{"edits": list(c), "improvement": imp}
                             for c, imp in zip(self.graph.clusters, self.graph.improvements)]
            d["dependency_edges"] = [list(e) for e in self.graph.edges]
        if self.history is not None:
            d["history"] = {
                "first_generation": {str(u): g for u, g in self.history.first_seen.items()},
                "groups": [{"generation": g, "edits": list(us)} for g, us in self.history.groups],
            }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_dot(self) -> str:
        lines = ["digraph edits {", "  // edge i -> j: edit i requires edit j", "  rankdir=LR;"]
        if self.graph is not None:
            for k, (cluster, imp) in enumerate(zip(self.graph.clusters, self.graph.improvements)):
                label = "failed" if imp is None else f"{imp * 100:.2f}%"
                lines.append(f"  subgraph cluster_{k} {{")
                lines.append(f'    label="{label}";')
                for u in cluster:
                    note = self.annotations.get(u, "").replace('"', "'")
                    lines.append(f'    e{u} [label="{u}", tooltip="{note}"];')
                lines.append("  }")
            for i, j in self.graph.edges:
                lines.append(f"  e{i} -> e{j};")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["edits", "size", "cycles", "improvement", "status"])
        if self.subset_table is not None:
            for members, v in self.subset_table.rows():
                if failed(v):
                    w.writerow([" ".join(map(str, members)), len(members), "", "", "failed"])
                else:
                    imp = (self.baseline - v) / self.baseline
                    w.writerow([" ".join(map(str, members)), len(members), v, f"{imp:.6f}", "ok"])
        return buf.getvalue()


def analyze(edits, oracle: Oracle, seed_program: Optional[Program] = None, generation_log=None,
            minimize: bool = True, separate: bool = True, clusters: bool = True,
            history: bool = True, theta: float = 0.01, tol: float = 0.01,
            jobs: int = 1) -> AnalysisReport:
    """Run the stages in order: weak-edit minimization, separation, cluster
    enumeration over the epistatic set, discovery history.  Requesting a
    later stage runs the stages it depends on.

    ``edits`` are Edit records or bare uids; only records get source
    annotations.
    """
    edits = list(edits)
    by_uid = {getattr(e, "uid", e): e for e in edits}
    hist = discovery_history(generation_log, list(by_uid)) if generation_log is not None else None
    first_seen = hist.first_seen if hist is not None else None
    order = canonical_order(by_uid, first_seen)
    report = AnalysisReport(order, oracle(()), oracle(order), theta, tol)
    if failed(report.full_fitness):
        raise ValueError("the full edit set fails its suite")
    if seed_program is not None and all(isinstance(e, Edit) for e in edits):
        listed = list(by_uid)
        for u in order:
            earlier = [by_uid[v] for v in listed[:listed.index(u)]]
            report.annotations[u] = source_map(by_uid[u], seed_program, earlier)

    separate = separate or clusters
    current = order
    if minimize:
        res: WeakResult = minimize_weak_edits(current, oracle, theta, first_seen)
        report.weaks, report.kept_fitness = res.weaks, res.kept_fitness
        report.stages.append("minimize")
        current = res.kept
    if separate:
        sep: Separation = separate_edits(current, oracle, tol, first_seen)
        report.independent, report.epistatic = sep.independent, sep.epistatic
        report.stages.append("separate")
    if clusters:
        table = enumerate_subsets(report.epistatic, oracle, jobs)
        report.subset_table = table
        report.graph = interaction_graph(table, theta)
        report.stages.append("clusters")
    if history and hist is not None:
        report.history = hist
        report.stages.append("history")
    return report
