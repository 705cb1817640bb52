"""Weak-edit minimization, independent/epistatic separation, subset
enumeration, interaction graphs and discovery histories.

Fitness values are cycles (lower is better), so an improvement is a
relative cycle reduction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional

from .oracle import FAILURE, Oracle, failed

MAX_ENUMERATED = 20
RESCUE = "rescue"  # marginal of an edit that turns a failing subset into a passing one


def canonical_order(edits: Iterable[int], first_seen: Optional[dict] = None) -> list:
    """Ascending first-appearance generation, then uid; unseen edits last."""
    first_seen = first_seen or {}
    inf = float("inf")
    return sorted(edits, key=lambda u: (first_seen.get(u) if first_seen.get(u) is not None else inf, u))


@dataclass
class WeakResult:
    kept: list
    weaks: list
    full_fitness: float
    kept_fitness: float


def minimize_weak_edits(edits, oracle: Oracle, theta: float = 0.01,
                        first_seen: Optional[dict] = None) -> WeakResult:
    """An edit is weak when keeping it (in the context of the edits not yet
    found weak) reduces cycles by less than ``theta`` relative to the
    fitness without it.  Removal that causes a failure keeps the edit."""
    order = canonical_order(edits, first_seen)
    full = oracle(order)
    if failed(full):
        raise ValueError("the full edit set fails; nothing to minimize")
    weaks: list = []
    current = full
    for e in order:
        rest = [u for u in order if u not in weaks]
        without = oracle([u for u in rest if u != e])
        if failed(without):
            continue
        gain = (without - current) / without
        if gain < theta:
            weaks.append(e)
            current = without
    kept = [u for u in order if u not in weaks]
    return WeakResult(kept, weaks, full, current)


@dataclass
class Separation:
    independent: dict  # uid -> PerfIncr
    epistatic: list
    perf_decr: dict = field(default_factory=dict)


def separate_edits(edits, oracle: Oracle, tol: float = 0.01,
                   first_seen: Optional[dict] = None) -> Separation:
    """An edit is independent when it applies on its own and can be removed
    from the remaining set, and its standalone improvement agrees within
    ``tol`` with its in-context improvement.  Both improvements are measured
    as fractions of the baseline cycles."""
    order = canonical_order(edits, first_seen)
    if failed(oracle(order)):
        raise ValueError("the full edit set fails; nothing to separate")
    base = oracle(())
    indep: dict = {}
    decr: dict = {}
    for e in order:
        alone = oracle([e])
        rest = [u for u in order if u not in indep]
        without = oracle([u for u in rest if u != e])
        if failed(alone) or failed(without):
            continue
        with_e = oracle(rest)
        if failed(with_e):
            continue
        perf_incr = (base - alone) / base
        perf_decr = (without - with_e) / base
        decr[e] = perf_decr
        if abs(perf_incr - perf_decr) <= tol:
            indep[e] = perf_incr
    return Separation(indep, [u for u in order if u not in indep], decr)


@dataclass
class SubsetTable:
    edits: tuple
    values: dict  # bitmask over ``edits`` -> cycles or FAILURE

    def __getitem__(self, subset) -> object:
        return self.values[self.mask(subset)]

    def mask(self, subset) -> int:
        pos = {u: k for k, u in enumerate(self.edits)}
        m = 0
        for u in subset:
            m |= 1 << pos[u]
        return m

    def members(self, mask: int) -> tuple:
        return tuple(u for k, u in enumerate(self.edits) if mask >> k & 1)

    @property
    def baseline(self) -> float:
        return self.values[0]

    def perf(self, mask: int):
        v = self.values[mask]
        return FAILURE if failed(v) else (self.baseline - v) / self.baseline

    def rows(self):
        for mask in sorted(self.values, key=lambda m: (bin(m).count("1"), m)):
            yield self.members(mask), self.values[mask]


def enumerate_subsets(edits, oracle: Oracle, jobs: int = 1) -> SubsetTable:
    edits = tuple(edits)
    if len(edits) > MAX_ENUMERATED:
        raise ValueError(f"refusing to enumerate 2^{len(edits)} subsets (limit {MAX_ENUMERATED} edits); "
                         "minimize and separate the edit set first")
    masks = list(range(1 << len(edits)))
    subsets = [[u for k, u in enumerate(edits) if m >> k & 1] for m in masks]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            vals = list(pool.map(oracle, subsets))
    else:
        vals = [oracle(s) for s in subsets]
    return SubsetTable(edits, dict(zip(masks, vals)))


def marginal(table: SubsetTable, i: int, mask: int):
    """Change in improvement from adding edit index ``i`` to subset ``mask``.

    FAILURE when the subset with the edit fails, RESCUE when only the subset
    without it fails, else the numeric difference."""
    with_i = table.perf(mask | 1 << i)
    if failed(with_i):
        return FAILURE
    without = table.perf(mask & ~(1 << i))
    if failed(without):
        return RESCUE
    return with_i - without


def _differs(a, b, theta: float) -> bool:
    if isinstance(a, float) and isinstance(b, float):
        return abs(a - b) > theta
    return type(a) is not type(b) or a != b


@dataclass
class InteractionGraph:
    clusters: list           # tuples of uids
    edges: list              # (i, j): i requires j
    improvements: list       # per cluster: perf(cluster) - perf(empty)
    interactions: list       # undirected interacting pairs


def interaction_graph(table: SubsetTable, theta: float = 0.01) -> InteractionGraph:
    """Clusters of interacting edits and dependency edges inside them.

    i and j interact when some context T (without both) changes i's marginal
    by more than ``theta`` once j is added, or changes its kind (failure,
    rescue, number).  Clusters are the connected components.  i -> j when
    every subset containing i but not j either fails or shows i's marginal
    below ``theta``.
    """
    n = len(table.edits)
    full = (1 << n) - 1
    inter = set()
    for i, j in combinations(range(n), 2):
        rest = full & ~(1 << i) & ~(1 << j)
        found = False
        t = rest
        while True:
            if (_differs(marginal(table, i, t | 1 << j), marginal(table, i, t), theta)
                    or _differs(marginal(table, j, t | 1 << i), marginal(table, j, t), theta)):
                found = True
                break
            if t == 0:
                break
            t = (t - 1) & rest
        if found:
            inter.add((i, j))

    parent = list(range(n))

    def root(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in inter:
        parent[root(i)] = root(j)
    groups: dict = {}
    for k in range(n):
        groups.setdefault(root(k), []).append(k)
    comps = sorted(groups.values(), key=lambda g: (-len(g), g))

    edges = []
    for comp in comps:
        for i in comp:
            for j in comp:
                if i != j and _requires(table, i, j, theta):
                    edges.append((table.edits[i], table.edits[j]))
    clusters, improvements = [], []
    for comp in comps:
        mask = 0
        for k in comp:
            mask |= 1 << k
        p = table.perf(mask)
        clusters.append(tuple(table.edits[k] for k in comp))
        improvements.append(None if failed(p) else p)
    pairs = sorted((table.edits[i], table.edits[j]) for i, j in inter)
    return InteractionGraph(clusters, sorted(edges), improvements, pairs)


def _requires(table: SubsetTable, i: int, j: int, theta: float) -> bool:
    n = len(table.edits)
    others = ((1 << n) - 1) & ~(1 << i) & ~(1 << j)
    t = others
    while True:
        m = marginal(table, i, t)
        if not (failed(m) or (isinstance(m, float) and m < theta)):
            return False
        if t == 0:
            return True
        t = (t - 1) & others


@dataclass
class History:
    first_seen: dict         # uid -> first generation present in any individual (None: never)
    groups: list             # (generation, uids of the final edits in that generation's best)


def discovery_history(generation_log, final_edits) -> History:
    final = list(final_edits)
    first: dict = {u: None for u in final}
    groups = []
    last = None
    for rec in generation_log:
        present = set()
        for ind in rec.individuals:
            present.update(ind)
        for u in final:
            if first[u] is None and u in present:
                first[u] = rec.generation
        best = set(rec.best_uids)
        group = tuple(u for u in final if u in best)
        if group != last:
            groups.append((rec.generation, group))
            last = group
    return History(first, groups)
