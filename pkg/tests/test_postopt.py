import random
import threading
from itertools import combinations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evomir.bench import gen_sw_suite, load_kernel
from evomir.bench.planted import memset_removal_edits, planted_quad
from evomir.evo import FRESH_ID_BASE, INST_COPY, INST_DELETE, OPERAND_REPLACE, Edit
from evomir.evo.search import GenerationRecord
from evomir.postopt import (FAILURE, MAX_ENUMERATED, FunctionOracle, ProgramOracle, analyze,
                            discovery_history, enumerate_subsets, failed, interaction_graph,
                            minimize_weak_edits, separate_edits, source_map)

BASE = 1000.0


def additive(gains, base=BASE):
    return lambda s: base - sum(gains[u] for u in s)


class Counting:
    """Wraps a landscape and counts raw calls."""

    def __init__(self, fn):
        self.fn, self.calls = fn, 0
        self.lock = threading.Lock()

    def __call__(self, s):
        with self.lock:
            self.calls += 1
        return self.fn(s)


def all_subsets(items):
    items = list(items)
    for r in range(len(items) + 1):
        yield from (frozenset(c) for c in combinations(items, r))


def random_table(rng, edits, fail_p=0.15):
    """Random landscape over every subset: additive part, pairwise terms, failures."""
    gains = {u: rng.choice([0.0, rng.uniform(-20, 80)]) for u in edits}
    pairs = {frozenset(p): rng.choice([0.0, 0.0, rng.uniform(-60, 60)])
             for p in combinations(edits, 2)}
    poison = {frozenset(p) for p in combinations(edits, 2) if rng.random() < fail_p / 3}
    table = {}
    for s in all_subsets(edits):
        if any(p <= s for p in poison) or (len(s) == 1 and rng.random() < fail_p):
            table[s] = FAILURE
        else:
            table[s] = BASE - sum(gains[u] for u in s) - sum(v for p, v in pairs.items() if p <= s)
    table[frozenset()] = BASE
    table[frozenset(edits)] = BASE - 100 if failed(table[frozenset(edits)]) else table[frozenset(edits)]
    return table


# independent statement of the separation rule, evaluated against a full table
def reference_separation(order, table, tol):
    f = table.__getitem__
    S = frozenset(order)
    base = f(frozenset())
    indep = set()
    for e in order:
        alone, without = f(frozenset([e])), f(S - indep - {e})
        rest = f(S - indep)
        if FAILURE in (alone, without, rest):
            continue
        if abs((base - alone) / base - (without - rest) / base) <= tol:
            indep.add(e)
    return indep


# -- minimize_weak_edits ----------------------------------------------------

def test_padding_edits_are_exactly_the_weaks():
    effective = {101: 120.0, 102: 90.0, 103: 60.0}
    padding = list(range(1, 11))
    edits = padding + list(effective)
    gains = dict.fromkeys(padding, 0.0) | effective

    def f(s):
        # 102 only works together with 101; otherwise a plain additive landscape
        if 102 in s and 101 not in s:
            return None
        return additive(gains)(s)

    # brute force: padding is a no-op in every context, the others never are
    for s in all_subsets(edits):
        for p in padding:
            assert f(s | {p}) == f(s - {p})
        for e in effective:
            with_e, without = f(s | {e}), f(s - {e})
            if with_e is not None and without is not None:
                assert (without - with_e) / without >= 0.01
    res = minimize_weak_edits(edits, FunctionOracle(edits, f))
    assert sorted(res.weaks) == padding
    assert sorted(res.kept) == sorted(effective)
    assert res.kept_fitness == res.full_fitness


def test_minimize_empty_set():
    res = minimize_weak_edits([], FunctionOracle([], lambda s: BASE))
    assert (res.kept, res.weaks) == ([], [])


def test_failing_removal_keeps_the_edit():
    f = lambda s: None if s == frozenset({2}) else BASE - (1.0 if 2 in s else 0.0)
    res = minimize_weak_edits([1, 2], FunctionOracle([1, 2], f))
    # removing 1 leaves {2}, which fails, so 1 stays although it gains nothing
    assert res.kept == [1]
    assert res.weaks == [2]


def test_minimize_order_follows_first_seen():
    # two redundant edits: whichever is visited first is the weak one
    f = lambda s: BASE - (50.0 if s & {1, 2} else 0.0)
    first = minimize_weak_edits([1, 2], FunctionOracle([1, 2], f))
    assert first.weaks == [1]
    swapped = minimize_weak_edits([1, 2], FunctionOracle([1, 2], f), first_seen={1: 5, 2: 3})
    assert swapped.weaks == [2]


@given(st.integers(0, 12), st.integers(0, 10_000))
def test_minimize_call_bound(n, seed):
    rng = random.Random(seed)
    edits = list(range(n))
    gains = {u: rng.choice([0.0, 0.5, 30.0]) for u in edits}
    fn = Counting(additive(gains))
    oracle = FunctionOracle(edits, fn)
    minimize_weak_edits(edits, oracle)
    assert oracle.evaluations == fn.calls <= n + 1


# -- separate_edits ---------------------------------------------------------

@given(st.lists(st.floats(0, 100), min_size=1, max_size=10))
def test_additive_landscape_is_all_independent(gains):
    edits = list(range(len(gains)))
    oracle = FunctionOracle(edits, additive(dict(enumerate(gains))))
    sep = separate_edits(edits, oracle)
    assert sep.epistatic == []
    for u, g in enumerate(gains):
        assert sep.independent[u] == pytest.approx(g / BASE)
    table = enumerate_subsets(edits, oracle)
    graph = interaction_graph(table)
    assert graph.edges == []
    assert sorted(graph.clusters) == [(u,) for u in edits]


def test_planted_failure_pair_is_epistatic():
    f = lambda s: None if len(s & {1, 2}) == 1 else BASE - (40.0 if {1, 2} <= s else 0) - (10.0 if 3 in s else 0)
    sep = separate_edits([1, 2, 3], FunctionOracle([1, 2, 3], f))
    assert sorted(sep.epistatic) == [1, 2]
    assert sep.independent == {3: pytest.approx(0.01)}


@pytest.mark.parametrize("seed", range(25))
def test_separation_matches_brute_force(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 10)
    edits = list(range(1, n + 1))
    table = random_table(rng, edits)
    fn = Counting(lambda s: table[s])
    oracle = FunctionOracle(edits, fn)
    sep = separate_edits(edits, oracle)
    assert set(sep.independent) == reference_separation(edits, table, 0.01)
    assert set(sep.independent) | set(sep.epistatic) == set(edits)
    assert fn.calls <= 3 * n + 2


def test_separate_call_bound_on_failures():
    f = lambda s: None if len(s) == 1 else BASE - len(s)
    fn = Counting(f)
    edits = list(range(8))
    sep = separate_edits(edits, FunctionOracle(edits, fn))
    assert sep.independent == {}
    assert fn.calls <= 3 * len(edits) + 2


# -- enumerate_subsets / interaction_graph ----------------------------------

def test_enumerate_sizes_and_limit():
    t0 = enumerate_subsets([], FunctionOracle([], lambda s: BASE))
    assert list(t0.rows()) == [((), BASE)]
    fn = Counting(additive({1: 1.0, 2: 2.0, 3: 3.0, 4: 4.0}))
    oracle = FunctionOracle([1, 2, 3, 4], fn)
    t4 = enumerate_subsets([1, 2, 3, 4], oracle)
    assert len(t4.values) == 16 and fn.calls <= 16
    enumerate_subsets([1, 2, 3, 4], oracle)
    assert fn.calls <= 16
    big = list(range(MAX_ENUMERATED + 1))
    with pytest.raises(ValueError, match="minimize"):
        enumerate_subsets(big, FunctionOracle(big, lambda s: BASE))


def test_parallel_enumeration_matches_serial():
    rng = random.Random(4)
    edits = list(range(1, 8))
    table = random_table(rng, edits)
    fn = Counting(lambda s: table[s])
    a = enumerate_subsets(edits, FunctionOracle(edits, lambda s: table[s]))
    oracle = FunctionOracle(edits, fn)
    b = enumerate_subsets(edits, oracle, jobs=4)
    assert list(a.rows()) == list(b.rows())
    assert fn.calls == oracle.evaluations == 2 ** len(edits)


def quad_table():
    """Synthetic stand-in with the planted quad's failure pattern."""
    ok = {frozenset(): BASE, frozenset({6}): BASE * 1.05, frozenset({6, 8}): BASE * 1.015,
          frozenset({6, 10}): BASE * 1.015, frozenset({6, 8, 10}): BASE * 0.977,
          frozenset({5, 6, 8, 10}): BASE * 0.925}
    return lambda s: ok.get(s)


def test_quad_graph_on_synthetic_table():
    oracle = FunctionOracle([5, 6, 8, 10], quad_table())
    graph = interaction_graph(enumerate_subsets([5, 6, 8, 10], oracle))
    assert graph.clusters == [(5, 6, 8, 10)]
    assert set(graph.edges) == {(8, 6), (10, 6), (5, 6), (5, 8), (5, 10)}
    assert graph.improvements[0] == pytest.approx(0.075)


def test_rescue_breaks_a_dependency():
    # 2 fails alone and 1 rescues it: 2 requires 1, but not the other way round
    f = lambda s: None if s == frozenset({2}) else BASE - 20.0 * len(s)
    graph = interaction_graph(enumerate_subsets([1, 2], FunctionOracle([1, 2], f)))
    assert graph.clusters == [(1, 2)]
    assert graph.edges == [(2, 1)]


def test_cluster_and_independent_improvements_reconstruct_total():
    gains = {1: 30.0, 2: 20.0, 3: 0.0}

    def f(s):
        if len(s & {4, 5}) == 1:
            return None
        bonus = 70.0 if {4, 5} <= s else 0.0
        return additive(gains)(s & {1, 2, 3}) - bonus

    edits = [1, 2, 3, 4, 5]
    oracle = FunctionOracle(edits, f)
    report = analyze(edits, oracle)
    assert report.weaks == [3]
    assert sorted(report.independent) == [1, 2]
    assert report.epistatic == [4, 5]
    total = sum(report.graph.improvements) + sum(report.independent.values())
    kept = 1 - report.kept_fitness / BASE
    assert abs(total - kept) <= 4 * 0.01
    assert set(report.weaks) | set(report.independent) | set(report.epistatic) == set(edits)


# -- planted quad on the real kernel ---------------------------------------

@pytest.fixture(scope="module")
def quad_oracle():
    prog = load_kernel("sw_tuned")
    quad = planted_quad(prog)
    suite = gen_sw_suite(n_pairs=4, lengths=(16, 64), seed=3, heldout_pairs=0, kernel="sw_tuned")
    return prog, quad, ProgramOracle(prog, [quad[k] for k in (5, 6, 8, 10)], suite)


def test_planted_quad_table_pattern(quad_oracle):
    _, _, oracle = quad_oracle
    table = enumerate_subsets([5, 6, 8, 10], oracle)
    assert oracle.evaluations <= 16
    for u in (5, 8, 10):
        assert failed(table[{u}])
    assert table.perf(table.mask({6})) < 0.01
    assert table.perf(table.mask({5, 6, 8, 10})) > 0.05
    ok = sorted(tuple(sorted(m)) for m, v in table.rows() if not failed(v))
    assert ok == [(), (5, 6, 8, 10), (6,), (6, 8), (6, 8, 10), (6, 10)]


def test_program_oracle_baseline_matches_seed(quad_oracle):
    from evomir.evo import evaluate_program
    prog, _, oracle = quad_oracle
    assert oracle(()) == evaluate_program(prog, oracle.suite).mean_cycles
    assert oracle.baseline == oracle(())


# -- discovery history ------------------------------------------------------

def rec(gen, individuals, best):
    return GenerationRecord(gen, 1.0, 1.0, 1.0, tuple(best), tuple(tuple(i) for i in individuals))


def test_history_first_generations_and_groups():
    log = [rec(0, [[6], [3]], [6])]
    log += [rec(g, [[6], [6, 3]], [6]) for g in range(1, 47)]
    log += [rec(47, [[6, 8]], [6, 8]), rec(48, [[6, 8], [9]], [6, 8]), rec(49, [[6, 8, 5]], [6, 8, 5])]
    hist = discovery_history(log, [5, 6, 8, 99])
    assert hist.first_seen == {5: 49, 6: 0, 8: 47, 99: None}
    assert hist.groups == [(0, (6,)), (47, (6, 8)), (49, (5, 6, 8))]


# -- source annotations -----------------------------------------------------

def test_source_map_annotations(sw_naive):
    delete, operand = memset_removal_edits(sw_naive)[:2]
    note = source_map(delete, sw_naive)
    block = sw_naive.find(delete.target)[1].label
    assert f"/{block} " in note and "sw_naive.cu:22" in note and "st.shared" in note
    assert "[operand 1 -> %gap]" in source_map(operand, sw_naive)
    bar = next(i for i in sw_naive.instructions() if i.opcode == "bar.block")
    copy = Edit(INST_COPY, 77, donor=bar.id, before=delete.target)
    assert bar.loc in source_map(copy, sw_naive)
    later = Edit(INST_DELETE, 78, target=FRESH_ID_BASE + 77)
    assert bar.loc in source_map(later, sw_naive, [copy])
    dangling = Edit(OPERAND_REPLACE, 79, target=FRESH_ID_BASE + 5, index=0, value="t")
    assert source_map(dangling, sw_naive).endswith("synthetic/derived location")


def test_report_serializations():
    oracle = FunctionOracle([5, 6, 8, 10], quad_table())
    report = analyze([5, 6, 8, 10], oracle, minimize=False)
    d = report.to_dict()
    assert d["clusters"] == [{"edits": [5, 6, 8, 10], "improvement": pytest.approx(0.075)}]
    assert sorted(map(tuple, d["dependency_edges"])) == [(5, 6), (5, 8), (5, 10), (8, 6), (10, 6)]
    dot = report.to_dot()
    assert "subgraph cluster_0" in dot and "e5 -> e8;" in dot and "e8 -> e6;" in dot
    rows = report.to_csv().splitlines()
    assert rows[0] == "edits,size,cycles,improvement,status"
    assert len(rows) == 17
    assert sum(r.endswith("failed") for r in rows) == 10
    assert report.to_json() == analyze([5, 6, 8, 10], FunctionOracle([5, 6, 8, 10], quad_table()),
                                       minimize=False).to_json()
