"""Property suites.  Run them alone with ``pytest tests/test_properties.py``;
``EVOMIR_HYPOTHESIS=thorough`` raises the example count."""

import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import IDENTITY
from evomir.bench import KERNELS, gen_grid_suite, gen_sw_suite, load_kernel
from evomir.bench.planted import planted_quad
from evomir.evo import (Evaluator, Fitness, Invalid, Variant, apply_edit, breed, crossover,
                        evolve, materialize, mutate)
from evomir.evo.search import SearchConfig
from evomir.postopt import (FAILURE, FunctionOracle, ProgramOracle, enumerate_subsets,
                            minimize_weak_edits, separate_edits)
from evomir.mir import parse, print_program, verify

MUTANTS = 1000


def mutant_chain(seed_program, rng, length, first_uid=1):
    v = Variant((), seed_program)
    for k in range(length):
        v = mutate(v, rng, first_uid + k)
    return v


@pytest.fixture(scope="module")
def corpus():
    return {k: load_kernel(k) for k in KERNELS}


@pytest.fixture(scope="module")
def mutants(corpus):
    rng = random.Random(2024)
    names = sorted(corpus)
    out = []
    for k in range(MUTANTS):
        name = names[k % len(names)]
        v = mutant_chain(corpus[name], rng, rng.randint(1, 6), first_uid=1 + 10 * k)
        out.append((name, v))
    return out


# -- text format --------------------------------------------------------------

def roundtrips(prog):
    # ids are renumbered in textual order, which must be a bijection
    text = print_program(prog)
    back = parse(text)
    renumber = dict(zip(prog.ids(), back.ids()))
    return (back == prog and print_program(back) == text
            and len(renumber) == len(set(renumber.values())) == len(tuple(prog.ids())))


def test_corpus_roundtrip(corpus):
    for name, prog in corpus.items():
        assert roundtrips(prog), name
        assert tuple(parse(print_program(prog)).ids()) == tuple(prog.ids())


def test_mutant_roundtrip_and_validity(mutants):
    assert len(mutants) == MUTANTS
    changed = 0
    for name, v in mutants:
        assert roundtrips(v.program), (name, v.uids)
        assert verify(v.program) == [], (name, v.uids)
        changed += bool(v.edits)
    assert changed > 0.9 * MUTANTS


def test_mutants_execute_without_crashing(mutants):
    # verifier soundness: a verified program never breaks the VM, it only
    # passes, fails validation, faults or times out
    sw = gen_sw_suite(n_pairs=1, lengths=(8, 12), seed=1, heldout_pairs=0)
    grid = gen_grid_suite((6, 6), steps=2, seeds=(0,))
    evals = {"sw": Evaluator(sw, cycle_budget=200_000), "grid": Evaluator(grid, cycle_budget=200_000)}
    reasons = Counter()
    for name, v in mutants[:150]:
        if name.startswith("sw"):
            fit = evals["sw"].program_fitness(v.program)
        elif name.startswith("grid"):
            fit = evals["grid"].program_fitness(v.program)
        else:
            continue
        assert isinstance(fit, (Fitness, Invalid))
        reasons[fit.reason.split(":")[0] if isinstance(fit, Invalid) else "ok"] += 1
    assert reasons["ok"] > 0


# -- edits --------------------------------------------------------------------

@given(st.integers(0, 2**32), st.integers(1, 8))
def test_materialize_fold_law(corpus, seed, length):
    prog = corpus["sw_naive"]
    v = mutant_chain(prog, random.Random(seed), length)
    acc = prog
    for k, e in enumerate(v.edits):
        acc = apply_edit(acc, e)
        assert materialize(prog, v.edits[:k + 1]) == acc
    assert materialize(prog, v.edits) == v.program
    assert tuple(materialize(prog, v.edits).ids()) == tuple(v.program.ids())


@given(st.integers(0, 2**32), st.integers(0, 5), st.integers(0, 5))
def test_crossover_invents_no_edits(corpus, seed, la, lb):
    prog = corpus["sw_tuned"]
    rng = random.Random(seed)
    a = mutant_chain(prog, rng, la, first_uid=1)
    b = mutant_chain(prog, rng, lb, first_uid=100)
    c1, c2 = crossover(a, b, rng, prog)
    parents = Counter(a.uids) + Counter(b.uids)
    for child in (c1, c2):
        assert not Counter(child.uids) - parents
        assert child.program == materialize(prog, child.edits)
    # each child is a prefix of one parent joined to a suffix of the other
    splices = {(p.uids[:i] + q.uids[j:]) for p, q in ((a, b), (b, a))
               for i in range(len(p.uids) + 1) for j in range(len(q.uids) + 1)}
    assert c1.uids in splices and c2.uids in splices


# -- search -------------------------------------------------------------------

@given(st.integers(2, 24), st.integers(0, 4), st.integers(0, 2**16),
       st.lists(st.one_of(st.none(), st.floats(1, 1e6)), min_size=1, max_size=12))
def test_breed_size_and_elitism(corpus, size, elitism, seed, scores):
    prog = parse(IDENTITY)
    elitism = min(elitism, size - 1)
    rng = random.Random(seed)
    pop = []
    for k, s in enumerate(scores):
        v = mutant_chain(prog, rng, 1, first_uid=k + 1)
        fit = Invalid("timeout") if s is None else Fitness(s, (s,))
        pop.append(v.with_fitness(fit))
    config = SearchConfig(population_size=size, elitism=elitism, seed=seed)
    nxt = breed(pop, config, 1, prog)
    assert len(nxt) == size
    valid = sorted((v for v in pop if v.valid), key=lambda v: (v.fitness.mean_cycles, v.uids))
    carried = valid[:elitism]
    assert [v.uids for v in nxt[:len(carried)]] == [v.uids for v in carried]
    # elites are carried unchanged, so with equal re-evaluation the best cannot regress
    if carried:
        assert carried[0].fitness.mean_cycles == min(v.fitness.mean_cycles for v in valid)


def test_evolve_best_is_monotone_and_population_constant(corpus, tmp_path):
    suite = gen_sw_suite(n_pairs=2, lengths=(12, 20), seed=5, heldout_pairs=0)
    for seed in (1, 2):
        config = SearchConfig(population_size=10, elitism=2, generations=5, seed=seed)
        res = evolve(corpus["sw_naive"], suite, config)
        best = [r.best_fitness for r in res.generation_log]
        assert all(b is not None for b in best)
        assert all(later <= earlier for earlier, later in zip(best, best[1:]))
        assert {len(r.individuals) for r in res.generation_log} == {10}


# -- post-hoc analysis --------------------------------------------------------

landscapes = st.integers(1, 10).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(0, 2**32), st.floats(0, 0.3)))


def random_landscape(n, seed, fail_rate):
    rng = random.Random(seed)
    gains = [rng.choice([0.0, rng.uniform(0, 20)]) for _ in range(n)]
    pair = {(i, j): rng.uniform(-10, 10) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.2}
    fails = {frozenset(rng.sample(range(n), rng.randint(1, n))) for _ in range(3) if rng.random() < fail_rate}

    def f(s):
        if s in fails and s != frozenset(range(n)):
            return FAILURE
        return 1000 - sum(gains[u] for u in s) - sum(v for (i, j), v in pair.items() if i in s and j in s)
    return f


@given(landscapes)
def test_minimize_call_bound(spec):
    n, seed, fail_rate = spec
    oracle = FunctionOracle(range(n), random_landscape(n, seed, fail_rate))
    res = minimize_weak_edits(range(n), oracle)
    assert oracle.evaluations <= n + 1
    assert sorted(res.kept + res.weaks) == list(range(n))


@given(landscapes)
def test_separate_call_bound(spec):
    n, seed, fail_rate = spec
    oracle = FunctionOracle(range(n), random_landscape(n, seed, fail_rate))
    sep = separate_edits(range(n), oracle)
    assert oracle.evaluations <= 3 * n + 2
    assert sorted(list(sep.independent) + sep.epistatic) == list(range(n))


@given(st.integers(0, 8))
def test_enumerate_call_bound(n):
    oracle = FunctionOracle(range(n), lambda s: 100 - len(s))
    table = enumerate_subsets(range(n), oracle)
    assert oracle.evaluations <= 2 ** n
    assert len(table.values) == 2 ** n


def test_program_oracle_is_deterministic(sw_tuned):
    quad = planted_quad(sw_tuned)
    edits = [quad[u] for u in sorted(quad)]
    suite = gen_sw_suite(n_pairs=2, lengths=(16, 32), seed=9, heldout_pairs=0, kernel="sw_tuned")
    a = ProgramOracle(sw_tuned, edits, suite)
    b = ProgramOracle(sw_tuned, edits, suite)
    for subset in ((), (6,), (6, 8), (5, 6, 8, 10), (8,)):
        assert a(subset) == b(subset) == a(subset)
