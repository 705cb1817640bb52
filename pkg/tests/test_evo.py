import json
import random
from collections import Counter

import pytest

from conftest import IDENTITY
from evomir.bench import gen_sw_suite, load_kernel
from evomir.bench.planted import find_instruction, memset_removal_edits
from evomir.evo import (EDIT_KINDS, FRESH_ID_BASE, INST_COPY, INST_DELETE, INST_MOVE,
                        INST_REPLACE, INST_SWAP, OPERAND_REPLACE, ApplyError, Edit, Evaluator,
                        MaterializeError, Materializer, SearchConfig, SearchError, Variant,
                        apply_edit, breed, crossover, evaluate, evolve, in_scope_values,
                        materialize, mutate, read_generation_log)
from evomir.evo.variation import Fitness, Invalid
from evomir.mir import parse, print_program, verify

TWO_STORES = """
global @G[i32 x 4]
fn @k() {
entry:
  %t = tid.block
  st.global @G, 0, 5
  st.global @G, 1, 6
  %u = add %t, 1
  ret
}
"""


@pytest.fixture(scope="module")
def small_suite():
    return gen_sw_suite(n_pairs=2, lengths=(12, 24), seed=3, heldout_pairs=1,
                        heldout_lengths=(40, 48))


# -- apply_edit -------------------------------------------------------------

def test_delete_store_in_straight_line_kernel():
    p = parse(IDENTITY)
    store = find_instruction(p, "st.global", None)
    out = apply_edit(p, Edit(INST_DELETE, 1, target=store.id))
    assert out == parse(IDENTITY.replace("  st.global @G, %t, %t\n", ""))


def test_swap_twice_is_identity():
    p = parse(TWO_STORES)
    a, b = [i for i in p.instructions() if i.opcode == "st.global"]
    once = apply_edit(p, Edit(INST_SWAP, 1, target=a.id, other=b.id))
    assert once != p
    twice = apply_edit(once, Edit(INST_SWAP, 2, target=a.id, other=b.id))
    assert twice == p and twice.ids() == p.ids()


def test_terminators_cannot_be_deleted_or_moved():
    p = parse(TWO_STORES)
    ret = [i for i in p.instructions() if i.opcode == "ret"][0]
    for edit in (Edit(INST_DELETE, 1, target=ret.id),
                 Edit(INST_MOVE, 1, target=ret.id, before=p.ids()[0]),
                 Edit(INST_SWAP, 1, target=ret.id, other=p.ids()[0])):
        with pytest.raises(ApplyError) as err:
            apply_edit(p, edit)
        assert err.value.cause == "terminator"


def test_missing_target():
    with pytest.raises(ApplyError) as err:
        apply_edit(parse(TWO_STORES), Edit(INST_DELETE, 1, target=999))
    assert err.value.cause == "missing-target"


def test_copy_gets_fresh_id_and_name():
    p = parse(TWO_STORES)
    add = find_instruction(p, "add", None)
    out = apply_edit(p, Edit(INST_COPY, 7, donor=add.id, before=add.id))
    copy = out.instruction(FRESH_ID_BASE + 7)
    assert copy is not None and copy.result == "_e7" and copy.opcode == "add"
    # a later edit can refer to the copy by its fresh id
    again = apply_edit(out, Edit(INST_DELETE, 8, target=FRESH_ID_BASE + 7))
    assert again == p


def test_move_repairs_operands_deterministically():
    p = parse(TWO_STORES)
    t, add = find_instruction(p, "tid.block", None), find_instruction(p, "add", None)
    # moving the add ahead of its operand's definition forces a rebind; no i32
    # value is in scope there, so the edit fails
    with pytest.raises(ApplyError) as err:
        apply_edit(p, Edit(INST_MOVE, 3, target=add.id, before=t.id))
    assert err.value.cause == "repair"
    q = parse("fn @k(%a: i32, %b: i32) {\nentry:\n  %t = add %a, 1\n  %u = add %t, %b\n  ret\n}")
    t, u = list(q.instructions())[:2]
    outs = {print_program(apply_edit(q, Edit(INST_MOVE, 9, target=u.id, before=t.id)))
            for _ in range(5)}
    assert len(outs) == 1
    moved = parse(outs.pop())
    assert verify(moved) == []
    assert list(moved.instructions())[0].operands[0].name in ("a", "b")


def test_operand_replace_type_checked():
    q = parse("fn @k(%a: i32, %c: bool) {\nentry:\n  %t = add %a, 1\n  ret\n}")
    t = list(q.instructions())[0]
    out = apply_edit(q, Edit(OPERAND_REPLACE, 1, target=t.id, index=1, value="a"))
    assert str(list(out.instructions())[0].operands[1]) == "%a"
    # a bool where an i32 is needed is rebound to an in-scope i32
    fixed = apply_edit(q, Edit(OPERAND_REPLACE, 2, target=t.id, index=1, value="c"))
    assert str(list(fixed.instructions())[0].operands[1]) == "%a"
    with pytest.raises(ApplyError):
        apply_edit(q, Edit(OPERAND_REPLACE, 3, target=t.id, index=5, value="a"))


def test_in_scope_values(sw_naive):
    func = sw_naive.kernel
    first = next(sw_naive.instructions())
    assert set(in_scope_values(func, first.id, "i32")) == {"n", "m", "match", "mismatch", "gap"}
    assert in_scope_values(func, first.id, "bool") == []


def test_copy_barrier_into_loop_is_valid_and_slower(sw_naive, small_suite):
    bar = find_instruction(sw_naive, "bar.block", "sw_naive.cu:23")
    point = find_instruction(sw_naive, "st.shared", "sw_naive.cu:22")
    out = apply_edit(sw_naive, Edit(INST_COPY, 1, donor=bar.id, before=point.id))
    assert verify(out) == []
    base = evaluate(Variant((), sw_naive), small_suite)
    slower = evaluate(Variant((), out), small_suite)
    assert isinstance(slower, Fitness) and slower.mean_cycles > base.mean_cycles


def test_edit_dict_round_trip():
    e = Edit(OPERAND_REPLACE, 12, target=3, index=0, value="x", source_locs=("a.cu:1",))
    d = e.to_dict()
    assert Edit.from_dict(json.loads(json.dumps(d))) == e
    assert Edit.from_dict(d).source_locs == ("a.cu:1",)
    with pytest.raises(ValueError):
        Edit(INST_REPLACE, 1, target=3)
    with pytest.raises(ValueError):
        Edit("InstFrob", 1)


# -- materialize ------------------------------------------------------------

def test_materialize_empty_and_fold(sw_naive):
    assert materialize(sw_naive, []) == sw_naive
    e1, e2 = memset_removal_edits(sw_naive)[:2]
    assert materialize(sw_naive, [e1, e2]) == apply_edit(apply_edit(sw_naive, e1), e2)


def test_materialize_reports_first_failure():
    p = parse(TWO_STORES)
    store = find_instruction(p, "st.global", None)
    edits = [Edit(INST_DELETE, 1, target=store.id), Edit(INST_DELETE, 2, target=store.id)]
    with pytest.raises(MaterializeError) as err:
        materialize(p, edits)
    assert err.value.index == 1
    assert err.value.cause.cause == "missing-target"


def test_materializer_cache_matches_fold(sw_naive):
    edits = memset_removal_edits(sw_naive)
    build = Materializer(sw_naive)
    assert build(edits[:4]) == materialize(sw_naive, edits[:4])
    assert build(edits) == materialize(sw_naive, edits)
    bad = edits[:1] + edits[:1]
    for _ in range(2):
        with pytest.raises(MaterializeError):
            build(bad)


# -- mutate / crossover -----------------------------------------------------

def test_mutate_is_reproducible(sw_naive):
    v = Variant((), sw_naive)
    a = mutate(v, random.Random(5), uid=1)
    b = mutate(v, random.Random(5), uid=1)
    assert a.edits == b.edits and a.program == b.program
    assert len(a.edits) in (0, 1)
    if a.edits:
        assert a.program == materialize(sw_naive, a.edits)


def test_all_six_kinds_occur(sw_naive):
    rng = random.Random(42)
    v = Variant((), sw_naive)
    kinds = Counter()
    for uid in range(1, 1001):
        out = mutate(v, rng, uid)
        assert len(out.edits) - len(v.edits) in (0, 1)
        if out.edits:
            kinds[out.edits[-1].kind] += 1
    assert set(kinds) == set(EDIT_KINDS)


def test_crossover_boundaries(sw_naive):
    rng = random.Random(0)
    empty = Variant((), sw_naive)
    c1, c2 = crossover(empty, empty, rng, sw_naive)
    assert c1.edits == () and c2.edits == ()
    edits = memset_removal_edits(sw_naive)
    a = Variant(tuple(edits[:3]), materialize(sw_naive, edits[:3]))
    b = Variant(tuple(edits[3:6]), materialize(sw_naive, edits[3:6]))
    c1, c2 = crossover(a, b, rng, sw_naive, cuts=(3, 0))
    assert c1.edits == a.edits + b.edits
    assert c1.program == materialize(sw_naive, c1.edits)
    assert c2.edits == ()


def test_crossover_failure_falls_back_to_parents():
    p = parse(TWO_STORES)
    store = find_instruction(p, "st.global", None)
    da, db = Edit(INST_DELETE, 1, target=store.id), Edit(INST_DELETE, 2, target=store.id)
    a = Variant((da,), apply_edit(p, da))
    b = Variant((db,), apply_edit(p, db))
    # both full concatenations delete the same store twice
    c1, c2 = crossover(a, b, random.Random(0), p, cuts=(1, 0))
    assert c1.edits == a.edits and c2.edits == ()
    c1, c2 = crossover(a, b, random.Random(0), p, cuts=(0, 1))
    assert c1.edits == () and c2.edits == b.edits


# -- evaluate ---------------------------------------------------------------

def test_seed_fitness_is_baseline(sw_naive, small_suite):
    fit = evaluate(Variant((), sw_naive), small_suite)
    assert isinstance(fit, Fitness)
    assert fit.mean_cycles == sum(fit.per_test_cycles) / len(fit.per_test_cycles)


def test_deleting_score_writeback_is_invalid(sw_naive, small_suite):
    store = next(i for i in sw_naive.instructions() if i.opcode == "st.global"
                 and i.operands[0].name == "H")
    v = Variant((Edit(INST_DELETE, 1, target=store.id),), None)
    fit = evaluate(v, small_suite, seed_program=sw_naive)
    assert isinstance(fit, Invalid) and fit.reason.startswith("mismatch")


def test_memset_removal_beats_baseline(sw_naive, small_suite):
    base = evaluate(Variant((), sw_naive), small_suite)
    edits = tuple(memset_removal_edits(sw_naive))
    fit = evaluate(Variant(edits, None), small_suite, seed_program=sw_naive)
    assert fit.mean_cycles < base.mean_cycles


def test_materialize_failure_is_invalid(small_suite):
    p = load_kernel("sw_naive")
    store = find_instruction(p, "st.shared", "sw_naive.cu:22")
    edits = (Edit(INST_DELETE, 1, target=store.id), Edit(INST_DELETE, 2, target=store.id))
    fit = evaluate(Variant(edits, None), small_suite, seed_program=p)
    assert fit == Invalid("materialize:1:missing-target")


def test_evaluator_memoizes_equal_programs(sw_naive, small_suite):
    ev = Evaluator(small_suite)
    a = ev(Variant((), sw_naive))
    b = ev(Variant((), parse(print_program(sw_naive))))
    assert a.fitness == b.fitness
    assert ev.calls == 2 and ev.runs == 1


# -- search -----------------------------------------------------------------

def test_search_config_validation(tmp_path):
    assert SearchConfig().population_size == 256
    assert (SearchConfig().elitism, SearchConfig().crossover_prob, SearchConfig().mutation_prob) == (4, 0.8, 0.3)
    with pytest.raises(ValueError):
        SearchConfig(population_size=4, elitism=4)
    with pytest.raises(ValueError):
        SearchConfig(mutation_prob=1.5)
    with pytest.raises(ValueError):
        SearchConfig.from_dict({"population": 3})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"population_size": 300, "generations": 130}))
    assert SearchConfig.from_json(path).population_size == 300


TINY = SearchConfig(population_size=8, elitism=2, generations=4, seed=3)


def test_evolve_log_shape(sw_naive, small_suite, tmp_path):
    res = evolve(sw_naive, small_suite, TINY, log_path=tmp_path / "g.jsonl")
    log = res.generation_log
    assert [r.generation for r in log] == list(range(TINY.generations))
    assert read_generation_log(tmp_path / "g.jsonl") == log
    best = [r.best_fitness for r in log]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    assert all(len(r.individuals) == TINY.population_size for r in log)
    assert res.best_variant.valid
    assert res.best_variant.program == materialize(sw_naive, res.best_variant.edits)
    assert res.best_variant.fitness.mean_cycles <= res.seed_fitness.mean_cycles
    seen = set()
    for r in log:
        for ind in r.individuals:
            seen.update(ind)
    assert set(res.best_variant.uids) <= seen


def test_evolve_is_deterministic_and_job_independent(sw_naive, small_suite, tmp_path):
    evolve(sw_naive, small_suite, TINY, log_path=tmp_path / "a.jsonl")
    evolve(sw_naive, small_suite, TINY, log_path=tmp_path / "b.jsonl")
    evolve(sw_naive, small_suite, TINY, jobs=3, log_path=tmp_path / "c.jsonl")
    a = (tmp_path / "a.jsonl").read_bytes()
    assert a == (tmp_path / "b.jsonl").read_bytes() == (tmp_path / "c.jsonl").read_bytes()


def test_resume_matches_uninterrupted_run(sw_naive, small_suite, tmp_path):
    evolve(sw_naive, small_suite, TINY, log_path=tmp_path / "full.jsonl")

    class Stop(Exception):
        pass

    def stop_at_two(rec):
        if rec.generation == 2:
            raise Stop

    ck, log = tmp_path / "ck.json", tmp_path / "part.jsonl"
    with pytest.raises(Stop):
        evolve(sw_naive, small_suite, TINY, log_path=log, checkpoint_path=ck, on_generation=stop_at_two)
    evolve(sw_naive, small_suite, TINY, log_path=log, checkpoint_path=ck, resume=True)
    assert log.read_bytes() == (tmp_path / "full.jsonl").read_bytes()
    with pytest.raises(SearchError):
        evolve(sw_naive, small_suite, SearchConfig(population_size=8, generations=5, seed=3),
               checkpoint_path=ck, resume=True)


def test_invalid_seed_aborts(small_suite):
    broken = parse("global @H[i32 x 4]\nglobal @A[i32 x 256]\nglobal @B[i32 x 256]\n"
                   "global @best[i32 x 1]\nfn @k(%n: i32, %m: i32, %match: i32, %mismatch: i32, "
                   "%gap: i32) { entry: ret }")
    with pytest.raises(SearchError):
        evolve(broken, small_suite, TINY)


def test_breed_keeps_valid_elites_only(sw_naive):
    good = [Variant((), sw_naive, Fitness(float(k), (float(k),))) for k in (5, 3, 9)]
    bad = [Variant((), sw_naive, Invalid("timeout")) for _ in range(5)]
    nxt = breed(bad + good, SearchConfig(population_size=8, elitism=2, seed=1), 1, sw_naive)
    assert len(nxt) == 8
    assert all(v.fitness is None for v in nxt)
    # elites are the two best valid parents, in fitness order
    assert [v.program for v in nxt[:2]] == [sw_naive, sw_naive]


def test_breed_survives_all_invalid_population(sw_naive):
    bad = [Variant((), sw_naive, Invalid("timeout")) for _ in range(4)]
    nxt = breed(bad, SearchConfig(population_size=4, elitism=1, seed=2), 1, sw_naive)
    assert len(nxt) == 4
