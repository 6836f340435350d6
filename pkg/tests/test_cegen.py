import itertools

import pytest
from hypothesis import assume, given, settings

from locksynth.abstraction import abstract_program, read, write
from locksynth.automata import Conflict, build_np_nfa, build_p_nfa
from locksynth.cegen import (Event, HbAtom, HbFormula, MutexConstraint, NeighborhoodTooLarge,
                             NotLockEnforceable, Region, compute_nhood, derive_conflicts,
                             generalize, infer_mutex_alternatives, infer_mutexes, region_nodes)
from locksynth.inclusion import Counterexample, check_inclusion, word_included
from locksynth.lang import parse_program

from strategies import program_text

BRANCH_FORMULA = "((1,(write,v),a1) < (2,(write,v),b3) & (2,(read,v),b1) < (1,(write,v),a1))"
BRANCH_MUTEX = "mutex(T1.[a1:a2], T2.[b1:b4])"
BRANCH_CONFLICTS = [Conflict("b1", "b2", "b3", "a1", "a2", 2, 1),
                    Conflict("b2", "b3", "b4", "a1", "a2", 2, 1)]


def branch_setup(corpus):
    ap = abstract_program(corpus("branch_atomicity.lsy"))
    p, np = build_p_nfa(ap), build_np_nfa(ap)
    cex = check_inclusion(p, np, 4)
    return ap, p, np, cex


def brute_nhood(word, p):
    """Permutations keeping each thread's order, filtered by the automaton."""
    out = set()
    for perm in set(itertools.permutations(word)):
        if all([a for a in perm if a.tid == t] == [a for a in word if a.tid == t]
               for t in {a.tid for a in word}) and p.accepts(perm):
            out.add(perm)
    return out


def test_branch_generalization(corpus):
    ap, p, np, cex = branch_setup(corpus)
    phi = generalize(cex.word, p, np, cex.bound)
    assert str(phi) == BRANCH_FORMULA
    mutexes = infer_mutexes(phi, ap)
    assert [str(m) for m in mutexes] == [BRANCH_MUTEX]
    assert derive_conflicts(mutexes[0], ap) == BRANCH_CONFLICTS


def test_branch_neighborhood_matches_brute_force(corpus):
    _, p, _, cex = branch_setup(corpus)
    nh = compute_nhood(cex.word, p)
    assert nh == brute_nhood(cex.word, p)
    assert len(nh) == 15


def test_neighborhood_cap(corpus):
    _, p, _, cex = branch_setup(corpus)
    with pytest.raises(NeighborhoodTooLarge):
        compute_nhood(cex.word, p, cap=10)


@settings(max_examples=40, deadline=None)
@given(program_text(threads=(2, 2), max_stmts=3))
def test_formula_exactly_separates_neighborhood(text):
    ap = abstract_program(parse_program(text))
    p, np = build_p_nfa(ap), build_np_nfa(ap)
    cex = check_inclusion(p, np, 2)
    assume(isinstance(cex, Counterexample))
    phi = generalize(cex.word, p, np, 2)
    assert phi.holds(cex.word)
    nh = compute_nhood(cex.word, p)
    assert nh == brute_nhood(cex.word, p)
    for w in nh:
        assert phi.holds(w) == (not word_included(w, np, 2))


@settings(max_examples=40, deadline=None)
@given(program_text(threads=(2, 2), max_stmts=3))
def test_inferred_mutexes_serialize_the_pattern(text):
    """Running either region entirely before the other falsifies the conjunct."""
    ap = abstract_program(parse_program(text))
    p, np = build_p_nfa(ap), build_np_nfa(ap)
    cex = check_inclusion(p, np, 2)
    assume(isinstance(cex, Counterexample))
    phi = generalize(cex.word, p, np, 2)
    for conj, alts in zip(phi.disjuncts, infer_mutex_alternatives(phi, ap)):
        assert alts
        for m in alts:
            tids = {m.region1.tid, m.region2.tid}
            assert all({a.before.tid, a.after.tid} <= tids for a in conj)


def test_single_ordering_is_not_lock_enforceable():
    a = Event(write(1, "x", "a"))
    b = Event(read(2, "x", "b"))
    phi = HbFormula((frozenset([HbAtom(a, b)]),), (a.symbol, b.symbol))
    with pytest.raises(NotLockEnforceable):
        infer_mutex_alternatives(phi)


def test_lost_update_gives_mutex(corpus):
    ap = abstract_program(corpus("shared_open.lsy"))
    p, np = build_p_nfa(ap), build_np_nfa(ap)
    cex = check_inclusion(p, np, 2)
    phi = generalize(cex.word, p, np, 2)
    mutexes = infer_mutexes(phi, ap)
    assert mutexes
    for m in mutexes:
        assert derive_conflicts(m, ap)


def test_relevance_filter_only_drops(corpus):
    ap = abstract_program(corpus("work_sharing.lsy"))
    m = MutexConstraint(Region(1, "x1", "xr"), Region(2, "p1", "pr"))
    relevant = set(derive_conflicts(m, ap))
    everything = set(derive_conflicts(m, ap, relevance=False))
    assert relevant and relevant <= everything
    assert Conflict("x1", "x2", "xr", "p1", "p2", 1, 2) in relevant


def test_region_nodes_follow_one_branch(corpus):
    ap = abstract_program(corpus("branch_atomicity.lsy"))
    nodes, edges = region_nodes(ap.thread(2), "b1", "b4")
    assert nodes == {"b1", "b2", "b3", "b4"}
    assert edges == {("b1", "b2"), ("b2", "b3"), ("b3", "b4")}
    assert region_nodes(ap.thread(2), "b3", "b5") == (set(), set())
