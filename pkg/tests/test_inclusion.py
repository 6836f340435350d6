import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locksynth.abstraction import abstract_program, read, write
from locksynth.automata import build_np_nfa, build_p_nfa, enumerate_executions
from locksynth.inclusion import (Counterexample, InclusionOk, check_inclusion,
                                 check_inclusion_iterative, default_max_len, equivalent_mod_I,
                                 inclusion_oracle, word_included)
from locksynth.lang import parse_program

from strategies import program_text

BRANCH_CEX = ("(2,(read,v),b1) (1,(write,v),a1) (1,(read,x),a2) (2,if,b2) "
              "(2,(write,v),b3) (2,(read,x),b4)")


def automata(program):
    ap = abstract_program(program)
    return build_p_nfa(ap), build_np_nfa(ap)


def same(a, b):
    return type(a) is type(b) and (isinstance(a, InclusionOk) or a.word == b.word)


def test_branch_atomicity_counterexample(corpus):
    p, np = automata(corpus("branch_atomicity.lsy"))
    res = check_inclusion_iterative(p, np)
    assert isinstance(res, Counterexample)
    assert str(res) == BRANCH_CEX
    assert res.bound == 4
    assert not word_included(res.word, np, 32)


def test_locked_counter_is_safe(corpus):
    p, np = automata(corpus("locked_counter.lsy"))
    assert isinstance(check_inclusion_iterative(p, np), InclusionOk)


def test_lost_update_found_at_every_bound(corpus):
    p, np = automata(corpus("shared_open.lsy"))
    for k in (0, 1, 2, 4):
        assert isinstance(check_inclusion(p, np, k), Counterexample)


def test_negative_bound_rejected(corpus):
    p, np = automata(corpus("shared_open.lsy"))
    with pytest.raises(ValueError):
        check_inclusion(p, np, -1)


def test_default_max_len_is_twice_the_locations(corpus):
    p, _ = automata(corpus("branch_atomicity.lsy"))
    assert default_max_len(p) == 2 * 9


@settings(max_examples=50, deadline=None)
@given(program_text(threads=(2, 2), max_stmts=2), st.sampled_from([0, 1, 2, 3]))
def test_checker_matches_brute_force(text, k):
    p, np = automata(parse_program(text))
    n = default_max_len(np)
    assert same(check_inclusion(p, np, k, n), inclusion_oracle(p, np, k, n))


@settings(max_examples=30, deadline=None)
@given(program_text(threads=(2, 2), max_stmts=3))
def test_antichain_does_not_change_result(text):
    p, np = automata(parse_program(text))
    for k in (0, 2):
        assert same(check_inclusion(p, np, k, 12), check_inclusion(p, np, k, 12, antichain=False))


@settings(max_examples=30, deadline=None)
@given(program_text(threads=(2, 2), max_stmts=2))
def test_larger_bound_accepts_more(text):
    p, np = automata(parse_program(text))
    words = sorted(enumerate_executions(p, 12))
    for k in (0, 1, 2):
        for w in words:
            if word_included(w, np, k):
                assert word_included(w, np, k + 1)


@settings(max_examples=30, deadline=None)
@given(program_text(threads=(2, 3), max_stmts=2))
def test_np_words_are_included_at_bound_zero(text):
    _, np = automata(parse_program(text))
    for w in enumerate_executions(np, 12):
        assert word_included(w, np, 0)


def test_equivalence_mod_independence():
    a, b = write(1, "x", "a"), read(2, "y", "b")
    c = write(2, "x", "c")
    assert equivalent_mod_I((a, b), (b, a), 1)
    assert not equivalent_mod_I((a, b), (b, a), 0)
    assert not equivalent_mod_I((a, c), (c, a), 5)
    assert not equivalent_mod_I((a, b), (a,), 5)
    assert equivalent_mod_I((a, b, a), (b, a, a), 1)
