import itertools

from hypothesis import given, settings

from locksynth.abstraction import abstract_program, branch, read, write
from locksynth.automata import (Conflict, build_np_nfa, build_p_nfa, dump_nfa,
                                enumerate_executions)
from locksynth.lang import parse_program

from strategies import program_text

MAX_LEN = 14


def thread_words(t):
    """Sequential words of one loop-free abstract thread, by walking its flow graph."""
    out = []

    def walk(loc, acc):
        if loc == t.last:
            out.append(tuple(acc))
            return
        ops = t.ops[loc]
        succ = t.graph.edges[loc]
        syms = [(read if o.kind == "r" else write)(t.tid, o.var, loc)
                for o in ops if o.kind in ("r", "w")]
        if ops[-1].kind == "if":
            walk(succ[0], acc + syms + [branch(t.tid, "if", loc)])
            walk(succ[1], acc + syms + [branch(t.tid, "else", loc)])
        else:
            walk(succ[0], acc + syms)

    walk(t.first, [])
    return set(out)


def serial_words(ap):
    """Words of running the threads one after the other in every order."""
    per_thread = [thread_words(t) for t in ap.threads]
    out = set()
    for perm in itertools.permutations(range(len(per_thread))):
        for combo in itertools.product(*(per_thread[i] for i in perm)):
            out.add(tuple(s for w in combo for s in w))
    return out


def yield_free(text):
    return "yield" not in text


@settings(max_examples=40, deadline=None)
@given(program_text(threads=(1, 3), max_stmts=2))
def test_np_without_yields_is_serial(text):
    ap = abstract_program(parse_program(text))
    words = enumerate_executions(build_np_nfa(ap), 40)
    if yield_free(text):
        assert words == serial_words(ap)
    else:
        assert serial_words(ap) <= words


@settings(max_examples=40, deadline=None)
@given(program_text(threads=(2, 2), max_stmts=2))
def test_np_language_inside_p_language(text):
    ap = abstract_program(parse_program(text))
    np_words = enumerate_executions(build_np_nfa(ap), MAX_LEN)
    p_words = enumerate_executions(build_p_nfa(ap), MAX_LEN)
    assert np_words <= p_words


@settings(max_examples=40, deadline=None)
@given(program_text(threads=(2, 2), max_stmts=2))
def test_p_words_are_interleavings(text):
    ap = abstract_program(parse_program(text))
    seq = [thread_words(t) for t in ap.threads]
    for w in enumerate_executions(build_p_nfa(ap), 40):
        for t, words in zip(ap.threads, seq):
            assert tuple(s for s in w if s.tid == t.tid) in words


def test_single_thread_languages_agree(corpus):
    ap = abstract_program(parse_program("decl shared x\nthread A {\n  x := 1\n  if (*) {\n"
                                        "    x := x + 1\n  }\n}\n"))
    assert enumerate_executions(build_np_nfa(ap), 10) == \
        enumerate_executions(build_p_nfa(ap), 10) == thread_words(ap.threads[0])


def test_locks_serialize_counter(corpus):
    ap = abstract_program(corpus("locked_counter.lsy"))
    p_words = enumerate_executions(build_p_nfa(ap), 10)
    assert p_words == enumerate_executions(build_np_nfa(ap), 10) == serial_words(ap)
    assert len(p_words) == 2


BRANCH_CONFLICTS = [Conflict("b1", "b2", "b3", "a1", "a2", 2, 1),
                    Conflict("b2", "b3", "b4", "a1", "a2", 2, 1)]


def test_conflicts_prune_interleavings(corpus):
    ap = abstract_program(corpus("branch_atomicity.lsy"))
    cex = (read(2, "v", "b1"), write(1, "v", "a1"), read(1, "x", "a2"), branch(2, "if", "b2"),
           write(2, "v", "b3"), read(2, "x", "b4"))
    assert build_p_nfa(ap).accepts(cex)
    assert not build_np_nfa(ap).accepts(cex)
    assert not build_p_nfa(ap, BRANCH_CONFLICTS).accepts(cex)
    free = enumerate_executions(build_p_nfa(ap), 12)
    pruned = enumerate_executions(build_p_nfa(ap, BRANCH_CONFLICTS), 12)
    assert pruned < free
    assert enumerate_executions(build_np_nfa(ap), 12) <= pruned


def test_single_conflict_cuts_only_its_pattern(corpus):
    ap = abstract_program(corpus("branch_atomicity.lsy"))
    c = BRANCH_CONFLICTS[0]
    for w in enumerate_executions(build_p_nfa(ap), 12) - enumerate_executions(build_p_nfa(ap, [c]), 12):
        locs = [s.loc for s in w]
        # the first thread crosses b1 -> b2 -> b3 while a1 -> a2 happens in between
        assert locs.index("b1") < locs.index("a1") < locs.index("b3")


def test_deadlock_detection():
    text = ("decl lock m, n\nthread A {\n  lock(m)\n  lock(n)\n  unlock(n)\n  unlock(m)\n}\n"
            "thread B {\n  lock(n)\n  lock(m)\n  unlock(m)\n  unlock(n)\n}\n")
    nfa = build_p_nfa(abstract_program(parse_program(text)))
    assert any(nfa.is_deadlock(s) for s in nfa.reachable_states())


def test_dump_nfa_marks_accepting_states(corpus):
    text = dump_nfa(build_np_nfa(abstract_program(corpus("branch_atomicity.lsy"))))
    assert text.startswith("s0 ('a1', 'b1')")
    assert " accept" in text
