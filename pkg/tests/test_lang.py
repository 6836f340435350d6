import pytest
from hypothesis import given, settings

from locksynth.lang import (ParseError, build_flow_graph, dump_cfg, parse_program, unparse)

from strategies import program_text


def test_open_dev_flow_graph(corpus):
    p = corpus("open_dev.lsy")
    g = build_flow_graph(p.thread("T1"))
    assert g.edges["1"] == ("2", "T1.last")
    assert g.edges["2"] == ("3", "4")
    assert g.edges["3"] == ("4",)
    assert g.edges["4"] == ("5",)
    assert g.edges["5"] == ("1",)
    assert g.entry == "1" and g.exit == "T1.last"
    assert g.back_edges() == {("5", "1")}


def test_auto_labels_and_last():
    p = parse_program("decl shared x\nthread A {\n  x := 1\n  l: x := 2\n  x := 3\n}\n")
    t = p.thread("A")
    assert [s.loc for s in t.statements()] == ["A.1", "l", "A.2"]
    assert t.first == "A.1" and t.last == "A.last"
    assert p.locations() == ["A.1", "l", "A.2", "A.last"]


def test_work_sharing_loop_has_two_successors(corpus):
    p = corpus("work_sharing.lsy")
    g = build_flow_graph(p.thread("W1"))
    assert g.edges["w1"] == ("x1", "W1.last")
    assert g.edges["zr"] == ("w1",)
    assert len(p.threads) == 2


def test_if_without_else_joins():
    p = parse_program("decl shared x\nthread A {\n  a: if (x == 0) {\n    b: x := 1\n  }\n  c: skip\n}\n")
    g = build_flow_graph(p.thread("A"))
    assert g.edges["a"] == ("b", "c")
    assert g.edges["b"] == ("c",)


def test_goto_edges():
    p = parse_program("decl shared x\nthread A {\n  a: x := 1\n  b: if (*) {\n    goto d\n  }\n"
                      "  c: x := 2\n  d: skip\n}\n")
    g = build_flow_graph(p.thread("A"))
    assert g.edges["A.1"] == ("d",)
    assert g.edges["b"] == ("A.1", "c")
    assert g.edges["d"] == ("A.last",)


@pytest.mark.parametrize("text, message, line", [
    ("thread A {\n  x := 1\n}\n", "undeclared variable 'x'", 2),
    ("decl shared x\nthread A {\n  a: x := 1\n  a: x := 2\n}\n", "duplicate location 'a'", 4),
    ("decl shared x\nthread A {\n  goto nowhere\n}\n", "goto to unknown location", 3),
    ("decl shared x\nthread A {\n  frob(x)\n}\n", "unknown statement", 3),
    ("decl lock m\nthread A {\n  lock(n)\n}\n", "undeclared variable 'n'", 3),
    ("decl shared x\ndecl local x\n", "", 2),
])
def test_parse_errors(text, message, line):
    with pytest.raises(ParseError) as err:
        parse_program(text)
    assert message in str(err.value)
    assert err.value.line == line


def test_unreachable_code_is_rejected():
    with pytest.raises(ParseError, match="unreachable"):
        parse_program("decl shared x\nthread A {\n  a: goto c\n  b: x := 2\n  c: skip\n}\n")


def test_dump_cfg_lists_every_node(corpus):
    p = corpus("branch_atomicity.lsy")
    text = dump_cfg(p)
    assert "T2 b2 if -> b3 b5" in text
    assert "T1 T1.last skip -> -" in text
    assert len(text.splitlines()) == len(p.locations())


@settings(max_examples=60, deadline=None)
@given(program_text(threads=(1, 3), loops=True))
def test_unparse_round_trip(text):
    p = parse_program(text)
    again = parse_program(unparse(p))
    assert again == p
    assert unparse(again) == unparse(p)


def test_corpus_parses(corpus):
    from conftest import CORPUS
    for f in sorted(CORPUS.glob("*.lsy")):
        p = parse_program(f.read_text())
        assert p.threads
