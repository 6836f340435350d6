"""Hypothesis strategies producing small programs in the input language."""

from hypothesis import strategies as st

SHARED = ("x", "y")


@st.composite
def simple_stmt(draw):
    kind = draw(st.sampled_from(["read", "write", "rmw", "yield", "local"]))
    v = draw(st.sampled_from(SHARED))
    if kind == "read":
        return [f"t := {v}"]
    if kind == "write":
        return [f"{v} := {draw(st.integers(0, 3))}"]
    if kind == "rmw":
        return [f"{v} := {v} + 1"]
    if kind == "yield":
        return ["yield"]
    return ["t := t + 1"]


@st.composite
def stmt(draw, depth=0, loops=False):
    choices = ["simple"] * 4 + (["if"] if depth < 1 else []) + (["while"] if loops and depth < 1 else [])
    kind = draw(st.sampled_from(choices))
    if kind == "simple":
        return draw(simple_stmt())
    body = draw(st.lists(simple_stmt(), min_size=1, max_size=2))
    lines = [f"{kind} (*) {{"] + ["  " + l for s in body for l in s]
    if kind == "if" and draw(st.booleans()):
        orelse = draw(st.lists(simple_stmt(), min_size=1, max_size=2))
        lines += ["} else {"] + ["  " + l for s in orelse for l in s]
    if kind == "while":
        lines.insert(len(lines), "  yield")
    return lines + ["}"]


@st.composite
def program_text(draw, threads=(2, 2), max_stmts=3, loops=False):
    n = draw(st.integers(*threads))
    out = ["decl shared " + ", ".join(SHARED), "decl local t"]
    for i in range(1, n + 1):
        out.append(f"thread T{i} {{")
        for s in draw(st.lists(stmt(loops=loops), min_size=1, max_size=max_stmts)):
            out += ["  " + l for l in s]
        out.append("}")
    return "\n".join(out) + "\n"
