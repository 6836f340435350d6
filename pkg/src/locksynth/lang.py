"""Concrete input language: parser, AST, flow graphs and pretty printer.

Programs are written one statement per line::

    decl shared open
    decl channel dev

    thread T1 {
      1: while (*) {
        2: if (open == 0) {
          3: out(dev, 1)
        }
        4: open := open + 1
        5: yield
      }
    }

A statement may carry an explicit ``label:`` prefix; unlabeled statements
receive the location ``<thread>.<n>`` where ``n`` counts unlabeled statements
of that thread in textual order.  Every thread ends in a synthetic
``<thread>.last: skip`` node.  ``block NAME: loc, loc, ...`` lines group
statements into profiling blocks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple, Union


class ParseError(Exception):
    """Raised for malformed programs; carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        where = f"line {line}, column {col}: " if line else ""
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# Expressions

@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Nondet:
    """The ``*`` condition: a nondeterministic choice."""


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, Nondet, Unary, Binary]

_PRECEDENCE = [
    ("||",),
    ("&&",),
    ("==", "!=", "<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]


def expr_vars(e: Optional[Expr]) -> List[str]:
    """Variables read by an expression, in left-to-right order, with repeats."""
    if e is None:
        return []
    if isinstance(e, Var):
        return [e.name]
    if isinstance(e, Unary):
        return expr_vars(e.operand)
    if isinstance(e, Binary):
        return expr_vars(e.left) + expr_vars(e.right)
    return []


def format_expr(e: Expr, parent_level: int = -1) -> str:
    if isinstance(e, Num):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Nondet):
        return "*"
    if isinstance(e, Unary):
        return e.op + format_expr(e.operand, len(_PRECEDENCE))
    level = next(i for i, ops in enumerate(_PRECEDENCE) if e.op in ops)
    text = f"{format_expr(e.left, level - 1)} {e.op} {format_expr(e.right, level)}"
    if level <= parent_level:
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# Statements

STATEMENT_KINDS = (
    "assign", "havoc", "in", "out", "while", "if", "lock", "unlock", "wait",
    "wait_not", "notify", "reset", "assume", "assume_not", "set", "unset",
    "goto", "yield", "skip",
)

SYNC_KINDS = {
    "lock": "lock", "unlock": "lock",
    "wait": "cond", "wait_not": "cond", "notify": "cond", "reset": "cond",
    "assume": "guard", "assume_not": "guard", "set": "guard", "unset": "guard",
}

BRANCH_KINDS = ("if", "while")


@dataclass(frozen=True)
class SourceInfo:
    """Where a statement sits in the source text (0-based line indices)."""

    line: int
    indent: str
    close_line: int = -1       # line holding the closing brace of the (then/loop) body
    else_line: int = -1        # line holding ``} else {`` if present
    else_close_line: int = -1  # closing brace of the else body


@dataclass(frozen=True)
class Stmt:
    """A labeled statement.

    ``target`` is the assigned variable (assign/havoc/in), the channel (out),
    the synchronization variable (lock...unset) or the goto label.
    """

    loc: str
    kind: str
    target: Optional[str] = None
    expr: Optional[Expr] = None
    body: Tuple["Stmt", ...] = ()
    orelse: Tuple["Stmt", ...] = ()
    auto_label: bool = field(default=False, compare=False)
    source: Optional[SourceInfo] = field(default=None, compare=False, repr=False)

    def walk(self) -> Iterator["Stmt"]:
        yield self
        for s in self.body:
            yield from s.walk()
        for s in self.orelse:
            yield from s.walk()


@dataclass(frozen=True)
class Thread:
    tid: int
    name: str
    body: Tuple[Stmt, ...]
    close_line: int = field(default=-1, compare=False, repr=False)
    open_line: int = field(default=-1, compare=False, repr=False)

    @property
    def last(self) -> str:
        return f"{self.name}.last"

    @property
    def first(self) -> str:
        return self.body[0].loc if self.body else self.last

    def statements(self) -> List[Stmt]:
        out: List[Stmt] = []
        for s in self.body:
            out.extend(s.walk())
        return out


@dataclass(frozen=True)
class Program:
    threads: Tuple[Thread, ...]
    shared_vars: Tuple[str, ...] = ()
    local_vars: Tuple[str, ...] = ()
    lock_vars: Tuple[str, ...] = ()
    cond_vars: Tuple[str, ...] = ()
    guard_vars: Tuple[str, ...] = ()
    channels: Tuple[str, ...] = ()
    blocks: Tuple[Tuple[str, Tuple[str, ...]], ...] = ()
    text: str = field(default="", compare=False, repr=False)

    def thread(self, key: Union[int, str]) -> Thread:
        for t in self.threads:
            if t.tid == key or t.name == key:
                return t
        raise KeyError(key)

    def statement_map(self) -> Dict[str, Stmt]:
        return {s.loc: s for t in self.threads for s in t.statements()}

    def thread_of(self, loc: str) -> Thread:
        for t in self.threads:
            if loc == t.last or any(s.loc == loc for s in t.statements()):
                return t
        raise KeyError(loc)

    def locations(self) -> List[str]:
        out: List[str] = []
        for t in self.threads:
            out.extend(s.loc for s in t.statements())
            out.append(t.last)
        return out


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>:=|==|!=|<=|>=|&&|\|\||[-+*/%<>!(){},:]))"
)


@dataclass
class _Tok:
    kind: str  # num, name, op, end
    text: str
    col: int


def _tokenize(line: str, lineno: int) -> List[_Tok]:
    toks: List[_Tok] = []
    pos = 0
    stripped = line.split("#", 1)[0].rstrip()
    while pos < len(stripped):
        m = _TOKEN_RE.match(stripped, pos)
        if not m or m.end() == pos:
            col = pos + len(stripped[pos:]) - len(stripped[pos:].lstrip()) + 1
            raise ParseError(f"unexpected character {stripped[col - 1]!r}", lineno, col)
        kind = m.lastgroup or "op"
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start + 1))
        pos = m.end()
    toks.append(_Tok("end", "", len(stripped) + 1))
    return toks


class _Cursor:
    def __init__(self, toks: List[_Tok], lineno: int):
        self.toks = toks
        self.i = 0
        self.lineno = lineno

    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.peek()
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.peek().text == text and self.peek().kind != "end":
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text or t.kind == "end":
            raise ParseError(f"expected {text!r}, found {t.text or 'end of line'!r}",
                             self.lineno, t.col)
        return self.next()

    def name(self, what: str = "identifier") -> _Tok:
        t = self.peek()
        if t.kind != "name":
            raise ParseError(f"expected {what}, found {t.text or 'end of line'!r}",
                             self.lineno, t.col)
        return self.next()

    def at_end(self) -> bool:
        return self.peek().kind == "end"

    def expect_end(self) -> None:
        if not self.at_end():
            t = self.peek()
            raise ParseError(f"unexpected token {t.text!r}", self.lineno, t.col)

    # expressions -------------------------------------------------------
    def expr(self, level: int = 0) -> Expr:
        if level == len(_PRECEDENCE):
            return self.unary()
        left = self.expr(level + 1)
        while self.peek().kind == "op" and self.peek().text in _PRECEDENCE[level]:
            op = self.next().text
            right = self.expr(level + 1)
            left = Binary(op, left, right)
        return left

    def unary(self) -> Expr:
        t = self.peek()
        if t.kind == "op" and t.text in ("-", "!"):
            self.next()
            return Unary(t.text, self.unary())
        if t.kind == "num":
            self.next()
            return Num(int(t.text))
        if t.kind == "name":
            self.next()
            return Var(t.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"expected expression, found {t.text or 'end of line'!r}",
                         self.lineno, t.col)

    def condition(self) -> Expr:
        self.expect("(")
        if self.peek().text == "*" and self.peek(1).text == ")":
            self.next()
            self.next()
            return Nondet()
        e = self.expr()
        self.expect(")")
        return e


# ---------------------------------------------------------------------------
# Parser

_CATEGORIES = {
    "shared": "shared_vars", "local": "local_vars", "lock": "lock_vars",
    "cond": "cond_vars", "guard": "guard_vars", "channel": "channels",
}

_KEYWORDS = set(STATEMENT_KINDS) | {"else", "havoc", "thread", "decl", "block", "last"}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.lines = text.splitlines()
        self.idx = 0
        self.decls: Dict[str, List[str]] = {v: [] for v in _CATEGORIES.values()}
        self.category: Dict[str, str] = {}
        self.blocks: List[Tuple[str, Tuple[str, ...], int]] = []
        self.thread_name = ""
        self.auto_counter = 0
        self.gotos: List[Tuple[str, str, int, int, Tuple[str, ...]]] = []
        self.loop_stack: List[str] = []
        self.loc_loops: Dict[str, Tuple[str, ...]] = {}
        self.loc_line: Dict[str, int] = {}

    def parse(self) -> Program:
        threads: List[Thread] = []
        while self.idx < len(self.lines):
            lineno = self.idx + 1
            raw = self.lines[self.idx]
            toks = _tokenize(raw, lineno)
            cur = _Cursor(toks, lineno)
            if cur.at_end():
                self.idx += 1
                continue
            head = cur.peek()
            if head.text == "decl":
                cur.next()
                self._decl(cur)
                self.idx += 1
            elif head.text == "block":
                cur.next()
                self._block(cur)
                self.idx += 1
            elif head.text == "thread":
                cur.next()
                threads.append(self._thread(cur, len(threads) + 1))
            else:
                raise ParseError(f"expected 'decl', 'block' or 'thread', found {head.text!r}",
                                 lineno, head.col)
        if not threads:
            raise ParseError("program has no threads", len(self.lines) or 1, 1)
        self._check_locations(threads)
        return Program(
            threads=tuple(threads),
            shared_vars=tuple(self.decls["shared_vars"]),
            local_vars=tuple(self.decls["local_vars"]),
            lock_vars=tuple(self.decls["lock_vars"]),
            cond_vars=tuple(self.decls["cond_vars"]),
            guard_vars=tuple(self.decls["guard_vars"]),
            channels=tuple(self.decls["channels"]),
            blocks=tuple((n, locs) for n, locs, _ in self.blocks),
            text=self.text,
        )

    def _decl(self, cur: _Cursor) -> None:
        cat = cur.name("variable category")
        if cat.text not in _CATEGORIES:
            raise ParseError(f"unknown variable category {cat.text!r}", cur.lineno, cat.col)
        while True:
            tok = cur.name("variable name")
            if tok.text in _KEYWORDS:
                raise ParseError(f"reserved word {tok.text!r} used as a name", cur.lineno, tok.col)
            if tok.text in self.category:
                raise ParseError(f"variable {tok.text!r} declared twice", cur.lineno, tok.col)
            self.category[tok.text] = cat.text
            self.decls[_CATEGORIES[cat.text]].append(tok.text)
            if not cur.accept(","):
                break
        cur.expect_end()

    def _block(self, cur: _Cursor) -> None:
        name = cur.name("block name")
        cur.expect(":")
        locs: List[str] = []
        while True:
            t = cur.next()
            if t.kind not in ("name", "num"):
                raise ParseError("expected location in block", cur.lineno, t.col)
            locs.append(t.text)
            if not cur.accept(","):
                break
        cur.expect_end()
        self.blocks.append((name.text, tuple(locs), cur.lineno))

    def _thread(self, cur: _Cursor, tid: int) -> Thread:
        name = cur.name("thread name")
        cur.expect("{")
        cur.expect_end()
        self.thread_name = name.text
        self.auto_counter = 0
        open_line = self.idx
        self.idx += 1
        body, closer, close_idx = self._stmts()
        if closer != "}":
            raise ParseError("'else' without 'if'", close_idx + 1, 1)
        self.idx = close_idx + 1
        return Thread(tid, name.text, tuple(body), close_line=close_idx, open_line=open_line)

    def _stmts(self) -> Tuple[List[Stmt], str, int]:
        """Parse statements up to a closing brace; returns (stmts, closer, line)."""
        out: List[Stmt] = []
        while True:
            if self.idx >= len(self.lines):
                raise ParseError("missing closing '}'", len(self.lines), 1)
            lineno = self.idx + 1
            raw = self.lines[self.idx]
            cur = _Cursor(_tokenize(raw, lineno), lineno)
            if cur.at_end():
                self.idx += 1
                continue
            if cur.peek().text == "}":
                cur.next()
                if cur.accept("else"):
                    cur.expect("{")
                    cur.expect_end()
                    return out, "else", self.idx
                cur.expect_end()
                return out, "}", self.idx
            out.append(self._stmt(cur, raw))

    def _label(self, cur: _Cursor) -> Tuple[str, bool]:
        first, second = cur.peek(), cur.peek(1)
        if first.kind in ("name", "num") and second.text == ":":
            if first.text in _KEYWORDS:
                raise ParseError(f"reserved word {first.text!r} used as a label", cur.lineno, first.col)
            cur.next()
            cur.next()
            return first.text, False
        self.auto_counter += 1
        return f"{self.thread_name}.{self.auto_counter}", True

    def _stmt(self, cur: _Cursor, raw: str) -> Stmt:
        lineno = cur.lineno
        indent = raw[: len(raw) - len(raw.lstrip())]
        loc, auto = self._label(cur)
        if loc in self.loc_line:
            raise ParseError(f"duplicate location {loc!r}", lineno, 1)
        self.loc_line[loc] = lineno
        self.loc_loops[loc] = tuple(self.loop_stack)
        src = SourceInfo(self.idx, indent)
        head = cur.peek()
        if head.kind != "name":
            raise ParseError(f"expected statement, found {head.text or 'end of line'!r}",
                             lineno, head.col)
        word = head.text

        if word in ("if", "while"):
            cur.next()
            cond = cur.condition()
            self._check_expr(cond, lineno, head.col, writes=None)
            cur.expect("{")
            cur.expect_end()
            self.idx += 1
            if word == "while":
                self.loop_stack.append(loc)
            body, closer, close_idx = self._stmts()
            if word == "while":
                self.loop_stack.pop()
                if closer != "}":
                    raise ParseError("'else' after 'while' body", close_idx + 1, 1)
                self.idx = close_idx + 1
                return Stmt(loc, "while", expr=cond, body=tuple(body), auto_label=auto,
                            source=SourceInfo(src.line, indent, close_line=close_idx))
            orelse: List[Stmt] = []
            else_idx = else_close = -1
            if closer == "else":
                else_idx = close_idx
                self.idx = close_idx + 1
                orelse, closer2, else_close = self._stmts()
                if closer2 != "}":
                    raise ParseError("'else' without 'if'", else_close + 1, 1)
                self.idx = else_close + 1
            else:
                self.idx = close_idx + 1
            return Stmt(loc, "if", expr=cond, body=tuple(body), orelse=tuple(orelse),
                        auto_label=auto,
                        source=SourceInfo(src.line, indent, close_line=close_idx,
                                          else_line=else_idx, else_close_line=else_close))

        self.idx += 1
        if word in SYNC_KINDS:
            cur.next()
            cur.expect("(")
            arg = cur.name("variable")
            cur.expect(")")
            cur.expect_end()
            want = SYNC_KINDS[word]
            if self.category.get(arg.text) != want:
                raise ParseError(f"undeclared variable {arg.text!r} (expected a {want} variable)",
                                 lineno, arg.col)
            return Stmt(loc, word, target=arg.text, auto_label=auto, source=src)
        if word == "goto":
            cur.next()
            t = cur.next()
            if t.kind not in ("name", "num"):
                raise ParseError("expected location after goto", lineno, t.col)
            cur.expect_end()
            self.gotos.append((loc, t.text, lineno, t.col, tuple(self.loop_stack)))
            return Stmt(loc, "goto", target=t.text, auto_label=auto, source=src)
        if word in ("yield", "skip"):
            cur.next()
            cur.expect_end()
            return Stmt(loc, word, auto_label=auto, source=src)
        if word == "out":
            cur.next()
            cur.expect("(")
            ch = cur.name("channel")
            if self.category.get(ch.text) != "channel":
                raise ParseError(f"undeclared variable {ch.text!r} (expected a channel)",
                                 lineno, ch.col)
            cur.expect(",")
            e = cur.expr()
            cur.expect(")")
            cur.expect_end()
            self._check_expr(e, lineno, head.col, writes=None)
            return Stmt(loc, "out", target=ch.text, expr=e, auto_label=auto, source=src)
        # assignment forms
        target = cur.name("statement")
        if cur.peek().text != ":=":
            raise ParseError(f"unknown statement {word!r}", lineno, head.col)
        cur.next()
        cat = self.category.get(target.text)
        if cat not in ("shared", "local"):
            raise ParseError(f"undeclared variable {target.text!r}", lineno, target.col)
        rhs = cur.peek()
        if rhs.text == "havoc" and cur.peek(1).kind == "end":
            cur.next()
            return Stmt(loc, "havoc", target=target.text, auto_label=auto, source=src)
        if rhs.text == "in" and cur.peek(1).text == "(":
            cur.next()
            cur.expect("(")
            ch = cur.name("channel")
            if self.category.get(ch.text) != "channel":
                raise ParseError(f"undeclared variable {ch.text!r} (expected a channel)",
                                 lineno, ch.col)
            cur.expect(")")
            cur.expect_end()
            return Stmt(loc, "in", target=target.text, expr=Var(ch.text), auto_label=auto,
                        source=src)
        e = cur.expr()
        cur.expect_end()
        self._check_expr(e, lineno, rhs.col, writes=target.text)
        return Stmt(loc, "assign", target=target.text, expr=e, auto_label=auto, source=src)

    def _check_expr(self, e: Expr, lineno: int, col: int, writes: Optional[str]) -> None:
        shared: Set[str] = set()
        for v in expr_vars(e):
            cat = self.category.get(v)
            if cat not in ("shared", "local"):
                raise ParseError(f"undeclared variable {v!r}", lineno, col)
            if cat == "shared":
                shared.add(v)
        if writes is not None and self.category.get(writes) == "shared":
            shared.add(writes)
        if len(shared) > 1:
            raise ParseError(
                "multiple shared reads in expression: " + ", ".join(sorted(shared)), lineno, col)

    def _check_locations(self, threads: List[Thread]) -> None:
        owner: Dict[str, str] = {}
        for t in threads:
            for s in t.statements():
                owner[s.loc] = t.name
            if t.last in self.loc_line:
                raise ParseError(f"duplicate location {t.last!r}", self.loc_line[t.last], 1)
        names = [t.name for t in threads]
        if len(set(names)) != len(names):
            raise ParseError("duplicate thread name", 1, 1)
        for loc, target, lineno, col, loops in self.gotos:
            if target not in owner or owner[target] != owner[loc]:
                raise ParseError(f"goto to unknown location {target!r}", lineno, col)
            if self.loc_loops[target] != loops:
                raise ParseError(f"goto {target!r} crosses a loop nesting level", lineno, col)
        for name, locs, lineno in self.blocks:
            for l in locs:
                if l not in owner:
                    raise ParseError(f"block {name!r} names unknown location {l!r}", lineno, 1)
        for t in threads:
            g = build_flow_graph(t)
            bad = g.unreachable()
            if bad:
                loc = bad[0]
                raise ParseError(f"unreachable code at location {loc!r}", self.loc_line.get(loc, 0), 1)


def parse_program(text: str) -> Program:
    """Parse DSL source text into a :class:`Program`."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Flow graphs

@dataclass(frozen=True)
class FlowGraph:
    """Per-thread flow graph; one node per statement plus the exit node.

    ``edges[loc]`` lists successors in order: for ``if``/``while`` the first
    entry is the then/body successor and the second the else/exit successor.
    """

    tid: int
    name: str
    nodes: Dict[str, Stmt]
    edges: Dict[str, Tuple[str, ...]]
    entry: str
    exit: str
    order: Tuple[str, ...]

    def succ(self, loc: str) -> Tuple[str, ...]:
        return self.edges[loc]

    def preds(self, loc: str) -> List[str]:
        return [u for u in self.order if loc in self.edges[u]]

    def predecessor_map(self) -> Dict[str, List[str]]:
        out: Dict[str, List[str]] = {u: [] for u in self.order}
        for u in self.order:
            for v in self.edges[u]:
                if u not in out[v]:
                    out[v].append(u)
        return out

    def reachable_from(self, start: str, avoid: Optional[str] = None) -> Set[str]:
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            if u == avoid and u != start:
                continue
            for v in self.edges[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def unreachable(self) -> List[str]:
        fwd = self.reachable_from(self.entry)
        rev: Dict[str, List[str]] = self.predecessor_map()
        back = {self.exit}
        stack = [self.exit]
        while stack:
            v = stack.pop()
            for u in rev[v]:
                if u not in back:
                    back.add(u)
                    stack.append(u)
        return [l for l in self.order if l not in fwd or l not in back]

    def back_edges(self) -> Set[Tuple[str, str]]:
        """Edges whose target is an enclosing ``while`` header of the source."""
        out = set()
        index = {l: i for i, l in enumerate(self.order)}
        for u in self.order:
            for v in self.edges[u]:
                if index[v] <= index[u]:
                    out.add((u, v))
        return out


def build_flow_graph(thread: Thread) -> FlowGraph:
    """Build the flow graph of a single thread."""
    nodes: Dict[str, Stmt] = {}
    edges: Dict[str, Tuple[str, ...]] = {}
    order: List[str] = []
    last = thread.last

    def first_of(block: Sequence[Stmt], follow: str) -> str:
        return block[0].loc if block else follow

    def visit(block: Sequence[Stmt], follow: str) -> None:
        for i, s in enumerate(block):
            nxt = block[i + 1].loc if i + 1 < len(block) else follow
            nodes[s.loc] = s
            order.append(s.loc)
            if s.kind == "while":
                edges[s.loc] = (first_of(s.body, s.loc), nxt)
                visit(s.body, s.loc)
            elif s.kind == "if":
                edges[s.loc] = (first_of(s.body, nxt), first_of(s.orelse, nxt))
                visit(s.body, nxt)
                visit(s.orelse, nxt)
            elif s.kind == "goto":
                edges[s.loc] = (s.target,)
            else:
                edges[s.loc] = (nxt,)

    visit(thread.body, last)
    nodes[last] = Stmt(last, "skip")
    edges[last] = ()
    order.append(last)
    return FlowGraph(thread.tid, thread.name, nodes, edges, thread.first, last, tuple(order))


def build_flow_graphs(program: Program) -> Dict[int, FlowGraph]:
    return {t.tid: build_flow_graph(t) for t in program.threads}


def dump_cfg(program: Program) -> str:
    """Plain-text adjacency listing: ``thread loc kind -> succ1 succ2``."""
    out: List[str] = []
    for t in program.threads:
        g = build_flow_graph(t)
        for loc in g.order:
            succ = " ".join(g.edges[loc]) if g.edges[loc] else "-"
            out.append(f"{t.name} {loc} {g.nodes[loc].kind} -> {succ}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Pretty printer

def format_statement_head(s: Stmt) -> str:
    """Statement text without label, braces or nested bodies."""
    k = s.kind
    if k == "assign":
        return f"{s.target} := {format_expr(s.expr)}"
    if k == "havoc":
        return f"{s.target} := havoc"
    if k == "in":
        return f"{s.target} := in({s.expr.name})"
    if k == "out":
        return f"out({s.target}, {format_expr(s.expr)})"
    if k in ("if", "while"):
        return f"{k} ({format_expr(s.expr)})"
    if k in SYNC_KINDS:
        return f"{k}({s.target})"
    if k == "goto":
        return f"goto {s.target}"
    return k


def unparse(program: Program) -> str:
    """Render a program in canonical DSL form (reparses to an equal AST)."""
    out: List[str] = []
    cats = [("shared", program.shared_vars), ("local", program.local_vars),
            ("lock", program.lock_vars), ("cond", program.cond_vars),
            ("guard", program.guard_vars), ("channel", program.channels)]
    for cat, names in cats:
        if names:
            out.append(f"decl {cat} " + ", ".join(names))
    for name, locs in program.blocks:
        out.append(f"block {name}: " + ", ".join(locs))

    def emit(block: Sequence[Stmt], depth: int) -> None:
        pad = "  " * depth
        for s in block:
            label = "" if s.auto_label else f"{s.loc}: "
            head = format_statement_head(s)
            if s.kind in ("if", "while"):
                out.append(f"{pad}{label}{head} {{")
                emit(s.body, depth + 1)
                if s.kind == "if" and s.orelse:
                    out.append(f"{pad}}} else {{")
                    emit(s.orelse, depth + 1)
                out.append(f"{pad}}}")
            else:
                out.append(f"{pad}{label}{head}")

    for t in program.threads:
        if out:
            out.append("")
        out.append(f"thread {t.name} {{")
        emit(t.body, 1)
        out.append("}")
    return "\n".join(out) + "\n"
