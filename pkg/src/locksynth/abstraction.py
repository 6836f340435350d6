"""Data-oblivious abstraction of programs and the independence relation.

Each concrete statement becomes a short sequence of abstract operations kept
under the statement's original location: shared reads ``r(v)``, shared writes
``w(v)``, channel interaction as ``w(dev)``, nondeterministic branches, and
synchronization statements unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from .lang import SYNC_KINDS, FlowGraph, Program, Stmt, build_flow_graph, expr_vars

DEV = "dev"

BRANCH_TAGS = ("if", "else", "loop", "exitloop")


class AbstractOp(NamedTuple):
    """One abstract operation: ``r``/``w`` with a variable, a branch, or a sync op."""

    kind: str
    var: str = ""

    def __str__(self) -> str:
        if self.kind in ("if", "while"):
            return f"{self.kind} (*)"
        if self.var:
            return f"{self.kind}({self.var})"
        return self.kind


class AbstractObservable(NamedTuple):
    """Observable symbol ``(tid, theta, loc)``.

    ``theta`` is ``("read", v)``, ``("write", v)`` or a one-element tuple
    holding a branch tag (``if``, ``else``, ``loop``, ``exitloop``).
    """

    tid: int
    theta: Tuple[str, ...]
    loc: str

    @property
    def is_access(self) -> bool:
        return self.theta[0] in ("read", "write")

    @property
    def var(self) -> Optional[str]:
        return self.theta[1] if self.is_access else None

    def __str__(self) -> str:
        th = f"({self.theta[0]},{self.theta[1]})" if self.is_access else self.theta[0]
        return f"({self.tid},{th},{self.loc})"


def read(tid: int, var: str, loc: str) -> AbstractObservable:
    return AbstractObservable(tid, ("read", var), loc)


def write(tid: int, var: str, loc: str) -> AbstractObservable:
    return AbstractObservable(tid, ("write", var), loc)


def branch(tid: int, tag: str, loc: str) -> AbstractObservable:
    return AbstractObservable(tid, (tag,), loc)


def independent(a: AbstractObservable, b: AbstractObservable) -> bool:
    """Commutation relation used for inclusion modulo independence.

    Symbols of the same thread never commute.  Branch tags commute with every
    symbol of another thread.  Two accesses commute iff they touch different
    variables or are both reads.
    """
    if a.tid == b.tid:
        return False
    if not a.is_access or not b.is_access:
        return True
    if a.theta[1] != b.theta[1]:
        return True
    return a.theta[0] == "read" and b.theta[0] == "read"


@dataclass(frozen=True)
class AbstractThread:
    tid: int
    name: str
    ops: Dict[str, Tuple[AbstractOp, ...]]
    graph: FlowGraph

    @property
    def first(self) -> str:
        return self.graph.entry

    @property
    def last(self) -> str:
        return self.graph.exit

    @property
    def order(self) -> Tuple[str, ...]:
        return self.graph.order

    def accesses(self, loc: str) -> List[AbstractOp]:
        return [op for op in self.ops[loc] if op.kind in ("r", "w")]


@dataclass(frozen=True)
class AbstractProgram:
    threads: Tuple[AbstractThread, ...]
    vars: Tuple[str, ...]
    lock_vars: Tuple[str, ...] = ()
    cond_vars: Tuple[str, ...] = ()
    guard_vars: Tuple[str, ...] = ()
    source: Optional[Program] = field(default=None, compare=False, repr=False)

    def thread(self, tid: int) -> AbstractThread:
        return self.threads[tid - 1]

    def locations(self) -> List[str]:
        return [l for t in self.threads for l in t.order]


def abstract_statement(s: Stmt, shared: Sequence[str]) -> Tuple[AbstractOp, ...]:
    shared_set = set(shared)
    reads: List[str] = []
    for v in expr_vars(s.expr):
        if v in shared_set and v not in reads:
            reads.append(v)
    ops: List[AbstractOp] = []
    k = s.kind
    if k == "assign":
        ops = [AbstractOp("r", v) for v in reads]
        if s.target in shared_set:
            ops.append(AbstractOp("w", s.target))
    elif k == "havoc":
        if s.target in shared_set:
            ops.append(AbstractOp("w", s.target))
    elif k == "in":
        ops.append(AbstractOp("w", DEV))
        if s.target in shared_set:
            ops.append(AbstractOp("w", s.target))
    elif k == "out":
        ops = [AbstractOp("r", v) for v in reads] + [AbstractOp("w", DEV)]
    elif k in ("if", "while"):
        ops = [AbstractOp("r", v) for v in reads] + [AbstractOp(k)]
    elif k in SYNC_KINDS or k == "goto":
        ops = [AbstractOp(k, s.target)]
    elif k == "yield":
        ops = [AbstractOp("yield")]
    if not ops:
        ops = [AbstractOp("skip")]
    return tuple(ops)


def abstract_program(p: Program) -> AbstractProgram:
    """Compute the abstract program; locations are preserved verbatim."""
    threads: List[AbstractThread] = []
    uses_dev = False
    for t in p.threads:
        g = build_flow_graph(t)
        ops: Dict[str, Tuple[AbstractOp, ...]] = {}
        for loc in g.order:
            ops[loc] = abstract_statement(g.nodes[loc], p.shared_vars)
            uses_dev |= any(o.var == DEV and o.kind == "w" for o in ops[loc])
        threads.append(AbstractThread(t.tid, t.name, ops, g))
    vars_ = tuple(p.shared_vars) + ((DEV,) if uses_dev and DEV not in p.shared_vars else ())
    return AbstractProgram(tuple(threads), vars_, tuple(p.lock_vars), tuple(p.cond_vars),
                           tuple(p.guard_vars), source=p)


def format_abstract(ap: AbstractProgram) -> str:
    """Render the abstract program in the abstract statement syntax."""
    if ap.source is None:
        out = []
        for t in ap.threads:
            out.append(f"thread {t.name} {{")
            for loc in t.order[:-1]:
                out.append(f"  {loc}: " + "; ".join(map(str, t.ops[loc])))
            out.append("}")
        return "\n".join(out) + "\n"
    lines: List[str] = []

    def emit(t: AbstractThread, block: Sequence[Stmt], depth: int) -> None:
        pad = "  " * depth
        for s in block:
            text = "; ".join(str(o) for o in t.ops[s.loc])
            if s.kind in ("if", "while"):
                lines.append(f"{pad}{s.loc}: {text} {{")
                emit(t, s.body, depth + 1)
                if s.orelse:
                    lines.append(f"{pad}}} else {{")
                    emit(t, s.orelse, depth + 1)
                lines.append(f"{pad}}}")
            else:
                lines.append(f"{pad}{s.loc}: {text}")

    for t, ct in zip(ap.threads, ap.source.threads):
        lines.append(f"thread {t.name} {{")
        emit(t, ct.body, 1)
        lines.append("}")
    return "\n".join(lines) + "\n"
