"""Global lock-placement constraints, objectives, decoding and self-check.

Placement variables live on flow-graph locations: ``LoBef(x, lk)`` puts
``lock(lk)`` on every edge entering ``x``, ``LoAft(x, lk)`` on every edge
leaving it, and likewise ``UnBef``/``UnAft`` for ``unlock``.  ``InLo(x, lk)``
means ``lk`` is held when ``x`` executes, ``InLoEnd(x, lk)`` that it is held
right after ``x`` including any lock/unlock placed there.  ``LoEntry(x, lk)``
locks on the virtual edge entering a thread whose first statement is ``x``;
it lets a thread that starts with a loop hold a lock across iterations.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Set, Tuple

from .abstraction import AbstractProgram, abstract_program
from .automata import Conflict, Nfa, ProgState, build_np_nfa, build_p_nfa
from .inclusion import (DEFAULT_SCHEDULE, InclusionOk, InclusionResult, check_inclusion_iterative,
                        default_max_len)
from .lang import Program, Stmt, parse_program
from .satsolver import Formula, MaxSatResult, MaxSatSession, Unsat

KINDS = ("LoBef", "LoAft", "UnBef", "UnAft")
# lock taken on the virtual edge entering a thread, before its first statement
ENTRY = "LoEntry"
# textual order of insertions that meet at one program point
_POINT_ORDER = {"UnAft": 0, "LoAft": 1, "UnBef": 2, "LoBef": 3, ENTRY: 3}


def lock_names(count: int, taken: Sequence[str]) -> Tuple[str, ...]:
    """``count`` fresh lock names ``lk1, lk2, ...`` avoiding ``taken``."""
    out: List[str] = []
    i = 1
    used = set(taken)
    while len(out) < count:
        name = f"lk{i}"
        if name not in used:
            out.append(name)
        i += 1
    return tuple(out)


@dataclass
class PlacementVars:
    """Formula plus the variable maps of a lock-placement encoding."""

    formula: Formula
    ap: AbstractProgram
    locks: Tuple[str, ...]
    var: Dict[Tuple[str, str, str], int] = field(default_factory=dict)   # (kind, loc, lk)
    order: Dict[Tuple[str, str], int] = field(default_factory=dict)
    preds: Dict[str, List[str]] = field(default_factory=dict)
    tid_of: Dict[str, int] = field(default_factory=dict)
    selectors: Dict[Tuple[Conflict, str], int] = field(default_factory=dict)

    def v(self, kind: str, loc: str, lk: str) -> int:
        return self.var[(kind, loc, lk)]

    def statements(self) -> List[str]:
        return [l for t in self.ap.threads for l in t.order if l != t.last]

    def entry(self, tid: int, lk: str) -> int:
        return self.var[(ENTRY, self.ap.thread(tid).first, lk)]

    def lock_vars(self) -> List[int]:
        """Every variable that places a lock statement."""
        out = [v for (k, _, _), v in self.var.items() if k in ("LoBef", "LoAft", ENTRY)]
        return sorted(out)

    def primary(self) -> List[int]:
        """Placement variables in a fixed order, used for tie-breaking."""
        out = []
        for t in self.ap.threads:
            for lk in self.locks:
                out.append(self.entry(t.tid, lk))
        for kind in KINDS:
            for t in self.ap.threads:
                for loc in t.order:
                    for lk in self.locks:
                        out.append(self.var[(kind, loc, lk)])
        out += [self.order[k] for k in sorted(self.order)]
        return out


def _existing_lock_locations(ap: AbstractProgram) -> Set[str]:
    return {l for t in ap.threads for l in t.order if t.ops[l][0].kind == "lock"}


def _wait_locations(ap: AbstractProgram) -> Set[str]:
    return {l for t in ap.threads for l in t.order if t.ops[l][0].kind in ("wait", "wait_not")}


def encode_global(ap: AbstractProgram, conflicts: Sequence[Conflict], locks: int = 1,
                  names: Optional[Sequence[str]] = None) -> PlacementVars:
    """Hard constraints for a legitimate, deadlock-free placement that
    protects every conflict with one lock without interruption."""
    if locks < 1:
        raise ValueError("at least one lock is required")
    if names is None:
        taken = list(ap.vars) + list(ap.lock_vars) + list(ap.cond_vars) + list(ap.guard_vars)
        if ap.source is not None:
            taken += list(ap.source.local_vars) + list(ap.source.channels)
        names = lock_names(locks, taken)
    f = Formula()
    pv = PlacementVars(f, ap, tuple(names))
    existing = _existing_lock_locations(ap)
    waits = _wait_locations(ap)
    for t in ap.threads:
        for loc in t.order:
            pv.tid_of[loc] = t.tid
            for lk in pv.locks:
                for kind in KINDS + ("InLo", "InLoEnd"):
                    pv.var[(kind, loc, lk)] = f.var(f"{kind}({loc},{lk})")
    for a, b in itertools.permutations(pv.locks, 2):
        pv.order[(a, b)] = f.var(f"Order({a},{b})")

    held_on_arrival: Dict[Tuple[str, str], int] = {}
    for t in ap.threads:
        preds = t.graph.predecessor_map()
        for loc in t.order:
            pv.preds[loc] = list(preds[loc])
        for loc in t.order:
            ps = pv.preds[loc]
            for lk in pv.locks:
                lb, la, ub, ua = (pv.v(k, loc, lk) for k in KINDS)
                il, ie = pv.v("InLo", loc, lk), pv.v("InLoEnd", loc, lk)
                pred_end = [pv.v("InLoEnd", p, lk) for p in ps]
                if loc == t.first:
                    # the virtual entry edge acts as one more predecessor
                    ent = f.var(f"{ENTRY}({loc},{lk})")
                    pv.var[(ENTRY, loc, lk)] = ent
                    f.add(-ub, -ent)                        # no lock right before unlock
                    if not ps:
                        f.add(-ent)                         # LoBef already covers this edge
                    pred_end = pred_end + [ent]
                if len(pred_end) == 1:
                    e_var = pred_end[0]
                else:
                    e_var = f.var(f"PreEnd({loc},{lk})")
                    f.define_or(e_var, pred_end)
                held_on_arrival[(loc, lk)] = e_var
                # InLo <-> LoBef | (!UnBef & OR preds InLoEnd)
                f.add(-lb, il)
                f.add(-il, lb, -ub)
                f.add(-il, lb, e_var)
                f.add(ub, -e_var, il)
                f.add(-ub, e_var)                          # unlock needs a held lock
                f.add(-lb, -e_var)                         # no double locking
                # InLoEnd <-> (InLo & !UnAft) | LoAft
                f.add(-ie, il, la)
                f.add(-ie, -ua, la)
                f.add(-il, ua, ie)
                f.add(-la, ie)
                f.add(-ua, il)                             # unlock needs a held lock
                f.add(-la, -il)                            # no double locking
                f.add(-lb, -ub)
                f.add(-la, -ua)
                for p in ps:
                    f.add(-ub, -pv.v("LoAft", p, lk))      # no lock right before unlock
                    f.add(-lb, -pv.v("UnAft", p, lk))      # no unlock right before lock
                for p, q in zip(pred_end, pred_end[1:]):
                    f.add(-p, q)
                    f.add(p, -q)
                if loc in waits or loc in existing:
                    f.add(-il)
                if loc == t.last:
                    f.add(-il)
                    f.add(-lb)
                    f.add(-la)
                    f.add(-ua)

    # strict total lock order and nesting discipline
    for a, b in itertools.combinations(pv.locks, 2):
        f.add(pv.order[(a, b)], pv.order[(b, a)])
        f.add(-pv.order[(a, b)], -pv.order[(b, a)])
    for a, b, c in itertools.permutations(pv.locks, 3):
        f.add(-pv.order[(a, b)], -pv.order[(b, c)], pv.order[(a, c)])
    for loc in pv.tid_of:
        for a, b in itertools.permutations(pv.locks, 2):
            e_var = held_on_arrival[(loc, a)]
            f.add(-pv.v("LoBef", loc, b), -e_var, pv.v("UnBef", loc, a), pv.order[(a, b)])
            f.add(-pv.v("LoAft", loc, b), -pv.v("InLo", loc, a), pv.v("UnAft", loc, a),
                  pv.order[(a, b)])

    lasts = {t.tid: t.last for t in ap.threads}
    for c in sorted(set(conflicts)):
        sels = []
        for lk in pv.locks:
            s = f.var(f"Protect({','.join(c.locations)},{c.tid1},{c.tid2},{lk})")
            pv.selectors[(c, lk)] = s
            sels.append(s)
            for lit in _protection(pv, c, lk, lasts):
                f.add(-s, lit)
        f.add(*sels)
    return pv


def _protection(pv: PlacementVars, c: Conflict, lk: str, lasts: Dict[int, str]) -> List[int]:
    v = pv.v
    lits = [v("InLo", c.pre, lk), -v("UnAft", c.pre, lk), -v("UnBef", c.mid, lk),
            v("InLo", c.mid, lk)]
    if c.post != lasts[c.tid1]:
        lits += [-v("UnAft", c.mid, lk), -v("UnBef", c.post, lk), v("InLo", c.post, lk)]
    lits.append(v("InLo", c.cpre, lk))
    if c.cpost != lasts[c.tid2]:
        lits += [-v("UnAft", c.cpre, lk), -v("UnBef", c.cpost, lk), v("InLo", c.cpost, lk)]
    return lits


# ---------------------------------------------------------------------------
# Objectives

def coarse_scale(pv: PlacementVars) -> int:
    """Integer scale ``2k`` turning the coarse weights into integers."""
    return 2 * max(1, len(pv.statements()))


def encode_coarse(pv: PlacementVars) -> None:
    """Soft clauses: each lock statement costs 1, each protected statement
    ``1/(2k)``; weights are scaled by ``2k``."""
    f = pv.formula
    scale = coarse_scale(pv)
    for v in pv.lock_vars():
        f.add_soft(scale, [-v])
    for loc in pv.statements():
        p = f.var(f"Protected({loc})")
        f.define_or(p, [pv.v("InLo", loc, lk) for lk in pv.locks])
        f.add_soft(1, [-p])


def encode_fine(pv: PlacementVars) -> None:
    """Soft clauses: one unit per pair of statements of different threads
    that share a protecting lock."""
    f = pv.formula
    by_thread = [[l for l in t.order if l != t.last] for t in pv.ap.threads]
    for i, j in itertools.combinations(range(len(by_thread)), 2):
        for s in by_thread[i]:
            for s2 in by_thread[j]:
                a = f.var(f"CoBlocked({s},{s2})")
                for lk in pv.locks:
                    f.add(-pv.v("InLo", s, lk), -pv.v("InLo", s2, lk), a)
                f.add_soft(1, [-a])


def coarse_cost(pv: PlacementVars, model: Sequence[bool]) -> float:
    lam = sum(model[v] for v in pv.lock_vars())
    prot = sum(any(model[pv.v("InLo", l, lk)] for lk in pv.locks) for l in pv.statements())
    return lam + prot / coarse_scale(pv)


def fine_cost(pv: PlacementVars, model: Sequence[bool]) -> int:
    by_thread = [[l for l in t.order if l != t.last] for t in pv.ap.threads]
    total = 0
    for i, j in itertools.combinations(range(len(by_thread)), 2):
        for s in by_thread[i]:
            for s2 in by_thread[j]:
                if any(model[pv.v("InLo", s, lk)] and model[pv.v("InLo", s2, lk)] for lk in pv.locks):
                    total += 1
    return total


def solve_placement(pv: PlacementVars, objective: str = "none",
                    assumptions: Sequence[int] = ()) -> MaxSatResult:
    """Optimal model for ``objective`` in ``none``, ``coarse`` or ``fine``."""
    if objective == "coarse":
        encode_coarse(pv)
    elif objective == "fine":
        encode_fine(pv)
    elif objective != "none":
        raise ValueError(f"unknown objective {objective!r}")
    res = MaxSatSession(pv.formula).solve(assumptions, primary=pv.primary())
    if res is None:
        raise Unsat("unsat constraints: no legitimate lock placement exists")
    return res


# ---------------------------------------------------------------------------
# Decoding

class Edge(NamedTuple):
    """Flow-graph edge ``src -> succ[index]``; ``src`` is None for thread entry."""

    tid: int
    src: Optional[str]
    index: int
    dst: str


class Insertion(NamedTuple):
    edge: Edge
    kind: str          # LoBef / LoAft / UnBef / UnAft / LoEntry
    lock: str

    @property
    def action(self) -> str:
        return "lock" if self.kind.startswith("Lo") else "unlock"


@dataclass(frozen=True)
class LockPlacement:
    locks: Tuple[str, ...]                      # in acquisition order
    insertions: Tuple[Insertion, ...]
    protected: Dict[str, FrozenSet[str]] = field(default_factory=dict)   # lock -> locations
    after_lock: FrozenSet[str] = frozenset()    # statements right after a lock statement

    @property
    def protected_locations(self) -> Set[str]:
        return set().union(*self.protected.values()) if self.protected else set()

    def is_empty(self) -> bool:
        return not self.insertions

    def lock_statement_count(self) -> int:
        return sum(1 for i in self.insertions if i.action == "lock")

    def unlock_statement_count(self) -> int:
        return sum(1 for i in self.insertions if i.action == "unlock")


def _in_edges(ap: AbstractProgram, tid: int, loc: str) -> List[Edge]:
    t = ap.thread(tid)
    out = []
    if loc == t.first:
        out.append(Edge(tid, None, 0, loc))
    for u in t.order:
        for i, v in enumerate(t.graph.edges[u]):
            if v == loc:
                out.append(Edge(tid, u, i, loc))
    return out


def _out_edges(ap: AbstractProgram, tid: int, loc: str) -> List[Edge]:
    t = ap.thread(tid)
    return [Edge(tid, loc, i, v) for i, v in enumerate(t.graph.edges[loc])]


def _insertion_key(i: Insertion):
    e = i.edge
    return (e.tid, e.src or "", e.index, e.dst, i.kind, i.lock)


def decode_placement(pv: PlacementVars, model: Sequence[bool]) -> LockPlacement:
    ap = pv.ap
    rank = {lk: sum(model[pv.order[(o, lk)]] for o in pv.locks if o != lk) for lk in pv.locks}
    order = tuple(sorted(pv.locks, key=lambda lk: (rank[lk], lk)))
    ins: List[Insertion] = []
    used: Set[str] = set()
    for t in ap.threads:
        for lk in pv.locks:
            if model[pv.entry(t.tid, lk)]:
                used.add(lk)
                ins.append(Insertion(Edge(t.tid, None, 0, t.first), ENTRY, lk))
        for loc in t.order:
            for lk in pv.locks:
                for kind in KINDS:
                    if not model[pv.v(kind, loc, lk)]:
                        continue
                    used.add(lk)
                    edges = _in_edges(ap, t.tid, loc) if kind.endswith("Bef") else _out_edges(ap, t.tid, loc)
                    ins += [Insertion(e, kind, lk) for e in edges]
    protected = {lk: frozenset(l for l in pv.tid_of if model[pv.v("InLo", l, lk)]) for lk in pv.locks
                 if lk in used}
    after = set()
    for i in ins:
        if i.action == "lock":
            after.add(i.edge.dst)
    # rename the locks in use to the first names, in acquisition order
    locks = tuple(lk for lk in order if lk in used)
    name = dict(zip(locks, pv.locks))
    ins = [Insertion(i.edge, i.kind, name[i.lock]) for i in ins]
    protected = {name[lk]: ls for lk, ls in protected.items()}
    return LockPlacement(tuple(name[lk] for lk in locks), tuple(sorted(set(ins), key=_insertion_key)),
                         protected, frozenset(after))


# ---------------------------------------------------------------------------
# Emitting patched source

def _anchor(program: Program, stmts: Dict[str, Stmt], e: Edge) -> Tuple[str, int, str, bool]:
    """(before|after, line, indent, needs_else) for the text point of an edge."""
    th = program.thread(e.tid)
    if e.src is None:
        indent = th.body[0].source.indent if th.body else "  "
        return "after", th.open_line, indent, False
    s = stmts[e.src]
    src = s.source
    step = src.indent + "  "
    if s.kind == "if":
        if e.index == 0:
            indent = s.body[0].source.indent if s.body else step
            return "after", src.line, indent, False
        if src.else_line >= 0:
            indent = s.orelse[0].source.indent if s.orelse else step
            return "after", src.else_line, indent, False
        return "before", src.close_line, step, True
    if s.kind == "while":
        if e.index == 0:
            indent = s.body[0].source.indent if s.body else step
            return "after", src.line, indent, False
        return "after", src.close_line, src.indent, False
    if s.kind == "goto":
        return "before", src.line, src.indent, False
    return "after", src.line, src.indent, False


def emit_patched_source(program: Program, placement: LockPlacement) -> str:
    """Original text with lock/unlock lines inserted; untouched otherwise."""
    if placement.is_empty():
        return program.text
    lines = program.text.splitlines()
    stmts = program.statement_map()
    rank = {lk: i for i, lk in enumerate(placement.locks)}
    points: Dict[Tuple[str, int], Dict] = {}
    for ins in placement.insertions:
        where, line, indent, needs_else = _anchor(program, stmts, ins.edge)
        pt = points.setdefault((where, line), {"indent": indent, "else": needs_else, "items": []})
        pt["items"].append(ins)
    taken = set(program.locations())
    counters: Dict[str, int] = {}

    def label(lk: str) -> str:
        while True:
            counters[lk] = counters.get(lk, 0) + 1
            cand = f"{lk}_{counters[lk]}"
            if cand not in taken:
                taken.add(cand)
                return cand

    def render(pt) -> List[str]:
        items = sorted(set(pt["items"]), key=lambda i: (
            _POINT_ORDER[i.kind], rank[i.lock] if i.action == "lock" else -rank[i.lock]))
        seen = set()
        out = []
        if pt["else"]:
            out.append(pt["indent"][:-2] + "} else {")
        for i in items:
            key = (i.kind, i.lock)
            if key in seen:
                continue
            seen.add(key)
            out.append(f"{pt['indent']}{label(i.lock)}: {i.action}({i.lock})")
        return out

    new_locks = [lk for lk in placement.locks if lk not in program.lock_vars]
    decl_line = max((i for i, l in enumerate(lines) if l.strip().startswith("decl ")), default=-1)
    out: List[str] = []
    if decl_line < 0 and new_locks:
        out.append("decl lock " + ", ".join(new_locks))
    for i, text in enumerate(lines):
        if ("before", i) in points:
            out += render(points[("before", i)])
        out.append(text)
        if i == decl_line and new_locks:
            out.append("decl lock " + ", ".join(new_locks))
        if ("after", i) in points:
            out += render(points[("after", i)])
    trailing = "\n" if program.text.endswith("\n") else ""
    return "\n".join(out) + trailing


# ---------------------------------------------------------------------------
# Self-check

@dataclass
class VerificationReport:
    inclusion: InclusionResult
    deadlocks: List[Tuple[str, ...]] = field(default_factory=list)
    legitimacy: List[str] = field(default_factory=list)
    witness: List[Tuple[str, ...]] = field(default_factory=list)
    states: int = 0

    @property
    def preemption_safe(self) -> bool:
        return isinstance(self.inclusion, InclusionOk)

    @property
    def ok(self) -> bool:
        return self.preemption_safe and not self.deadlocks and not self.legitimacy

    def summary(self) -> str:
        parts = [f"preemption-safe: {'yes' if self.preemption_safe else 'no'}",
                 f"deadlock states: {len(self.deadlocks)}",
                 f"legitimacy violations: {len(self.legitimacy)}",
                 f"explored states: {self.states}"]
        return "; ".join(parts)


def _trace(parent: Dict[ProgState, Optional[ProgState]], nfa: Nfa, s: ProgState) -> List[Tuple[str, ...]]:
    path = []
    cur: Optional[ProgState] = s
    while cur is not None:
        path.append(nfa.locations(cur))
        cur = parent[cur]
    return path[::-1]


def check_legitimacy_and_deadlock(ap: AbstractProgram, limit: int = 2_000_000,
                                  nfa: Optional[Nfa] = None
                                  ) -> Tuple[List[Tuple[str, ...]], List[str], List[Tuple[str, ...]], int]:
    """Explore all states (preemptive unless ``nfa`` says otherwise); report
    deadlocks and locking misuse."""
    if nfa is None:
        nfa = build_p_nfa(ap)
    lock_idx = {lk: nfa.var_index[lk] for lk in ap.lock_vars}
    problems: List[str] = []
    for t in ap.threads:
        for loc in t.order:
            op = t.ops[loc][0]
            if op.kind == "lock":
                for nxt in t.graph.edges[loc]:
                    if t.ops[nxt][0].kind == "unlock" and t.ops[nxt][0].var == op.var:
                        problems.append(f"T{t.tid} {loc}: lock({op.var}) immediately followed by unlock")
    parent: Dict[ProgState, Optional[ProgState]] = {nfa.initial: None}
    queue = deque([nfa.initial])
    deadlocks: List[Tuple[str, ...]] = []
    witness: List[Tuple[str, ...]] = []
    while queue:
        s = queue.popleft()
        for ti, th in enumerate(nfa.threads):
            code = s.pos[ti]
            loc = th.loc_name(code)
            op = ap.thread(th.tid).ops[loc][0] if code % 16 == 0 else None
            msg = None
            if op is not None and op.kind == "lock" and s.sync_vals[lock_idx[op.var]] == th.tid:
                msg = f"T{th.tid} {loc}: lock({op.var}) while already holding it"
            elif op is not None and op.kind == "unlock" and s.sync_vals[lock_idx[op.var]] != th.tid:
                msg = f"T{th.tid} {loc}: unlock({op.var}) without holding it"
            elif code == th.last:
                for lk, i in lock_idx.items():
                    if s.sync_vals[i] == th.tid:
                        msg = f"T{th.tid} ends while holding {lk}"
            if msg and msg not in problems:
                problems.append(msg)
                if not witness:
                    witness = _trace(parent, nfa, s)
        if nfa.is_deadlock(s):
            if nfa.locations(s) not in deadlocks:
                deadlocks.append(nfa.locations(s))
            if not witness:
                witness = _trace(parent, nfa, s)
        for _, t in nfa.successors(s):
            if t not in parent:
                parent[t] = s
                queue.append(t)
                if len(parent) > limit:
                    raise RuntimeError("state space exceeds exploration limit")
    return deadlocks, problems, witness, len(parent)


def verify_placement(program: Program, placement: LockPlacement,
                    schedule: Sequence[int] = DEFAULT_SCHEDULE, max_len: Optional[int] = None,
                    patched_text: Optional[str] = None) -> VerificationReport:
    """Check the patched program: preemptive behaviours are included in the
    original's non-preemptive ones, no deadlock state is reachable and the
    locking discipline is legitimate on every explored execution."""
    text = patched_text if patched_text is not None else emit_patched_source(program, placement)
    patched = parse_program(text)
    ap_orig = abstract_program(program)
    ap_new = abstract_program(patched)
    np = build_np_nfa(ap_orig)
    if max_len is None:
        max_len = default_max_len(np)
    inc = check_inclusion_iterative(build_p_nfa(ap_new), np, schedule, max_len)
    deadlocks, problems, witness, n = check_legitimacy_and_deadlock(ap_new)
    return VerificationReport(inc, deadlocks, problems, witness, n)


# name used by the published API
verify_theorem1 = verify_placement
