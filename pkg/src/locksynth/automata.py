"""Automata over abstract observables for the two scheduler semantics.

``build_np_nfa`` follows the non-preemptive rules: the running thread keeps
control until it finishes or sits at a ``lock``, ``wait``, ``wait_not`` or
``yield`` statement.  ``build_p_nfa`` lets any thread move at any location
boundary and additionally tracks conflicts with four-valued propositions so
that paths violating mutex constraints are pruned.

Statements whose abstraction holds several operations (``r(x); w(x)``) run
atomically: no other thread moves between their operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import (Callable, Dict, FrozenSet, Iterable, List, NamedTuple, Optional,
                    Sequence, Set, Tuple)

from .abstraction import AbstractObservable, AbstractProgram, branch, read, write

SWITCH_KINDS = ("lock", "wait", "wait_not", "yield")

Symbol = Optional[AbstractObservable]
Word = Tuple[AbstractObservable, ...]


class Conflict(NamedTuple):
    """Minimal violation of a mutex constraint.

    Thread ``tid1`` moves ``pre -> mid -> post`` while thread ``tid2`` moves
    ``cpre -> cpost`` in between.  ``conflict[:5]`` is the location tuple.
    """

    pre: str
    mid: str
    post: str
    cpre: str
    cpost: str
    tid1: int
    tid2: int

    @property
    def locations(self) -> Tuple[str, str, str, str, str]:
        return (self.pre, self.mid, self.post, self.cpre, self.cpost)


class ProgState(NamedTuple):
    """Automaton state.

    ``pos`` holds one position code per thread: ``location_index * 16 + k``
    where ``k`` counts operations already executed at that location.
    ``props`` lists ``(conflict index, value)`` for activated conflicts only.
    ``done`` lists alternatives of multi-alternative constraints whose
    conflicts have completed.
    """

    sync_vals: Tuple[int, ...]
    ctid: int
    pos: Tuple[int, ...]
    props: Tuple[Tuple[int, int], ...] = ()
    done: Tuple[Tuple[int, int], ...] = ()


_SUB = 16


@dataclass
class _Move:
    symbol: Symbol
    target: int            # new position code
    moves_location: bool
    sync: Optional[Tuple[str, int]]  # (kind, variable index)


class _ThreadCode:
    """Precomputed per-position moves of one abstract thread."""

    def __init__(self, t, var_index: Dict[str, int]):
        self.tid = t.tid
        self.name = t.name
        self.order = list(t.order)
        self.index = {l: i for i, l in enumerate(self.order)}
        self.first = self.index[t.first] * _SUB
        self.last = self.index[t.last] * _SUB
        self.switch_points: Set[int] = set()
        self.moves: Dict[int, List[_Move]] = {}
        for loc in self.order:
            li = self.index[loc]
            ops = t.ops[loc]
            succ = t.graph.edges[loc]
            if not succ:
                self.moves[li * _SUB] = []
                continue
            if ops[0].kind in SWITCH_KINDS:
                self.switch_points.add(li * _SUB)
            for k, op in enumerate(ops):
                code = li * _SUB + k
                final = k == len(ops) - 1
                nxt = [self.index[s] * _SUB for s in succ]
                if op.kind in ("r", "w"):
                    sym = (read if op.kind == "r" else write)(t.tid, op.var, loc)
                    tgt = nxt[0] if final else code + 1
                    self.moves[code] = [_Move(sym, tgt, final, None)]
                elif op.kind == "if":
                    self.moves[code] = [_Move(branch(t.tid, "if", loc), nxt[0], True, None),
                                        _Move(branch(t.tid, "else", loc), nxt[1], True, None)]
                elif op.kind == "while":
                    self.moves[code] = [_Move(branch(t.tid, "loop", loc), nxt[0], True, None),
                                        _Move(branch(t.tid, "exitloop", loc), nxt[1], True, None)]
                elif op.var and op.kind != "goto":
                    self.moves[code] = [_Move(None, nxt[0], True, (op.kind, var_index[op.var]))]
                else:
                    self.moves[code] = [_Move(None, nxt[0], True, None)]

    def loc_name(self, code: int) -> str:
        return self.order[code // _SUB]


def _apply_sync(vals: Tuple[int, ...], sync: Optional[Tuple[str, int]], tid: int
                ) -> Optional[Tuple[int, ...]]:
    """New valuation after a synchronization op, or None if it is blocked."""
    if sync is None:
        return vals
    kind, i = sync
    v = vals[i]
    if kind == "lock":
        return vals[:i] + (tid,) + vals[i + 1:] if v == 0 else None
    if kind == "unlock":
        return vals[:i] + (0,) + vals[i + 1:] if v == tid else None
    if kind in ("wait", "assume"):
        return vals if v == 1 else None
    if kind in ("wait_not", "assume_not"):
        return vals if v == 0 else None
    if kind in ("notify", "set"):
        return vals[:i] + (1,) + vals[i + 1:]
    if kind in ("reset", "unset"):
        return vals[:i] + (0,) + vals[i + 1:]
    raise ValueError(kind)


class Nfa:
    """On-the-fly automaton; states are :class:`ProgState` values."""

    preemptive = False

    def __init__(self, ap: AbstractProgram):
        self.ap = ap
        sync_names = list(ap.lock_vars) + list(ap.cond_vars) + list(ap.guard_vars)
        self.sync_names = sync_names
        self.var_index = {v: i for i, v in enumerate(sync_names)}
        self.threads = [_ThreadCode(t, self.var_index) for t in ap.threads]
        self.n = len(self.threads)
        self.initial = ProgState(tuple(0 for _ in sync_names), 0,
                                 tuple(t.first for t in self.threads))
        self._succ_cache: Dict[ProgState, List[Tuple[Symbol, ProgState]]] = {}

    # -- helpers --------------------------------------------------------
    def locations(self, state: ProgState) -> Tuple[str, ...]:
        return tuple(t.loc_name(c) for t, c in zip(self.threads, state.pos))

    def all_done(self, state: ProgState) -> bool:
        return all(c == t.last for t, c in zip(self.threads, state.pos))

    def is_accepting(self, state: ProgState) -> bool:
        return self.all_done(state) and not state.props

    def successors(self, state: ProgState) -> List[Tuple[Symbol, ProgState]]:
        cached = self._succ_cache.get(state)
        if cached is None:
            cached = self._successors(state)
            self._succ_cache[state] = cached
        return cached

    def is_deadlock(self, state: ProgState) -> bool:
        """Some thread is unfinished and no thread has an enabled move.

        Control switches alone do not count: under the non-preemptive rules
        blocked threads may keep passing control among themselves."""
        if self.all_done(state):
            return False
        return not any(any(True for _ in self.thread_moves(state, i)) for i in range(self.n))

    def thread_moves(self, state: ProgState, i: int) -> Iterable[Tuple[_Move, Tuple[int, ...]]]:
        t = self.threads[i]
        for mv in t.moves.get(state.pos[i], ()):
            vals = _apply_sync(state.sync_vals, mv.sync, t.tid)
            if vals is not None:
                yield mv, vals

    def _successors(self, state: ProgState) -> List[Tuple[Symbol, ProgState]]:
        raise NotImplementedError

    def epsilon_closure(self, states: Iterable[ProgState]) -> Set[ProgState]:
        seen = set(states)
        stack = list(seen)
        while stack:
            s = stack.pop()
            for sym, t in self.successors(s):
                if sym is None and t not in seen:
                    seen.add(t)
                    stack.append(t)
        return seen

    def reachable_states(self, limit: int = 2_000_000) -> Set[ProgState]:
        seen = {self.initial}
        stack = [self.initial]
        while stack:
            s = stack.pop()
            for _, t in self.successors(s):
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
                    if len(seen) > limit:
                        raise RuntimeError("state space exceeds exploration limit")
        return seen

    def accepts(self, word: Sequence[AbstractObservable]) -> bool:
        current = self.epsilon_closure([self.initial])
        for a in word:
            nxt = set()
            for s in current:
                for sym, t in self.successors(s):
                    if sym == a:
                        nxt.add(t)
            current = self.epsilon_closure(nxt)
            if not current:
                return False
        return any(self.is_accepting(s) for s in current)


class NpNfa(Nfa):
    """Non-preemptive semantics (rules Seq, Thread_end, Nswitch)."""

    def _successors(self, state: ProgState) -> List[Tuple[Symbol, ProgState]]:
        out: List[Tuple[Symbol, ProgState]] = []
        c = state.ctid
        if c == 0:
            for j in range(1, self.n + 1):
                out.append((None, state._replace(ctid=j)))
            return out
        i = c - 1
        t = self.threads[i]
        code = state.pos[i]
        if code == t.last or code in t.switch_points:
            for j in range(1, self.n + 1):
                if j != c:
                    out.append((None, state._replace(ctid=j)))
        for mv, vals in self.thread_moves(state, i):
            pos = state.pos[:i] + (mv.target,) + state.pos[i + 1:]
            out.append((mv.symbol, ProgState(vals, c, pos)))
        return out


class PNfa(Nfa):
    """Preemptive semantics with conflict tracking.

    ``constraint`` is a conjunction of groups; each group is a disjunction of
    alternatives; each alternative is a list of conflicts (one mutex
    constraint).  A path is cut once every alternative of some group has a
    completed conflict.
    """

    preemptive = True

    def __init__(self, ap: AbstractProgram, constraint: Sequence[Sequence[Sequence[Conflict]]] = ()):
        super().__init__(ap)
        self.constraint = [[list(alt) for alt in grp] for grp in constraint]
        self.conflicts: List[Conflict] = []
        self.conflict_alts: List[List[Tuple[int, int]]] = []
        index: Dict[Conflict, int] = {}
        for g, grp in enumerate(self.constraint):
            for a, alt in enumerate(grp):
                for c in alt:
                    if c not in index:
                        index[c] = len(self.conflicts)
                        self.conflicts.append(c)
                        self.conflict_alts.append([])
                    self.conflict_alts[index[c]].append((g, a))
        # per moving thread: conflicts where it is tid1 keyed by (pre code, mid code)
        self._by_activation: Dict[Tuple[int, int, int], List[int]] = {}
        self._codes: List[Tuple[int, int, int, int, int]] = []
        for k, c in enumerate(self.conflicts):
            t1 = self.threads[c.tid1 - 1]
            t2 = self.threads[c.tid2 - 1]
            codes = (t1.index[c.pre] * _SUB, t1.index[c.mid] * _SUB, t1.index[c.post] * _SUB,
                     t2.index[c.cpre] * _SUB, t2.index[c.cpost] * _SUB)
            self._codes.append(codes)
            self._by_activation.setdefault((c.tid1, codes[0], codes[1]), []).append(k)

    def _successors(self, state: ProgState) -> List[Tuple[Symbol, ProgState]]:
        out: List[Tuple[Symbol, ProgState]] = []
        busy = [i for i, c in enumerate(state.pos) if c % _SUB]
        movers = busy if busy else range(self.n)
        for i in movers:
            for mv, vals in self.thread_moves(state, i):
                pos = state.pos[:i] + (mv.target,) + state.pos[i + 1:]
                props, done = state.props, state.done
                if mv.moves_location and self.conflicts:
                    upd = self._track(state, i + 1, mv.target)
                    if upd is None:
                        continue
                    props, done = upd
                out.append((mv.symbol, ProgState(vals, 0, pos, props, done)))
        return out

    def _track(self, state: ProgState, tid: int, target: int
               ) -> Optional[Tuple[Tuple[Tuple[int, int], ...], Tuple[Tuple[int, int], ...]]]:
        src = state.pos[tid - 1] - state.pos[tid - 1] % _SUB
        props = dict(state.props)
        completed: List[int] = []
        for k, p in list(props.items()):
            c = self.conflicts[k]
            pre, mid, post, cpre, cpost = self._codes[k]
            if c.tid1 == tid and src == mid:
                # thread 1 leaves mid: completion if progressed and heading to post
                if p == 2 and target == post:
                    completed.append(k)
                del props[k]
            elif p == 1 and c.tid2 == tid and src == cpre and target == cpost \
                    and state.pos[c.tid1 - 1] == mid:
                props[k] = 2
        for k in self._by_activation.get((tid, src, target), ()):
            if k not in props:
                props[k] = 1
        done = set(state.done)
        for k in completed:
            for g, a in self.conflict_alts[k]:
                done.add((g, a))
        for g, grp in enumerate(self.constraint):
            if grp and all((g, a) in done for a in range(len(grp))):
                return None
        return tuple(sorted(props.items())), tuple(sorted(done))


def build_np_nfa(ap: AbstractProgram) -> NpNfa:
    return NpNfa(ap)


def build_p_nfa(ap: AbstractProgram, conflicts: Iterable[Conflict] = (),
                constraint: Optional[Sequence[Sequence[Sequence[Conflict]]]] = None) -> PNfa:
    """Preemptive automaton pruned by ``conflicts``.

    With only ``conflicts`` given, every conflict must individually never
    complete.  ``constraint`` supplies the grouped (disjunctive) form instead.
    """
    if constraint is None:
        constraint = [[[c]] for c in sorted(set(conflicts))]
    return PNfa(ap, constraint)


def enumerate_executions(nfa: Nfa, max_len: int) -> Set[Word]:
    """All accepted words of length at most ``max_len`` (exact)."""
    memo: Dict[Tuple[ProgState, int], FrozenSet[Word]] = {}
    closures: Dict[ProgState, Set[ProgState]] = {}

    def closure(s: ProgState) -> Set[ProgState]:
        c = closures.get(s)
        if c is None:
            c = nfa.epsilon_closure([s])
            closures[s] = c
        return c

    def words(s: ProgState, budget: int) -> FrozenSet[Word]:
        key = (s, budget)
        hit = memo.get(key)
        if hit is not None:
            return hit
        acc: Set[Word] = set()
        cl = closure(s)
        if any(nfa.is_accepting(x) for x in cl):
            acc.add(())
        if budget > 0:
            for x in cl:
                for sym, t in nfa.successors(x):
                    if sym is not None:
                        for w in words(t, budget - 1):
                            acc.add((sym,) + w)
        res = frozenset(acc)
        memo[key] = res
        return res

    return set(words(nfa.initial, max_len))


def dump_nfa(nfa: Nfa, limit: int = 10_000) -> str:
    """Plain-text listing of reachable states and transitions."""
    lines: List[str] = []
    ids: Dict[ProgState, int] = {nfa.initial: 0}
    queue = [nfa.initial]
    while queue and len(ids) <= limit:
        s = queue.pop(0)
        flag = " accept" if nfa.is_accepting(s) else ""
        lines.append(f"s{ids[s]} {nfa.locations(s)} vals={s.sync_vals} ctid={s.ctid} "
                     f"props={s.props}{flag}")
        for sym, t in nfa.successors(s):
            if t not in ids:
                ids[t] = len(ids)
                queue.append(t)
            lines.append(f"  -{sym if sym is not None else 'eps'}-> s{ids[t]}")
    return "\n".join(lines) + "\n"
