"""Counterexample generalization, mutex inference and conflict derivation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

from .abstraction import AbstractObservable, AbstractOp, AbstractProgram, AbstractThread
from .automata import Conflict, Nfa, Word
from .inclusion import word_included

DEFAULT_NHOOD_CAP = 10 ** 6


class NeighborhoodTooLarge(Exception):
    pass


class NotLockEnforceable(Exception):
    pass


class Event(NamedTuple):
    """The ``n``-th occurrence of a symbol within a counterexample."""

    symbol: AbstractObservable
    n: int = 0

    @property
    def tid(self) -> int:
        return self.symbol.tid

    def __str__(self) -> str:
        return str(self.symbol) if self.n == 0 else f"{self.symbol}#{self.n}"


class HbAtom(NamedTuple):
    before: Event
    after: Event

    def __str__(self) -> str:
        return f"{self.before} < {self.after}"


@dataclass(frozen=True)
class HbFormula:
    """Disjunction of conjunctions of happens-before atoms.

    ``disjuncts == ()`` is ``false``; a single empty conjunction is ``true``.
    ``word`` is the counterexample the formula was generalized from.
    """

    disjuncts: Tuple[FrozenSet[HbAtom], ...]
    word: Word = ()

    def holds(self, word: Sequence[AbstractObservable]) -> bool:
        pos = _positions(word)
        return any(all(pos[a.before] < pos[a.after] for a in conj) for conj in self.disjuncts)

    def __str__(self) -> str:
        if not self.disjuncts:
            return "false"
        parts = []
        for conj in self.disjuncts:
            parts.append("true" if not conj else " & ".join(sorted(str(a) for a in conj)))
        return " | ".join(f"({p})" for p in parts)


class Region(NamedTuple):
    tid: int
    start: str
    end: str


class MutexConstraint(NamedTuple):
    region1: Region
    region2: Region

    def __str__(self) -> str:
        r1, r2 = self.region1, self.region2
        return f"mutex(T{r1.tid}.[{r1.start}:{r1.end}], T{r2.tid}.[{r2.start}:{r2.end}])"


def _events(word: Sequence[AbstractObservable]) -> List[Event]:
    count: Dict[AbstractObservable, int] = {}
    out = []
    for a in word:
        n = count.get(a, 0)
        out.append(Event(a, n))
        count[a] = n + 1
    return out


def _positions(word: Sequence[AbstractObservable]) -> Dict[Event, int]:
    return {e: i for i, e in enumerate(_events(word))}


# ---------------------------------------------------------------------------
# Neighborhood

def _interleaving_count(word: Sequence[AbstractObservable]) -> int:
    per: Dict[int, int] = {}
    for a in word:
        per[a.tid] = per.get(a.tid, 0) + 1
    total = math.factorial(len(word))
    for c in per.values():
        total //= math.factorial(c)
    return total


def compute_nhood(cex: Sequence[AbstractObservable], p: Nfa,
                  cap: int = DEFAULT_NHOOD_CAP) -> Set[Word]:
    """All per-thread-order-preserving permutations of ``cex`` accepted by ``p``."""
    word = tuple(cex)
    if _interleaving_count(word) > cap:
        raise NeighborhoodTooLarge(f"neighborhood too large (> {cap} interleavings)")
    tids = sorted({a.tid for a in word})
    seqs = {t: [a for a in word if a.tid == t] for t in tids}
    out: Set[Word] = set()

    def rec(states, idx: Dict[int, int], prefix: List[AbstractObservable]) -> None:
        if len(prefix) == len(word):
            if any(p.is_accepting(s) for s in states):
                out.add(tuple(prefix))
            return
        for t in tids:
            i = idx[t]
            if i == len(seqs[t]):
                continue
            a = seqs[t][i]
            nxt = set()
            for s in states:
                for sym, u in p.successors(s):
                    if sym == a:
                        nxt.add(u)
            if not nxt:
                continue
            idx[t] = i + 1
            prefix.append(a)
            rec(p.epsilon_closure(nxt), idx, prefix)
            prefix.pop()
            idx[t] = i

    rec(p.epsilon_closure([p.initial]), {t: 0 for t in tids}, [])
    return out


# ---------------------------------------------------------------------------
# Generalization

def _dependent_events(a: Event, b: Event) -> bool:
    x, y = a.symbol, b.symbol
    if not (x.is_access and y.is_access):
        return False
    return x.theta[1] == y.theta[1] and not (x.theta[0] == "read" and y.theta[0] == "read")


def _literals(word: Sequence[AbstractObservable], pairs: Sequence[Tuple[Event, Event]]
              ) -> FrozenSet[HbAtom]:
    pos = _positions(word)
    return frozenset(HbAtom(a, b) if pos[a] < pos[b] else HbAtom(b, a) for a, b in pairs)


def classify_nhood(nhood: Iterable[Word], np: Nfa, k: int) -> Tuple[List[Word], List[Word]]:
    bad, good = [], []
    for w in sorted(nhood):
        (good if word_included(w, np, k) else bad).append(w)
    return bad, good


def minimize_dnf(bad: Sequence[Word], good: Sequence[Word], events: Sequence[Event]
                 ) -> Tuple[FrozenSet[HbAtom], ...]:
    """Exact DNF over cross-thread atoms separating ``bad`` from ``good``."""
    if not bad:
        return ()
    cross = [(a, b) for i, a in enumerate(events) for b in events[i + 1:] if a.tid != b.tid]
    dependent = [(a, b) for a, b in cross if _dependent_events(a, b)]
    pairs = dependent
    sig_bad = {_literals(w, pairs) for w in bad}
    if any(_literals(w, pairs) in sig_bad for w in good):
        pairs = cross
    rank = {e: i for i, e in enumerate(events)}
    good_lits = [_literals(w, pairs) for w in good]
    conjuncts: List[FrozenSet[HbAtom]] = []
    for w in bad:
        lits = _literals(w, pairs)
        if any(c <= lits for c in conjuncts):
            continue
        conj = set(lits)
        for atom in sorted(lits, key=lambda a: (-rank[a.after], -rank[a.before])):
            trial = conj - {atom}
            if not any(trial <= g for g in good_lits):
                conj = trial
        conjuncts.append(frozenset(conj))
    unique = []
    for c in conjuncts:
        if not any(o < c for o in conjuncts) and c not in unique:
            unique.append(c)
    return tuple(unique)


def generalize(cex: Sequence[AbstractObservable], p: Nfa, np: Nfa, k: int,
               cap: int = DEFAULT_NHOOD_CAP) -> HbFormula:
    """Happens-before formula exactly characterizing bad words of ``nhood(cex)``."""
    nh = compute_nhood(cex, p, cap)
    bad, good = classify_nhood(nh, np, k)
    return HbFormula(minimize_dnf(bad, good, _events(cex)), tuple(cex))


# ---------------------------------------------------------------------------
# Mutex inference

def _next_location(ap: Optional[AbstractProgram], word: Word, ev: Event) -> str:
    """Location the thread reaches after executing the statement of ``ev``."""
    loc = ev.symbol.loc
    if ap is None:
        return loc
    t = ap.thread(ev.tid)
    succ = t.graph.edges[loc]
    if len(succ) == 1:
        return succ[0]
    if not succ:
        return loc
    evs = _events(word)
    idx = evs.index(ev)
    for later in evs[idx:]:
        s = later.symbol
        if s.tid == ev.tid and s.loc == loc and not s.is_access:
            return succ[0] if s.theta[0] in ("if", "loop") else succ[1]
    return succ[0]


def _pattern_mutexes(conj: FrozenSet[HbAtom], word: Word, ap: Optional[AbstractProgram]
                     ) -> List[MutexConstraint]:
    pos = _positions(word)
    found = []
    atoms = sorted(conj, key=lambda a: (pos[a.before], pos[a.after]))
    for x in atoms:
        for y in atoms:
            e1, f1 = x.before, x.after
            f2, e2 = y.before, y.after
            if x == y or e1.tid != e2.tid or f1.tid != f2.tid or e1.tid == f1.tid:
                continue
            # each region covers both events of its thread; serializing the
            # regions in either order then contradicts one of the two atoms
            a, b = sorted((e1, e2), key=pos.__getitem__)
            c, d = sorted((f1, f2), key=pos.__getitem__)
            r1 = Region(a.tid, a.symbol.loc, _next_location(ap, word, b))
            r2 = Region(c.tid, c.symbol.loc, _next_location(ap, word, d))
            span = (pos[b] - pos[a]) + (pos[d] - pos[c])
            found.append((span, pos[a], pos[c], MutexConstraint(*sorted((r1, r2)))))
    found.sort(key=lambda t: t[:3])
    out: List[MutexConstraint] = []
    for *_, m in found:
        if m not in out:
            out.append(m)
    return out


def infer_mutex_alternatives(phi: HbFormula, ap: Optional[AbstractProgram] = None
                             ) -> List[List[MutexConstraint]]:
    """For each conjunct, every lock-enforceable mutex that rules it out."""
    groups = []
    for conj in phi.disjuncts:
        alts = _pattern_mutexes(conj, phi.word, ap)
        if not alts:
            raise NotLockEnforceable(
                "pattern not lock-enforceable: " + (" & ".join(sorted(map(str, conj))) or "true"))
        groups.append(alts)
    return groups


def infer_mutexes(phi: HbFormula, ap: Optional[AbstractProgram] = None) -> List[MutexConstraint]:
    """One mutex constraint per conjunct (the tightest matching pattern).

    With ``ap`` the end of each region is moved to the location reached after
    the last constrained statement, so the region covers its execution.
    """
    out: List[MutexConstraint] = []
    for alts in infer_mutex_alternatives(phi, ap):
        if alts[0] not in out:
            out.append(alts[0])
    return out


# ---------------------------------------------------------------------------
# Conflicts

def region_nodes(t: AbstractThread, start: str, end: str) -> Tuple[Set[str], Set[Tuple[str, str]]]:
    """Locations on paths from ``start`` to ``end`` and the edges executed inside."""
    g = t.graph
    fwd = g.reachable_from(start, avoid=end)
    preds = g.predecessor_map()
    bwd = {end}
    stack = [end]
    while stack:
        v = stack.pop()
        if v == start:
            continue
        for u in preds[v]:
            if u not in bwd:
                bwd.add(u)
                stack.append(u)
    nodes = fwd & bwd
    if start not in nodes or end not in nodes:
        return set(), set()
    edges = {(u, v) for u in nodes for v in g.edges[u]
             if v in nodes and u != end and v != start}
    return nodes, edges


def _closure(edges: Set[Tuple[str, str]], nodes: Set[str]) -> Dict[str, Set[str]]:
    reach = {n: {n} for n in nodes}
    changed = True
    while changed:
        changed = False
        for u, v in edges:
            new = reach[v] - reach[u]
            if new:
                reach[u] |= new
                changed = True
    return reach


def _depends(x: AbstractOp, y: AbstractOp) -> bool:
    return x.var == y.var and not (x.kind == "r" and y.kind == "r")


def _oriented_conflicts(ap: AbstractProgram, ri: Region, rj: Region, relevance: bool
                        ) -> List[Conflict]:
    ti, tj = ap.thread(ri.tid), ap.thread(rj.tid)
    ni, ei = region_nodes(ti, ri.start, ri.end)
    nj, ej = region_nodes(tj, rj.start, rj.end)
    triples = [(a, b, c) for (a, b) in sorted(ei) for (b2, c) in sorted(ei) if b2 == b]
    pairs = sorted(ej)
    if not relevance:
        return [Conflict(a, b, c, x, y, ri.tid, rj.tid) for a, b, c in triples for x, y in pairs]
    reach_i = _closure(ei, ni)
    reach_j = _closure(ej, nj)
    exec_i = {u for u, _ in ei}
    exec_j = {u for u, _ in ej}
    out = []
    for pre, mid, post in triples:
        before = [op for x in exec_i if pre in reach_i[x] for op in ti.accesses(x)]
        after = list(ti.accesses(mid)) + [op for y in reach_i[post] if y in exec_i
                                          for op in ti.accesses(y)]
        first = [z for z in exec_j if any(_depends(op, a) for op in tj.accesses(z) for a in before)]
        second = [z for z in exec_j if any(_depends(op, b) for op in tj.accesses(z) for b in after)]
        for cpre, cpost in pairs:
            between = any(
                (cpre in reach_j[x] and y in reach_j[cpre]) or (cpre in reach_j[y] and x in reach_j[cpre])
                for x in first for y in second)
            if between:
                out.append(Conflict(pre, mid, post, cpre, cpost, ri.tid, rj.tid))
    return out


def derive_conflicts(m: MutexConstraint, ap: AbstractProgram, relevance: bool = True
                     ) -> List[Conflict]:
    """Conflicts of a mutex constraint, for both orientations.

    A conflict is an adjacent triple ``pre -> mid -> post`` inside one region
    and an adjacent pair ``cpre -> cpost`` inside the other.  With
    ``relevance`` only conflicts that can break serializability are kept:
    some access executed up to ``pre`` and some access executed from ``mid``
    on must each depend on a statement of the other region, and ``cpre`` must
    lie between those two statements.
    """
    out = _oriented_conflicts(ap, m.region1, m.region2, relevance)
    out += _oriented_conflicts(ap, m.region2, m.region1, relevance)
    return sorted(set(out))
