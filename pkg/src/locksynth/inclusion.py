"""Bounded language inclusion modulo independence.

A word ``u`` of the preemptive automaton is matched by a word ``v`` of the
non-preemptive automaton when ``v`` is a reordering of ``u`` that keeps the
relative order of every dependent pair and moves no symbol by more than
``k`` positions.  The checker reads ``u`` and emits ``v`` in lockstep, one
symbol each per step, keeping two buffers:

* ``delayed``: symbols read from ``u`` that ``v`` has not produced yet;
* ``ahead``: symbols produced by ``v`` that ``u`` has not reached yet.

Each buffered entry remembers how many steps it has waited; an entry older
than ``k`` steps is a displacement beyond the bound and kills the config.
The preemptive side is explored breadth-first over ``(state, config set)``
pairs, discarding pairs whose config set contains that of an already seen
pair for the same state.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .abstraction import AbstractObservable, independent
from .automata import Nfa, ProgState, Word, enumerate_executions

log = logging.getLogger(__name__)

Buffer = Tuple[Tuple[AbstractObservable, int], ...]
Config = Tuple[ProgState, Buffer, Buffer]

DEFAULT_SCHEDULE = (2, 4, 8, 16, 32)


@dataclass(frozen=True)
class DelayedConfig:
    np_state: ProgState
    buffer: Tuple[AbstractObservable, ...]
    ahead: Tuple[AbstractObservable, ...] = ()


@dataclass(frozen=True)
class InclusionOk:
    bound: int
    explored: int = 0


@dataclass(frozen=True)
class Counterexample:
    word: Word
    bound: int
    bound_limited: bool = False

    def __str__(self) -> str:
        return " ".join(str(s) for s in self.word)


InclusionResult = Union[InclusionOk, Counterexample]


def default_max_len(nfa: Nfa) -> int:
    return 2 * sum(len(t.order) for t in nfa.ap.threads)


class _Matcher:
    """Config-set transformer for the non-preemptive side."""

    def __init__(self, np: Nfa, k: int):
        self.np = np
        self.k = k
        self.pruned = False
        self._closure: Dict[ProgState, Tuple[ProgState, ...]] = {}
        self._step: Dict[Tuple[FrozenSet[Config], AbstractObservable], FrozenSet[Config]] = {}
        self._final: Dict[FrozenSet[Config], bool] = {}

    def initial(self) -> FrozenSet[Config]:
        return frozenset([(self.np.initial, (), ())])

    def closure(self, s: ProgState) -> Tuple[ProgState, ...]:
        c = self._closure.get(s)
        if c is None:
            c = tuple(self.np.epsilon_closure([s]))
            self._closure[s] = c
        return c

    def step(self, configs: FrozenSet[Config], a: AbstractObservable) -> FrozenSet[Config]:
        key = (configs, a)
        hit = self._step.get(key)
        if hit is not None:
            return hit
        out: Set[Config] = set()
        for state, delayed, ahead in configs:
            after_read = self._read(delayed, ahead, a)
            if after_read is None:
                continue
            d1, a1 = after_read
            for s in self.closure(state):
                for sym, t in self.np.successors(s):
                    if sym is None:
                        continue
                    emitted = self._emit(d1, a1, sym)
                    if emitted is None:
                        continue
                    d2, a2 = emitted
                    aged = self._age(d2, a2)
                    if aged is not None:
                        out.add((t, aged[0], aged[1]))
        res = frozenset(out)
        self._step[key] = res
        return res

    @staticmethod
    def _read(delayed: Buffer, ahead: Buffer, a: AbstractObservable
              ) -> Optional[Tuple[Buffer, Buffer]]:
        for j, (x, _) in enumerate(ahead):
            if x == a:
                if all(independent(y, a) for y, _ in ahead[:j]):
                    return delayed, ahead[:j] + ahead[j + 1:]
                return None
        if all(independent(y, a) for y, _ in ahead):
            return delayed + ((a, 0),), ahead
        return None

    @staticmethod
    def _emit(delayed: Buffer, ahead: Buffer, b: AbstractObservable
              ) -> Optional[Tuple[Buffer, Buffer]]:
        for j, (x, _) in enumerate(delayed):
            if x == b:
                if all(independent(y, b) for y, _ in delayed[:j]):
                    return delayed[:j] + delayed[j + 1:], ahead
                return None
        if all(independent(y, b) for y, _ in delayed):
            return delayed, ahead + ((b, 0),)
        return None

    def _age(self, delayed: Buffer, ahead: Buffer) -> Optional[Tuple[Buffer, Buffer]]:
        d = tuple((x, n + 1) for x, n in delayed)
        a = tuple((x, n + 1) for x, n in ahead)
        if any(n > self.k for _, n in d) or any(n > self.k for _, n in a):
            self.pruned = True
            return None
        return d, a

    def completes(self, configs: FrozenSet[Config]) -> bool:
        hit = self._final.get(configs)
        if hit is None:
            hit = any(not d and not a and any(self.np.is_accepting(s) for s in self.closure(st))
                      for st, d, a in configs)
            self._final[configs] = hit
        return hit


def word_included(word: Sequence[AbstractObservable], np: Nfa, k: int) -> bool:
    """Does ``np`` accept some reordering of ``word`` within bound ``k``?"""
    m = _Matcher(np, k)
    configs = m.initial()
    for a in word:
        configs = m.step(configs, a)
        if not configs:
            return False
    return m.completes(configs)


def check_inclusion(p: Nfa, np: Nfa, k: int, max_len: Optional[int] = None,
                    antichain: bool = True, state_limit: int = 2_000_000) -> InclusionResult:
    """Check bounded inclusion of ``p`` in ``np`` modulo independence.

    Returns :class:`InclusionOk` or the shortest, then lexicographically
    first, counterexample word of length at most ``max_len``.
    """
    if k < 0:
        raise ValueError("bound must be non-negative")
    if max_len is None:
        max_len = default_max_len(p)
    m = _Matcher(np, k)
    start = (p.initial, m.initial())
    visited: Dict[ProgState, List[FrozenSet[Config]]] = {p.initial: [start[1]]}
    layer: List[Tuple[ProgState, FrozenSet[Config], Word]] = [(p.initial, start[1], ())]
    closures: Dict[ProgState, Tuple[ProgState, ...]] = {}
    explored = 0
    for depth in range(max_len + 1):
        nxt: List[Tuple[ProgState, FrozenSet[Config], Word]] = []
        for state, configs, word in layer:
            explored += 1
            if explored > state_limit:
                raise RuntimeError("inclusion search exceeds exploration limit")
            cl = closures.get(state)
            if cl is None:
                cl = tuple(p.epsilon_closure([state]))
                closures[state] = cl
            if any(p.is_accepting(s) for s in cl) and not m.completes(configs):
                return Counterexample(word, k, m.pruned)
            if depth == max_len:
                continue
            by_symbol: Dict[AbstractObservable, Set[ProgState]] = {}
            for s in cl:
                for sym, t in p.successors(s):
                    if sym is not None:
                        by_symbol.setdefault(sym, set()).add(t)
            for sym in sorted(by_symbol):
                new_configs = m.step(configs, sym)
                for t in sorted(by_symbol[sym]):
                    seen = visited.setdefault(t, [])
                    if antichain:
                        if any(old <= new_configs for old in seen):
                            continue
                        seen[:] = [old for old in seen if not new_configs <= old]
                    elif new_configs in seen:
                        continue
                    seen.append(new_configs)
                    nxt.append((t, new_configs, word + (sym,)))
        layer = nxt
        if not layer:
            break
    return InclusionOk(k, explored)


def check_inclusion_iterative(p: Nfa, np: Nfa, schedule: Sequence[int] = DEFAULT_SCHEDULE,
                              max_len: Optional[int] = None) -> InclusionResult:
    """Retry with growing bounds while failures may stem from the bound."""
    result: InclusionResult = InclusionOk(0)
    for k in schedule:
        result = check_inclusion(p, np, k, max_len)
        if isinstance(result, InclusionOk):
            return result
        if not result.bound_limited:
            return result
        log.debug("bound %d exhausted on %s; retrying", k, result)
    return result


# ---------------------------------------------------------------------------
# Oracles

def _occurrences(word: Sequence[AbstractObservable]) -> List[Tuple[AbstractObservable, int]]:
    seen: Counter = Counter()
    out = []
    for a in word:
        out.append((a, seen[a]))
        seen[a] += 1
    return out


def equivalent_mod_I(w1: Sequence[AbstractObservable], w2: Sequence[AbstractObservable],
                     k: int) -> bool:
    """True iff ``w2`` reorders ``w1`` keeping every dependent pair's order and
    displacing no symbol occurrence by more than ``k`` positions."""
    if len(w1) != len(w2) or Counter(w1) != Counter(w2):
        return False
    occ1 = _occurrences(w1)
    pos2 = {o: i for i, o in enumerate(_occurrences(w2))}
    target = [pos2[o] for o in occ1]
    if any(abs(i - j) > k for i, j in enumerate(target)):
        return False
    for i in range(len(w1)):
        for j in range(i + 1, len(w1)):
            if target[i] > target[j] and not independent(w1[i], w1[j]):
                return False
    return True


def inclusion_oracle(p: Nfa, np: Nfa, k: int, max_len: int) -> InclusionResult:
    """Brute force: enumerate both languages and compare word by word."""
    np_words: Dict[Tuple, List[Word]] = {}
    for v in enumerate_executions(np, max_len):
        np_words.setdefault(tuple(sorted(v)), []).append(v)
    bad = []
    for u in enumerate_executions(p, max_len):
        candidates = np_words.get(tuple(sorted(u)), [])
        if not any(equivalent_mod_I(u, v, k) for v in candidates):
            bad.append(u)
    if bad:
        return Counterexample(min(bad, key=lambda w: (len(w), w)), k)
    return InclusionOk(k)
