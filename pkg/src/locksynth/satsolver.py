"""Small CDCL SAT solver with guarded pseudo-Boolean constraints and MaxSAT.

Literals are non-zero integers in DIMACS style.  Besides clauses the solver
accepts linear constraints ``lo <= sum(c * lit) <= hi`` with non-negative
coefficients, optionally switched on by a guard literal.  Propagation of a
linear constraint produces an explanation clause on the fly, so conflict
analysis treats all reasons uniformly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

EPS = 1e-9


@dataclass
class _Linear:
    terms: List[Tuple[float, int]]
    lo: float
    hi: float
    guard: Optional[int]


def _luby(i: int) -> int:
    k = 1
    while (1 << k) - 1 < i:
        k += 1
    while True:
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        i -= (1 << (k - 1)) - 1
        k = 1
        while (1 << k) - 1 < i:
            k += 1


class Solver:
    """Incremental CDCL solver; supports solving under assumptions."""

    def __init__(self, n_vars: int = 0):
        self.n = 0
        self.value: List[int] = [0]
        self.level: List[int] = [0]
        self.reason: List[Optional[List[int]]] = [None]
        self.activity: List[float] = [0.0]
        self.watches: Dict[int, List[List[int]]] = {}
        self.lin_of: List[List[int]] = [[]]
        self.linear: List[_Linear] = []
        self.trail: List[int] = []
        self.trail_lim: List[int] = []
        self.qhead = 0
        self.heap: List[Tuple[float, int]] = []
        self.inc = 1.0
        self.ok = True
        self.model: List[bool] = []
        self.conflicts = 0
        self.ensure_vars(n_vars)

    # -- construction ----------------------------------------------------
    def ensure_vars(self, n: int) -> None:
        while self.n < n:
            self.n += 1
            self.value.append(0)
            self.level.append(0)
            self.reason.append(None)
            self.activity.append(0.0)
            self.lin_of.append([])
            self.watches.setdefault(self.n, [])
            self.watches.setdefault(-self.n, [])
            heapq.heappush(self.heap, (0.0, self.n))

    def new_var(self) -> int:
        self.ensure_vars(self.n + 1)
        return self.n

    def _val(self, lit: int) -> int:
        v = self.value[abs(lit)]
        return v if lit > 0 else -v

    def add_clause(self, lits: Iterable[int]) -> bool:
        self._backtrack(0)
        clause: List[int] = []
        for l in lits:
            self.ensure_vars(abs(l))
            if -l in clause:
                return True
            if l not in clause:
                clause.append(l)
        if not self.ok:
            return False
        if any(self._val(l) == 1 for l in clause):
            return True
        clause = [l for l in clause if self._val(l) == 0]
        if not clause:
            self.ok = False
            return False
        if len(clause) == 1:
            self._assign(clause[0], [clause[0]])
            if self._propagate() is not None:
                self.ok = False
            return self.ok
        self._attach(clause)
        return True

    def add_linear(self, terms: Sequence[Tuple[float, int]], lo: float = float("-inf"),
                   hi: float = float("inf"), guard: Optional[int] = None) -> bool:
        """Add ``guard -> lo <= sum(c * lit) <= hi`` with ``c >= 0``."""
        self._backtrack(0)
        merged: Dict[int, float] = {}
        for c, l in terms:
            if c < 0:
                raise ValueError("coefficients must be non-negative")
            if c > 0:
                self.ensure_vars(abs(l))
                merged[l] = merged.get(l, 0.0) + c
        if guard is not None:
            self.ensure_vars(abs(guard))
        idx = len(self.linear)
        self.linear.append(_Linear(sorted(((c, l) for l, c in merged.items()), key=lambda t: -t[0]),
                                   lo, hi, guard))
        for _, l in self.linear[idx].terms:
            self.lin_of[abs(l)].append(idx)
        if guard is not None:
            self.lin_of[abs(guard)].append(idx)
        if not self.ok:
            return False
        if self._check_linear(idx) is not None or self._propagate() is not None:
            self.ok = False
        return self.ok

    def _attach(self, clause: List[int]) -> None:
        self.watches[clause[0]].append(clause)
        self.watches[clause[1]].append(clause)

    # -- assignment ------------------------------------------------------
    def _assign(self, lit: int, reason: Optional[List[int]]) -> None:
        v = abs(lit)
        self.value[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _backtrack(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        start = self.trail_lim[lvl]
        for lit in self.trail[start:]:
            v = abs(lit)
            self.value[v] = 0
            self.reason[v] = None
            heapq.heappush(self.heap, (-self.activity[v], v))
        del self.trail[start:]
        del self.trail_lim[lvl:]
        self.qhead = min(self.qhead, len(self.trail))

    def _check_linear(self, idx: int) -> Optional[List[int]]:
        """Propagate one linear constraint; return a conflict clause or None."""
        c = self.linear[idx]
        g = c.guard
        gval = 1 if g is None else self._val(g)
        if gval == -1:
            return None
        low = 0.0
        free = 0.0
        for coef, l in c.terms:
            v = self._val(l)
            if v == 1:
                low += coef
            elif v == 0:
                free += coef
        high = low + free
        over = low > c.hi + EPS
        under = high < c.lo - EPS
        if over or under:
            if over:
                expl = [-l for coef, l in c.terms if self._val(l) == 1]
            else:
                expl = [l for coef, l in c.terms if self._val(l) == -1]
            if gval == 1:
                return expl + ([-g] if g is not None else [])
            self._assign(-g, [-g] + expl)
            return None
        if gval != 1:
            return None
        for coef, l in c.terms:
            if self._val(l) != 0:
                continue
            if low + coef > c.hi + EPS:
                expl = [-x for cf, x in c.terms if self._val(x) == 1]
                self._assign(-l, [-l] + expl + ([-g] if g is not None else []))
                high -= coef
            elif high - coef < c.lo - EPS:
                expl = [x for cf, x in c.terms if self._val(x) == -1]
                self._assign(l, [l] + expl + ([-g] if g is not None else []))
                low += coef
        return None

    def _propagate(self) -> Optional[List[int]]:
        while self.qhead < len(self.trail):
            lit = self.trail[self.qhead]
            self.qhead += 1
            false_lit = -lit
            ws = self.watches[false_lit]
            i = 0
            while i < len(ws):
                cl = ws[i]
                if cl[0] == false_lit:
                    cl[0], cl[1] = cl[1], cl[0]
                if self._val(cl[0]) == 1:
                    i += 1
                    continue
                moved = False
                for j in range(2, len(cl)):
                    if self._val(cl[j]) != -1:
                        cl[1], cl[j] = cl[j], cl[1]
                        self.watches[cl[1]].append(cl)
                        ws[i] = ws[-1]
                        ws.pop()
                        moved = True
                        break
                if moved:
                    continue
                if self._val(cl[0]) == -1:
                    return list(cl)
                self._assign(cl[0], cl)
                i += 1
            for idx in self.lin_of[abs(lit)]:
                confl = self._check_linear(idx)
                if confl is not None:
                    return confl
        return None

    # -- conflict analysis ----------------------------------------------
    def _bump(self, v: int) -> None:
        self.activity[v] += self.inc
        if self.activity[v] > 1e100:
            for i in range(1, self.n + 1):
                self.activity[i] *= 1e-100
            self.inc *= 1e-100
        if self.value[v] == 0:
            heapq.heappush(self.heap, (-self.activity[v], v))

    def _analyze(self, confl: List[int]) -> Tuple[List[int], int]:
        cur = len(self.trail_lim)
        seen = set()
        learnt: List[int] = []
        counter = 0
        idx = len(self.trail) - 1
        clause = confl
        p = None
        while True:
            for q in clause:
                if p is not None and q == p:
                    continue
                v = abs(q)
                if v in seen or self.level[v] == 0:
                    continue
                seen.add(v)
                self._bump(v)
                if self.level[v] == cur:
                    counter += 1
                else:
                    learnt.append(q)
            while abs(self.trail[idx]) not in seen:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            counter -= 1
            if counter == 0:
                break
            clause = self.reason[abs(p)]
        learnt.insert(0, -p)
        back = max((self.level[abs(l)] for l in learnt[1:]), default=0)
        if len(learnt) > 1:
            j = max(range(1, len(learnt)), key=lambda k: self.level[abs(learnt[k])])
            learnt[1], learnt[j] = learnt[j], learnt[1]
        self.inc /= 0.95
        return learnt, back

    def _pick(self) -> int:
        while self.heap:
            _, v = heapq.heappop(self.heap)
            if self.value[v] == 0:
                return v
        return 0

    # -- search ----------------------------------------------------------
    def solve(self, assumptions: Sequence[int] = ()) -> bool:
        """Return True and set :attr:`model` if satisfiable under ``assumptions``."""
        self._backtrack(0)
        if not self.ok:
            return False
        if self._propagate() is not None:
            self.ok = False
            return False
        for a in assumptions:
            self.ensure_vars(abs(a))
        restart_no = 1
        budget = 100 * _luby(restart_no)
        while True:
            confl = self._propagate()
            if confl is not None:
                self.conflicts += 1
                budget -= 1
                cur = len(self.trail_lim)
                top = max((self.level[abs(l)] for l in confl), default=0)
                if top == 0:
                    self.ok = False
                    return False
                if top < cur:
                    self._backtrack(top)
                learnt, back = self._analyze(confl)
                self._backtrack(back)
                if len(learnt) == 1:
                    self._assign(learnt[0], [learnt[0]])
                else:
                    self._attach(learnt)
                    self._assign(learnt[0], learnt)
                continue
            if budget <= 0:
                restart_no += 1
                budget = 100 * _luby(restart_no)
                self._backtrack(0)
                continue
            lvl = len(self.trail_lim)
            if lvl < len(assumptions):
                a = assumptions[lvl]
                val = self._val(a)
                if val == -1:
                    self._backtrack(0)
                    return False
                self.trail_lim.append(len(self.trail))
                if val == 0:
                    self._assign(a, None)
                continue
            v = self._pick()
            if v == 0:
                self.model = [False] + [self.value[i] == 1 for i in range(1, self.n + 1)]
                self._backtrack(0)
                return True
            self.trail_lim.append(len(self.trail))
            self._assign(-v, None)


# ---------------------------------------------------------------------------
# Formula container and MaxSAT

@dataclass
class Formula:
    """Named variables, hard clauses, weighted soft clauses, linear constraints."""

    names: List[str] = field(default_factory=lambda: [""])
    index: Dict[str, int] = field(default_factory=dict)
    hard: List[List[int]] = field(default_factory=list)
    soft: List[Tuple[float, List[int]]] = field(default_factory=list)
    linear: List[Tuple[List[Tuple[float, int]], float, float, Optional[int]]] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.names) - 1

    def var(self, name: str) -> int:
        v = self.index.get(name)
        if v is None:
            v = len(self.names)
            self.names.append(name)
            self.index[name] = v
        return v

    def fresh(self, prefix: str = "aux") -> int:
        return self.var(f"{prefix}#{len(self.names)}")

    def add(self, *lits: int) -> None:
        self.hard.append(list(lits))

    def add_soft(self, weight: float, lits: Sequence[int]) -> None:
        if weight < 0:
            raise ValueError("soft weights must be non-negative")
        if weight > 0:
            self.soft.append((weight, list(lits)))

    def add_linear(self, terms: Sequence[Tuple[float, int]], lo: float = float("-inf"),
                   hi: float = float("inf"), guard: Optional[int] = None) -> None:
        self.linear.append((list(terms), lo, hi, guard))

    def define_or(self, out: int, ins: Sequence[int]) -> None:
        """Hard ``out <-> OR(ins)``."""
        self.add(-out, *ins)
        for l in ins:
            self.add(out, -l)

    def define_and(self, out: int, ins: Sequence[int]) -> None:
        self.add(out, *[-l for l in ins])
        for l in ins:
            self.add(-out, l)

    def copy(self) -> "Formula":
        return Formula(list(self.names), dict(self.index), [list(c) for c in self.hard],
                       [(w, list(c)) for w, c in self.soft],
                       [(list(t), lo, hi, g) for t, lo, hi, g in self.linear])

    def cost(self, model: Sequence[bool]) -> float:
        return sum(w for w, c in self.soft if not any(_lit_true(model, l) for l in c))

    def to_wcnf(self) -> str:
        """DIMACS WCNF text (linear constraints are listed as comments)."""
        top = int(sum(w for w, _ in self.soft)) + 1
        lines = [f"c var {i} {n}" for i, n in enumerate(self.names) if i]
        for terms, lo, hi, g in self.linear:
            body = " + ".join(f"{c:g}*{l}" for c, l in terms)
            lines.append(f"c linear guard={g} {lo:g} <= {body} <= {hi:g}")
        lines.append(f"p wcnf {self.n_vars} {len(self.hard) + len(self.soft)} {top}")
        lines += [f"{top} " + " ".join(map(str, c)) + " 0" for c in self.hard]
        lines += [f"{w:g} " + " ".join(map(str, c)) + " 0" for w, c in self.soft]
        return "\n".join(lines) + "\n"


def _lit_true(model: Sequence[bool], lit: int) -> bool:
    return model[lit] if lit > 0 else not model[-lit]


@dataclass
class MaxSatResult:
    model: List[bool]
    cost: float
    names: List[str]

    def __getitem__(self, name: str) -> bool:
        return self.model[self.names.index(name)]

    def true_names(self) -> List[str]:
        return [n for i, n in enumerate(self.names) if i and self.model[i]]


class Unsat(Exception):
    pass


class MaxSatSession:
    """Reusable MaxSAT engine over one formula; extra constraints via guards."""

    def __init__(self, f: Formula):
        self.f = f
        self.solver = Solver(f.n_vars)
        for c in f.hard:
            self.solver.add_clause(c)
        for terms, lo, hi, g in f.linear:
            self.solver.add_linear(terms, lo, hi, g)
        self.relax: List[Tuple[float, int]] = []
        for w, c in f.soft:
            if len(c) == 1:
                self.relax.append((w, -c[0]))
            else:
                r = self.solver.new_var()
                self.solver.add_clause(list(c) + [r])
                self.relax.append((w, r))

    def _cost(self, model: List[bool]) -> float:
        return self.f.cost(model)

    def guard(self) -> int:
        return self.solver.new_var()

    def solve(self, assumptions: Sequence[int] = (), primary: Optional[Sequence[int]] = None,
              optimize: bool = True) -> Optional[MaxSatResult]:
        """Minimal-cost model under ``assumptions``; ties broken lexicographically
        over ``primary`` (false before true).  ``None`` if unsatisfiable."""
        s = self.solver
        assumptions = list(assumptions)
        if not s.solve(assumptions):
            return None
        best = s.model
        cost = self._cost(best)
        if optimize and self.relax:
            while cost > EPS:
                g = s.new_var()
                s.add_linear(self.relax, hi=cost - _min_step(self.relax), guard=g)
                if not s.solve(assumptions + [g]):
                    s.add_clause([-g])
                    break
                s.add_clause([-g])
                best = s.model
                cost = self._cost(best)
        fixed = list(assumptions)
        if optimize and self.relax:
            g = s.new_var()
            s.add_linear(self.relax, hi=cost + EPS, guard=g)
            fixed.append(g)
            if not s.solve(fixed):
                raise RuntimeError("optimum lost under cost bound")
            best = s.model
        if primary:
            for v in primary:
                if not best[v]:
                    fixed.append(-v)
                    continue
                if s.solve(fixed + [-v]):
                    best = s.model
                    fixed.append(-v)
                else:
                    fixed.append(v)
        model = best[: self.f.n_vars + 1]
        return MaxSatResult(model, self._cost(best), self.f.names)


def _min_step(relax: Sequence[Tuple[float, int]]) -> float:
    # integer weights move in unit steps; otherwise any strict improvement
    if all(float(w).is_integer() for w, _ in relax):
        return 1.0
    return 1e-7


def solve_maxsat(f: Formula, primary: Optional[Sequence[int]] = None) -> MaxSatResult:
    """Minimal-cost model of ``f``; raises :class:`Unsat` if hard part fails."""
    res = MaxSatSession(f).solve(primary=primary if primary is not None else range(1, f.n_vars + 1))
    if res is None:
        raise Unsat("unsatisfiable")
    return res


def all_models(f: Formula, over: Sequence[int], limit: int = 100_000) -> List[List[bool]]:
    """Enumerate models of the hard part projected onto ``over`` (blocking clauses)."""
    s = Solver(f.n_vars)
    for c in f.hard:
        s.add_clause(c)
    for terms, lo, hi, g in f.linear:
        s.add_linear(terms, lo, hi, g)
    out = []
    while s.solve():
        m = s.model
        out.append(m)
        if len(out) >= limit:
            break
        s.add_clause([-v if m[v] else v for v in over])
    return out
