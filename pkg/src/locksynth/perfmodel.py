"""Profile-driven performance model and the region search for the best placement.

All profiled quantities are normalized per thread run: ``tc`` is the time a
thread spends in the coarse critical statements ``S``, ``nu`` the number of
lock acquisitions it performs and ``freqs`` how often it executes each
statement.  A refined placement protecting ``S' <= S`` is summarized by
``(tc', nu')`` and rated by the predicted time a thread spends on ``S``.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .lockcons import ENTRY, LockPlacement, PlacementVars
from .satsolver import MaxSatResult, MaxSatSession, Unsat

log = logging.getLogger(__name__)

TOL = 1e-6
MAX_ITER = 10_000


class NoConvergence(Exception):
    pass


class NotRefinement(Exception):
    pass


@dataclass(frozen=True)
class TlCurve:
    """Lock acquisition cost by contention, piecewise linear between samples.

    Below the first sample the curve is clamped; past the last sample it
    continues along the last segment.
    """

    points: Tuple[Tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("empty tl curve")
        object.__setattr__(self, "points", tuple(sorted((float(k), float(v)) for k, v in self.points)))

    @classmethod
    def constant(cls, value: float) -> "TlCurve":
        return cls(((1.0, value),))

    def __call__(self, k: float) -> float:
        pts = self.points
        if len(pts) == 1 or k <= pts[0][0]:
            return pts[0][1]
        ks = [p[0] for p in pts]
        i = bisect.bisect_right(ks, k)
        if i >= len(pts):
            (k0, v0), (k1, v1) = pts[-2], pts[-1]
        else:
            (k0, v0), (k1, v1) = pts[i - 1], pts[i]
        return v0 + (v1 - v0) * (k - k0) / (k1 - k0)


@dataclass
class PerfParams:
    kappa: float
    tc: float
    nu: float
    tl: TlCurve
    block_costs: Dict[str, float] = field(default_factory=dict)
    blocks: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    freqs: Dict[str, float] = field(default_factory=dict)
    critical: Tuple[str, ...] = ()           # statements protected in the coarse program
    outside: float = 0.0                     # per-thread time spent outside S

    @property
    def nu_max(self) -> float:
        return sum(self.freqs.values())

    def block_of(self) -> Dict[str, str]:
        return {loc: b for b, locs in self.blocks.items() for loc in locs}

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa, "tc": self.tc, "nu": self.nu,
            "tl": [list(p) for p in self.tl.points],
            "block_costs": dict(self.block_costs),
            "blocks": {b: list(v) for b, v in self.blocks.items()},
            "freqs": dict(self.freqs),
            "critical": list(self.critical),
            "outside": self.outside,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PerfParams":
        return cls(float(d["kappa"]), float(d["tc"]), float(d["nu"]),
                   TlCurve(tuple(tuple(p) for p in d["tl"])),
                   {k: float(v) for k, v in d.get("block_costs", {}).items()},
                   {k: tuple(v) for k, v in d.get("blocks", {}).items()},
                   {k: float(v) for k, v in d.get("freqs", {}).items()},
                   tuple(d.get("critical", ())), float(d.get("outside", 0.0)))


# ---------------------------------------------------------------------------
# Contention and rating

def _section_time(tcp: float, nup: float, tl: TlCurve, k: float) -> float:
    return (tcp + nup * tl(k)) * max(k - 0.5, 1.0)


def _residual(k: float, tcp: float, nup: float, p: PerfParams) -> float:
    sec = _section_time(tcp, nup, p.tl, k)
    den = (p.tc - tcp) + sec
    frac = sec / den if den > 0 else 0.0
    return 1.0 + (p.kappa - 1.0) * frac - k


def _bisect(f, a: float, b: float, tol: float = 1e-12) -> float:
    fa = f(a)
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm > 0) == (fa > 0) and fm != 0:
            a, fa = m, fm
        else:
            b = m
        if b - a < tol:
            break
    return 0.5 * (a + b)


def solve_contention(tcp: float, nup: float, p: PerfParams, scan: int = 256) -> float:
    """Contention of the refined critical sections (smallest root in ``[1, kappa]``)."""
    if tcp < -TOL or tcp > p.tc + TOL or nup < 0:
        raise ValueError("tc' must lie in [0, tc] and nu' must be non-negative")
    kappa = max(p.kappa, 1.0)
    if kappa - 1.0 <= 1e-15:
        return 1.0
    f = lambda k: _residual(k, tcp, nup, p)
    # damped fixpoint iteration from kappa
    k = kappa
    fixed: Optional[float] = None
    for _ in range(MAX_ITER):
        nxt = k + f(k)
        nxt = min(max(nxt, 1.0), kappa)
        if abs(nxt - k) < 1e-12:
            fixed = nxt
            break
        k = 0.5 * k + 0.5 * nxt
    # smallest sign change of the residual on [1, kappa]
    if f(1.0) <= 0:
        root = 1.0
    else:
        root = None
        prev = 1.0
        for i in range(1, scan + 1):
            x = 1.0 + (kappa - 1.0) * i / scan
            if f(x) <= 0:
                root = _bisect(f, prev, x)
                break
            prev = x
    if root is None:
        if fixed is None:
            raise NoConvergence(f"no convergence (residual {f(k):.3g})")
        return fixed
    if fixed is not None and abs(fixed - root) > TOL:
        log.info("several contention roots: %.6g and %.6g; using the smaller", root, fixed)
    if abs(f(root)) > 1e-6 * max(1.0, kappa):
        raise NoConvergence(f"no convergence (residual {f(root):.3g})")
    return root


def rate(tcp: float, nup: float, p: PerfParams) -> float:
    """Predicted per-thread time spent on the coarse critical statements."""
    k = solve_contention(tcp, nup, p)
    return (p.tc - tcp) + _section_time(tcp, nup, p.tl, k)


def predicted_time(tcp: float, nup: float, p: PerfParams) -> float:
    """Rating plus the profiled time outside the critical statements."""
    return p.outside + rate(tcp, nup, p)


def multi_lock_contention(parts: Sequence[Tuple[float, float]], p: PerfParams,
                          damping: float = 0.5) -> List[float]:
    """Joint contention per lock; ``parts`` gives ``(tc'_lk, nu'_lk)`` per lock.

    Each lock's contention follows the single-lock equation with its own
    section time in the numerator and the whole coarse section time (the
    unprotected rest plus every lock's section time) in the denominator.
    """
    kappa = max(p.kappa, 1.0)
    rest = p.tc - sum(t for t, _ in parts)
    if rest < -TOL:
        raise ValueError("lock sections exceed the coarse critical section")

    def step(ks: List[float]) -> List[float]:
        secs = [_section_time(t, n, p.tl, k) for (t, n), k in zip(parts, ks)]
        den = max(rest, 0.0) + sum(secs)
        return [1.0 + (kappa - 1.0) * (s / den if den > 0 else 0.0) for s in secs]

    ks = [1.0] * len(parts)
    for _ in range(MAX_ITER):
        nxt = step(ks)
        if max((abs(a - b) for a, b in zip(nxt, ks)), default=0.0) < 1e-12:
            return nxt
        ks = [(1 - damping) * a + damping * b for a, b in zip(ks, nxt)]
    res = max(abs(a - b) for a, b in zip(step(ks), ks))
    if res < TOL:
        return ks
    raise NoConvergence(f"no convergence (residual {res:.3g})")


def rate_multi(parts: Sequence[Tuple[float, float]], p: PerfParams) -> float:
    ks = multi_lock_contention(parts, p)
    secs = [_section_time(t, n, p.tl, k) for (t, n), k in zip(parts, ks)]
    return (p.tc - sum(t for t, _ in parts)) + sum(secs)


def bound_derivatives(p: PerfParams, grid: int = 32, safety: float = 1.5) -> Tuple[float, float]:
    """Finite-difference bounds on the rating's partial derivatives."""
    tc, nm = p.tc, p.nu_max
    vals = [[rate(tc * i / grid, nm * j / grid, p) for j in range(grid + 1)] for i in range(grid + 1)]
    d1 = d2 = 0.0
    if tc > 0:
        h = tc / grid
        d1 = max(abs(vals[i + 1][j] - vals[i][j]) / h for i in range(grid) for j in range(grid + 1))
    if nm > 0:
        h = nm / grid
        d2 = max(abs(vals[i][j + 1] - vals[i][j]) / h for i in range(grid + 1) for j in range(grid))
    return d1 * safety, d2 * safety


# ---------------------------------------------------------------------------
# Refinements

def refine_params(p: PerfParams, placement: LockPlacement) -> Tuple[float, float]:
    """``(tc', nu')`` of a placement refining the coarse one."""
    prot = placement.protected_locations
    if p.critical:
        outside = prot - set(p.critical)
        if outside:
            raise NotRefinement(f"not a refinement: protects {sorted(outside)}")
    of = p.block_of()
    blocks = {of[l] for l in prot if l in of}
    tcp = sum(p.block_costs.get(b, 0.0) for b in blocks)
    nup = sum(p.freqs.get(l, 0.0) for l in placement.after_lock)
    return tcp, nup


@dataclass
class PerfInstance:
    """Lock-placement constraints extended with ``tc'`` and ``nu'`` forms."""

    pv: PlacementVars
    params: PerfParams
    session: MaxSatSession
    tc_terms: List[Tuple[float, int]]
    nu_terms: List[Tuple[float, int]]

    def values(self, model: Sequence[bool]) -> Tuple[float, float]:
        tcp = sum(c for c, v in self.tc_terms if model[v])
        nup = sum(c for c, v in self.nu_terms if model[v])
        return tcp, nup

    def rating(self, model: Sequence[bool]) -> float:
        return rate(*self.values(model), self.params)

    def _bounds(self, terms, lo: float, hi: float) -> int:
        g = self.session.guard()
        self.session.solver.add_linear(terms, lo, hi, guard=g)
        return g

    def region_guards(self, reg: "Region") -> List[int]:
        span = max(self.params.tc, self.params.nu_max, 1.0)
        tol = 1e-9 * span
        return [self._bounds(self.tc_terms, reg.tc1 - tol, reg.tc2 + tol),
                self._bounds(self.nu_terms, reg.nu1 - tol, reg.nu2 + tol)]

    def model_in(self, reg: "Region", extra: Sequence[int] = ()) -> Optional[List[bool]]:
        guards = self.region_guards(reg) + list(extra)
        ok = self.session.solver.solve(guards)
        return self.session.solver.model if ok else None

    def exclude_value(self, tcp: float, nup: float) -> int:
        """Guard literal that, when assumed, rules out ``(tc', nu') == (tcp, nup)``."""
        span = max(self.params.tc, self.params.nu_max, 1.0)
        tol = 1e-7 * span
        s = self.session.solver
        hs = [self._bounds(self.tc_terms, float("-inf"), tcp - tol),
              self._bounds(self.tc_terms, tcp + tol, float("inf")),
              self._bounds(self.nu_terms, float("-inf"), nup - tol),
              self._bounds(self.nu_terms, nup + tol, float("inf"))]
        g = s.new_var()
        s.add_clause([-g] + hs)
        return g


def augment_constraints(pv: PlacementVars, params: PerfParams, refine: bool = True) -> PerfInstance:
    """Add block indicators ``b_i`` and lock-follower indicators ``t_x``.

    ``b_i`` holds iff some statement of block ``i`` is protected; ``t_x``
    iff a lock statement is placed right before ``x``.  With ``refine`` the
    placement may only protect statements of the coarse critical set.
    """
    f = pv.formula
    members: Dict[str, List[int]] = {}
    of = params.block_of()
    stmts = pv.statements()
    for loc in stmts:
        b = of.get(loc)
        if b is None:
            continue
        members.setdefault(b, []).extend(pv.v("InLo", loc, lk) for lk in pv.locks)
    tc_terms = []
    for b in sorted(members):
        bv = f.var(f"Block({b})")
        f.define_or(bv, members[b])
        tc_terms.append((params.block_costs.get(b, 0.0), bv))
    nu_terms = []
    for loc in stmts:
        lits = [pv.v("LoBef", loc, lk) for lk in pv.locks]
        lits += [pv.v("LoAft", p, lk) for p in pv.preds[loc] for lk in pv.locks]
        lits += [v for (k, l, _), v in pv.var.items() if k == ENTRY and l == loc]
        tv = f.var(f"AfterLock({loc})")
        f.define_or(tv, lits)
        nu_terms.append((params.freqs.get(loc, 0.0), tv))
    if refine and params.critical:
        crit = set(params.critical)
        for loc in stmts:
            if loc not in crit:
                for lk in pv.locks:
                    f.add(-pv.v("InLo", loc, lk))
    return PerfInstance(pv, params, MaxSatSession(f), tc_terms, nu_terms)


# ---------------------------------------------------------------------------
# Region search

@dataclass(frozen=True, order=True)
class Region:
    tc1: float
    tc2: float
    nu1: float
    nu2: float

    @property
    def w(self) -> float:
        return self.tc2 - self.tc1

    @property
    def h(self) -> float:
        return self.nu2 - self.nu1

    def contains(self, tc: float, nu: float, tol: float = 1e-12) -> bool:
        return self.tc1 - tol <= tc <= self.tc2 + tol and self.nu1 - tol <= nu <= self.nu2 + tol

    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.tc1 + self.tc2), 0.5 * (self.nu1 + self.nu2))

    def shatter(self, k: int) -> List["Region"]:
        out = []
        for i in range(k):
            for j in range(k):
                out.append(Region(self.tc1 + self.w * i / k, self.tc1 + self.w * (i + 1) / k,
                                  self.nu1 + self.h * j / k, self.nu1 + self.h * (j + 1) / k))
        return out


def unique_performance(inst: PerfInstance, reg: Region) -> bool:
    """True iff all models inside ``reg`` share one ``(tc', nu')``."""
    m = inst.model_in(reg)
    if m is None:
        return True
    g = inst.exclude_value(*inst.values(m))
    return inst.model_in(reg, [g]) is None


@dataclass
class PerfResult:
    model: List[bool]
    tc: float
    nu: float
    rating: float
    queries: int = 0
    regions_explored: int = 0


def optimize_perf(inst: PerfInstance, k: int = 10, delta1: Optional[float] = None,
                  delta2: Optional[float] = None) -> PerfResult:
    """Region search over ``(tc', nu')`` for the model with the least rating."""
    if k < 2:
        raise ValueError("shattering parameter must be > 1")
    p = inst.params
    if delta1 is None or delta2 is None:
        d1, d2 = bound_derivatives(p)
        delta1 = d1 if delta1 is None else delta1
        delta2 = d2 if delta2 is None else delta2
    tc, nm = p.tc, p.nu_max
    pts: Dict[Tuple[float, float], float] = {}
    for k1 in range(2 * k + 1):
        for k2 in range(2 * k + 1):
            pt = (tc * k1 / (2 * k), nm * k2 / (2 * k))
            pts[pt] = rate(pt[0], pt[1], p)
    regions: List[Region] = [Region(0.0, tc, 0.0, nm)]
    best: Optional[Tuple[float, float, float, List[bool]]] = None
    queries = explored = 0

    def seed(regs: Sequence[Region]) -> None:
        for r in regs:
            if not any(r.contains(*pt) for pt in pts):
                c = r.center()
                pts[c] = rate(c[0], c[1], p)

    while regions:
        seed(regions)
        live = [(v, pt) for pt, v in pts.items() if any(r.contains(*pt) for r in regions)]
        _, pt = min(live)
        reg = min(r for r in regions if r.contains(*pt))
        regions.remove(reg)
        explored += 1
        queries += 1
        m = inst.model_in(reg)
        if m is None:
            for q in [q for q in pts if reg.contains(*q)]:
                del pts[q]
            continue
        tcp, nup = inst.values(m)
        val = rate(tcp, nup, p)
        if best is None or (val, tcp, nup) < best[:3]:
            best = (val, tcp, nup, m)
        queries += 1
        g = inst.exclude_value(tcp, nup)
        if inst.model_in(reg, [g]) is not None:
            subs = reg.shatter(k)
            regions.extend(subs)
            seed(subs)
        for r in list(regions):
            inside = [v for q, v in pts.items() if r.contains(*q)]
            if inside and all(v - delta1 * r.w - delta2 * r.h > best[0] for v in inside):
                regions.remove(r)
                for q in [q for q in pts if r.contains(*q)]:
                    if not any(o.contains(*q) for o in regions):
                        del pts[q]
    if best is None:
        raise Unsat("unsat constraints: no placement satisfies the extended constraints")
    val, tcp, nup, _ = best
    final = canonical_model(inst, tcp, nup)
    return PerfResult(final, tcp, nup, val, queries, explored)


def canonical_model(inst: PerfInstance, tcp: float, nup: float) -> List[bool]:
    """Lexicographically least placement with the given ``(tc', nu')``."""
    span = max(inst.params.tc, inst.params.nu_max, 1.0)
    tol = 1e-7 * span
    guards = [inst._bounds(inst.tc_terms, tcp - tol, tcp + tol),
              inst._bounds(inst.nu_terms, nup - tol, nup + tol)]
    res = inst.session.solve(guards, primary=inst.pv.primary(), optimize=False)
    if res is None:
        raise RuntimeError("optimal performance point lost")
    return res.model


def enumerate_performance_points(inst: PerfInstance, limit: int = 10_000) -> Set[Tuple[float, float]]:
    """All feasible ``(tc', nu')`` pairs (by repeated blocking)."""
    out: Set[Tuple[float, float]] = set()
    guards: List[int] = []
    s = inst.session.solver
    while len(out) < limit and s.solve(guards):
        val = inst.values(s.model)
        out.add(val)
        guards.append(inst.exclude_value(*val))
    return out
