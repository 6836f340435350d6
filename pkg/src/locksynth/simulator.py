"""Seed-deterministic discrete-event simulator for programs with locks.

Every statement takes a fixed time from the workload.  Branches follow
workload probabilities (or exact loop counts) drawn from a seeded RNG, so the
scheduler is oblivious to data.  A lock acquisition costs
``lock_base + lock_penalty * (n - 1)`` where ``n`` counts the threads queued
at the lock, the acquirer included; time spent queued is waiting, not work.
"""

from __future__ import annotations

import heapq
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .lang import FlowGraph, Program, build_flow_graph, parse_program

SYNC_WAIT = {"wait": 1, "assume": 1, "wait_not": 0, "assume_not": 0}
SYNC_SET = {"notify": 1, "set": 1, "reset": 0, "unset": 0}


@dataclass
class Workload:
    costs: Dict[str, float] = field(default_factory=dict)
    default_cost: float = 1.0
    branch_prob: Dict[str, float] = field(default_factory=dict)   # P(first successor)
    loop_counts: Dict[str, int] = field(default_factory=dict)     # exact loop iterations
    lock_base: float = 0.5
    lock_penalty: float = 0.5
    unlock_cost: float = 0.0
    copies: int = 1

    def cost(self, loc: str) -> float:
        return self.costs.get(loc, self.default_cost)

    def to_dict(self) -> dict:
        return {"costs": dict(self.costs), "default_cost": self.default_cost,
                "branch_prob": dict(self.branch_prob), "loop_counts": dict(self.loop_counts),
                "lock_base": self.lock_base, "lock_penalty": self.lock_penalty,
                "unlock_cost": self.unlock_cost, "copies": self.copies}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Workload":
        return cls({k: float(v) for k, v in (d.get("costs") or {}).items()},
                   float(d.get("default_cost", 1.0)),
                   {k: float(v) for k, v in (d.get("branch_prob") or {}).items()},
                   {k: int(v) for k, v in (d.get("loop_counts") or {}).items()},
                   float(d.get("lock_base", 0.5)), float(d.get("lock_penalty", 0.5)),
                   float(d.get("unlock_cost", 0.0)), int(d.get("copies", 1)))


@dataclass(frozen=True)
class Segment:
    thread: int
    loc: str
    start: float
    end: float
    kind: str          # exec, wait, acquire


@dataclass
class ExecutionTrace:
    segments: List[Segment]
    finish: List[float]
    counts: List[Dict[str, int]]
    busy: List[float]
    acquisitions: int
    deadlock: bool = False
    blocked_at: Tuple[str, ...] = ()

    @property
    def threads(self) -> int:
        return len(self.finish)

    @property
    def makespan(self) -> float:
        return max(self.finish, default=0.0)

    @property
    def mean_thread_time(self) -> float:
        return sum(self.finish) / len(self.finish) if self.finish else 0.0

    def occupancy(self, region: Set[str]) -> float:
        """Time-average number of threads in ``region`` over times with at least one."""
        events: List[Tuple[float, int]] = []
        for s in self.segments:
            if s.loc in region and s.end > s.start:
                events.append((s.start, 1))
                events.append((s.end, -1))
        events.sort()
        area = busy = 0.0
        n = 0
        prev = None
        for t, d in events:
            if prev is not None and n > 0:
                area += n * (t - prev)
                busy += t - prev
            n += d
            prev = t
        return area / busy if busy > 0 else 1.0


class _Thread:
    def __init__(self, idx: int, graph: FlowGraph, stmts, wl: Workload, rng: random.Random):
        self.idx = idx
        self.g = graph
        self.stmts = stmts
        self.loc = graph.entry
        self.rng = rng
        self.wl = wl
        self.loops: Dict[str, int] = {}
        self.counts: Dict[str, int] = defaultdict(int)
        self.busy = 0.0
        self.done = graph.entry == graph.exit

    def choose(self, loc: str) -> str:
        succ = self.g.edges[loc]
        if len(succ) == 1:
            return succ[0]
        s = self.stmts[loc]
        if s.kind == "while" and loc in self.wl.loop_counts:
            n = self.loops.get(loc, 0)
            if n < self.wl.loop_counts[loc]:
                self.loops[loc] = n + 1
                return succ[0]
            self.loops[loc] = 0
            return succ[1]
        p = self.wl.branch_prob.get(loc, 0.5)
        return succ[0] if self.rng.random() < p else succ[1]


def simulate(program: Program, workload: Workload, seed: int = 0,
             copies: Optional[int] = None) -> ExecutionTrace:
    """Run every thread (times ``copies``) to completion or deadlock."""
    copies = workload.copies if copies is None else copies
    rng = random.Random(seed)
    stmts = program.statement_map()
    threads: List[_Thread] = []
    for t in program.threads:
        g = build_flow_graph(t)
        for _ in range(copies):
            threads.append(_Thread(len(threads), g, stmts, workload, random.Random(rng.random())))
    owner: Dict[str, Optional[int]] = {lk: None for lk in program.lock_vars}
    queue: Dict[str, deque] = {lk: deque() for lk in program.lock_vars}
    sync: Dict[str, int] = {v: 0 for v in list(program.cond_vars) + list(program.guard_vars)}
    sleepers: List[Tuple[int, float]] = []      # threads blocked on cond/guard values
    segments: List[Segment] = []
    finish = [0.0] * len(threads)
    acquisitions = 0
    heap: List[Tuple[float, int, int]] = []
    seq = 0

    def push(t: float, i: int) -> None:
        nonlocal seq
        heapq.heappush(heap, (t, seq, i))
        seq += 1

    def grant(lk: str, i: int, now: float, since: float) -> None:
        nonlocal acquisitions
        th = threads[i]
        n = len(queue[lk]) + 1
        cost = workload.lock_base + workload.lock_penalty * (n - 1)
        owner[lk] = i
        acquisitions += 1
        if now > since:
            segments.append(Segment(i, th.loc, since, now, "wait"))
        segments.append(Segment(i, th.loc, now, now + cost, "acquire"))
        th.busy += cost
        th.counts[th.loc] += 1
        th.loc = th.choose(th.loc)
        push(now + cost, i)

    for th in threads:
        if th.done:
            finish[th.idx] = 0.0
        else:
            push(0.0, th.idx)
    while heap:
        now, _, i = heapq.heappop(heap)
        th = threads[i]
        loc = th.loc
        if loc == th.g.exit:
            th.done = True
            finish[i] = now
            continue
        s = stmts[loc]
        if s.kind == "lock":
            lk = s.target
            if owner[lk] is None and not queue[lk]:
                grant(lk, i, now, now)
            else:
                queue[lk].append((i, now))
            continue
        if s.kind == "unlock":
            lk = s.target
            cost = workload.unlock_cost
            owner[lk] = None
            if queue[lk]:
                j, since = queue[lk].popleft()
                grant(lk, j, now + cost, since)
            segments.append(Segment(i, loc, now, now + cost, "exec"))
            th.busy += cost
            th.counts[loc] += 1
            th.loc = th.choose(loc)
            push(now + cost, i)
            continue
        if s.kind in SYNC_WAIT:
            if sync[s.target] != SYNC_WAIT[s.kind]:
                sleepers.append((i, now))
                continue
        if s.kind in SYNC_SET:
            sync[s.target] = SYNC_SET[s.kind]
            still = []
            for j, since in sleepers:
                push(now, j)
                if now > since:
                    segments.append(Segment(j, threads[j].loc, since, now, "wait"))
            sleepers[:] = still
        cost = 0.0 if s.kind in ("yield", "skip", "goto") and loc not in workload.costs \
            else workload.cost(loc)
        segments.append(Segment(i, loc, now, now + cost, "exec"))
        th.busy += cost
        th.counts[loc] += 1
        th.loc = th.choose(loc)
        push(now + cost, i)
    stuck = tuple(th.loc for th in threads if not th.done)
    return ExecutionTrace(segments, finish, [dict(th.counts) for th in threads],
                          [th.busy for th in threads], acquisitions, bool(stuck), stuck)


# ---------------------------------------------------------------------------
# Lock cost curve

def _tl_program(k: int, locked: bool) -> Program:
    body = ["  while (*) {"]
    if locked:
        body.append("    lock(m)")
    body.append("    w := w + 1")
    if locked:
        body.append("    unlock(m)")
    body.append("  }")
    text = ["decl shared w", "decl lock m"]
    for i in range(1, k + 1):
        text.append(f"thread P{i} {{")
        text += [ln.replace("while (*)", f"L{i}: while (*)") for ln in body]
        text.append("}")
    return parse_program("\n".join(text) + "\n")


def measure_tl(threads: int, seed: int = 0, workload: Optional[Workload] = None,
               iterations: int = 50, section_cost: float = 1.0) -> float:
    """Average acquisition cost with ``threads`` threads hammering one lock:
    (busy time with locks - busy time without) / acquisitions."""
    if threads < 1:
        raise ValueError("need at least one thread")
    base = workload or Workload()
    costs = {}
    loops = {f"L{i}": iterations for i in range(1, threads + 1)}
    wl = Workload(costs, section_cost, {}, loops, base.lock_base, base.lock_penalty,
                  base.unlock_cost, 1)
    for i in range(1, threads + 1):
        wl.costs[f"L{i}"] = 0.0
    with_locks = simulate(_tl_program(threads, True), wl, seed)
    without = simulate(_tl_program(threads, False), wl, seed)
    extra = sum(with_locks.busy) - sum(without.busy) - base.unlock_cost * with_locks.acquisitions
    return extra / max(with_locks.acquisitions, 1)


def measure_tl_curve(max_threads: int, seed: int = 0, workload: Optional[Workload] = None):
    from .perfmodel import TlCurve
    return TlCurve(tuple((k, measure_tl(k, seed, workload)) for k in range(1, max_threads + 1)))


# ---------------------------------------------------------------------------
# Profiling

def profile(coarse: Program, workload: Workload, critical: Sequence[str], seed: int = 0,
            runs: int = 3, blocks: Optional[Mapping[str, Sequence[str]]] = None,
            tl=None):
    """Measure frequencies, block costs and contention of ``critical`` on the
    coarse program, each from its own set of runs."""
    from .perfmodel import PerfParams
    blocks = dict(blocks) if blocks is not None else {b: tuple(l) for b, l in coarse.blocks}
    stmts = coarse.statement_map()
    crit = set(critical)
    lock_locs = {l for l, s in stmts.items() if s.kind == "lock"}
    region = crit | lock_locs

    def per_thread(trace: ExecutionTrace) -> Dict[str, float]:
        tot: Dict[str, float] = defaultdict(float)
        for c in trace.counts:
            for loc, n in c.items():
                tot[loc] += n
        return {loc: v / trace.threads for loc, v in tot.items()}

    freq_runs = [per_thread(simulate(coarse, workload, seed + 3 * r)) for r in range(runs)]
    freqs = {loc: sum(fr.get(loc, 0.0) for fr in freq_runs) / runs
             for loc in stmts if loc not in lock_locs and stmts[loc].kind != "unlock"}
    nu = sum(sum(fr.get(l, 0.0) for l in lock_locs) for fr in freq_runs) / runs

    block_costs: Dict[str, float] = defaultdict(float)
    outside = 0.0
    for r in range(runs):
        tr = simulate(coarse, workload, seed + 3 * r + 1)
        for sgm in tr.segments:
            if sgm.kind != "exec":
                continue
            for b, locs in blocks.items():
                if sgm.loc in locs:
                    block_costs[b] += (sgm.end - sgm.start) / (tr.threads * runs)
            if sgm.loc not in region and stmts[sgm.loc].kind != "unlock":
                outside += (sgm.end - sgm.start) / (tr.threads * runs)
    of = {loc: b for b, locs in blocks.items() for loc in locs}
    tc = sum(block_costs[b] for b in {of[l] for l in crit if l in of})

    kappa = sum(simulate(coarse, workload, seed + 3 * r + 2).occupancy(region)
                for r in range(runs)) / runs
    if tl is None:
        n = max(1, workload.copies * len(coarse.threads))
        tl = measure_tl_curve(n, seed, workload)
    return PerfParams(kappa, tc, nu, tl, dict(block_costs), {b: tuple(l) for b, l in blocks.items()},
                      freqs, tuple(sorted(crit)), outside)
