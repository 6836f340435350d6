"""Synthesis loop: check, generalize, enforce, repeat; then place and verify locks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .abstraction import AbstractProgram, abstract_program
from .automata import Conflict, Word, build_np_nfa, build_p_nfa
from .cegen import (DEFAULT_NHOOD_CAP, HbFormula, MutexConstraint, derive_conflicts, generalize,
                    infer_mutex_alternatives)
from .inclusion import DEFAULT_SCHEDULE, Counterexample, check_inclusion_iterative, default_max_len
from .lang import Program, parse_program
from .lockcons import (LockPlacement, PlacementVars, VerificationReport, check_legitimacy_and_deadlock,
                       coarse_cost, decode_placement, emit_patched_source, encode_global, fine_cost,
                       solve_placement, verify_placement)
from .perfmodel import PerfParams, PerfResult, augment_constraints, optimize_perf, refine_params
from .simulator import Workload, profile

log = logging.getLogger(__name__)

OBJECTIVES = ("none", "coarse", "fine", "perf")

__all__ = ["OBJECTIVES", "Options", "IterationLog", "SynthesisSession", "ToolError",
           "PreconditionViolation", "check_precondition", "run", "default_blocks",
           "emit_patched_source"]


class ToolError(Exception):
    """Internal failure: no progress, iteration cap or a failed self-check."""


class PreconditionViolation(Exception):
    """The input deadlocks or misuses locks even without preemption."""


@dataclass
class Options:
    objective: str = "none"
    locks: Optional[int] = None            # default: number of mutex constraints
    schedule: Sequence[int] = DEFAULT_SCHEDULE
    max_len: Optional[int] = None
    max_iterations: int = 64
    nhood_cap: int = DEFAULT_NHOOD_CAP
    verify: bool = True
    params: Optional[PerfParams] = None
    workload: Optional[Workload] = None
    seed: int = 0
    shatter: int = 10


@dataclass
class IterationLog:
    index: int
    counterexample: str
    bound: int
    formula: str
    mutexes: List[MutexConstraint]
    new_conflicts: List[Conflict]
    word: Word = ()


@dataclass
class SynthesisSession:
    program: Program
    abstract: AbstractProgram
    options: Options
    mutexes: List[MutexConstraint] = field(default_factory=list)
    conflicts: List[Conflict] = field(default_factory=list)
    iterations: List[IterationLog] = field(default_factory=list)
    placement: Optional[LockPlacement] = None
    vars: Optional[PlacementVars] = None
    cost: Optional[float] = None
    perf: Optional[PerfResult] = None
    params: Optional[PerfParams] = None
    patched_text: str = ""
    report: Optional[VerificationReport] = None

    @property
    def ok(self) -> bool:
        return self.report is None or self.report.ok

    def summary(self) -> dict:
        """Machine-readable report."""
        out: dict = {
            "objective": self.options.objective,
            "iterations": len(self.iterations),
            "mutexes": [str(m) for m in self.mutexes],
            "conflicts": [list(c.locations) + [c.tid1, c.tid2] for c in self.conflicts],
        }
        if self.placement is not None:
            out["locks"] = list(self.placement.locks)
            out["lock_statements"] = self.placement.lock_statement_count()
            out["unlock_statements"] = self.placement.unlock_statement_count()
            out["protected"] = sorted(self.placement.protected_locations)
        if self.cost is not None:
            out["cost"] = self.cost
        if self.perf is not None:
            out["perf"] = {"tc": self.perf.tc, "nu": self.perf.nu, "rating": self.perf.rating,
                           "queries": self.perf.queries}
        if self.report is not None:
            out["verification"] = {
                "preemption_safe": self.report.preemption_safe,
                "deadlocks": len(self.report.deadlocks),
                "legitimacy_violations": list(self.report.legitimacy),
                "states": self.report.states,
            }
        return out


def check_precondition(ap: AbstractProgram) -> None:
    """Raise unless the input is deadlock-free with legitimate locking
    under non-preemptive scheduling."""
    deadlocks, problems, witness, _ = check_legitimacy_and_deadlock(ap, nfa=build_np_nfa(ap))
    if deadlocks or problems:
        parts = [f"deadlock at {' '.join(d)}" for d in deadlocks[:3]] + problems
        trace = " -> ".join("(" + " ".join(s) + ")" for s in witness)
        raise PreconditionViolation("precondition violated: " + "; ".join(parts)
                                    + (f"\nwitness: {trace}" if trace else ""))


def default_blocks(program: Program) -> Dict[str, Tuple[str, ...]]:
    """Declared blocks, or one block per statement when none are declared."""
    if program.blocks:
        return {b: tuple(locs) for b, locs in program.blocks}
    skip = {"lock", "unlock"}
    return {s.loc: (s.loc,) for t in program.threads for s in t.statements() if s.kind not in skip}


def _choose_conflicts(groups: List[List[List[Conflict]]], have: Sequence[Conflict],
                      cex: Sequence, ap: AbstractProgram) -> Optional[List[Conflict]]:
    """Conflicts to add so that the counterexample is cut off: the first
    alternative of every group, widening to later alternatives when needed."""
    chosen: List[Conflict] = []
    for grp in groups:
        for alt in grp:
            if alt:
                chosen.extend(c for c in alt if c not in chosen)
                break
    extra = sorted(set(chosen) - set(have))
    if extra and not build_p_nfa(ap, list(have) + extra).accepts(cex):
        return extra
    for grp in groups:
        for alt in grp:
            for c in alt:
                if c not in chosen:
                    chosen.append(c)
            extra = sorted(set(chosen) - set(have))
            if extra and not build_p_nfa(ap, list(have) + extra).accepts(cex):
                return extra
    return None


def _infer(session: SynthesisSession, cex: Counterexample, p, np) -> IterationLog:
    ap = session.abstract
    phi: HbFormula = generalize(cex.word, p, np, cex.bound, session.options.nhood_cap)
    alts = infer_mutex_alternatives(phi, ap)
    groups = [[derive_conflicts(m, ap) for m in grp] for grp in alts]
    extra = _choose_conflicts(groups, session.conflicts, cex.word, ap)
    if extra is None:
        raise ToolError(f"no progress: counterexample still accepted after refinement: {cex}")
    used = []
    for grp, cgrp in zip(alts, groups):
        for m, cs in zip(grp, cgrp):
            if cs and set(cs) & set(extra) and m not in used:
                used.append(m)
                break
    return IterationLog(len(session.iterations) + 1, str(cex), cex.bound, str(phi), used, extra,
                        cex.word)


def _placement_model(session: SynthesisSession) -> List[bool]:
    opts = session.options
    ap = session.abstract
    locks = opts.locks or max(1, len(session.mutexes))
    if opts.objective != "perf":
        pv = encode_global(ap, session.conflicts, locks)
        res = solve_placement(pv, opts.objective)
        session.vars = pv
        if opts.objective == "coarse":
            session.cost = coarse_cost(pv, res.model)
        elif opts.objective == "fine":
            session.cost = float(fine_cost(pv, res.model))
        return res.model
    params = opts.params
    if params is None:
        cpv = encode_global(ap, session.conflicts, locks)
        coarse = decode_placement(cpv, solve_placement(cpv, "coarse").model)
        coarse_prog = parse_program(emit_patched_source(session.program, coarse))
        params = profile(coarse_prog, opts.workload or Workload(),
                         sorted(coarse.protected_locations), seed=opts.seed,
                         blocks=default_blocks(session.program))
    session.params = params
    pv = encode_global(ap, session.conflicts, locks)
    inst = augment_constraints(pv, params)
    session.vars = pv
    session.perf = optimize_perf(inst, k=opts.shatter)
    session.cost = session.perf.rating
    return session.perf.model


def run(program: Program, options: Optional[Options] = None) -> SynthesisSession:
    """Synthesize a lock placement making ``program`` preemption-safe."""
    opts = options or Options()
    if opts.objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {opts.objective!r}")
    ap = abstract_program(program)
    check_precondition(ap)
    session = SynthesisSession(program, ap, opts)
    np = build_np_nfa(ap)
    max_len = opts.max_len or default_max_len(np)
    for _ in range(opts.max_iterations + 1):
        p = build_p_nfa(ap, session.conflicts)
        res = check_inclusion_iterative(p, np, opts.schedule, max_len)
        if not isinstance(res, Counterexample):
            break
        if len(session.iterations) >= opts.max_iterations:
            raise ToolError(f"iteration cap {opts.max_iterations} reached")
        it = _infer(session, res, p, np)
        log.info("iteration %d: %s -> %s", it.index, it.counterexample,
                 ", ".join(map(str, it.mutexes)))
        session.iterations.append(it)
        for m in it.mutexes:
            if m not in session.mutexes:
                session.mutexes.append(m)
        session.conflicts.extend(it.new_conflicts)

    if not session.conflicts:
        session.placement = LockPlacement((), ())
        session.patched_text = program.text
    else:
        model = _placement_model(session)
        session.placement = decode_placement(session.vars, model)
        session.patched_text = emit_patched_source(program, session.placement)
    if opts.verify:
        session.report = verify_placement(program, session.placement, opts.schedule, max_len,
                                         session.patched_text)
        if not session.report.ok:
            raise ToolError("self-check failed: " + session.report.summary())
    return session


def predicted_speedup(params: PerfParams, fine: LockPlacement, coarse: LockPlacement) -> float:
    """Predicted time of the coarse placement over that of ``fine``."""
    from .perfmodel import predicted_time
    return predicted_time(*refine_params(params, coarse), params) / \
        predicted_time(*refine_params(params, fine), params)
