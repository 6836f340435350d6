"""End-to-end acceptance checks.

Each test records one PASS/FAIL line in ``conftest.ACCEPTANCE``; the lines are
printed in the terminal summary after the run.
"""
import itertools
import random
import time

import pytest

from conftest import ACCEPTANCE, CORPUS, load
from locksynth.abstraction import abstract_program, format_abstract
from locksynth.automata import Conflict, build_np_nfa, build_p_nfa
from locksynth.benchmark import DEFAULT_SIZES, load_workload, sweep
from locksynth.cegen import MutexConstraint, Region, derive_conflicts
from locksynth.inclusion import InclusionOk, check_inclusion, default_max_len, inclusion_oracle
from locksynth.lang import parse_program
from locksynth.lockcons import encode_global, solve_placement, verify_placement
from locksynth.perfmodel import (PerfParams, TlCurve, augment_constraints,
                                 enumerate_performance_points, optimize_perf, rate, solve_contention)
from locksynth.pipeline import Options, run
from locksynth.satsolver import Unsat, all_models

from test_abstraction import OPEN_DEV_ABSTRACT
from test_lockcons import releases_on


def record(key: int, title: str, ok: bool, detail: str, elapsed: float) -> None:
    ACCEPTANCE[key] = f"[{'PASS' if ok else 'FAIL'}] {key}. {title}: {detail} ({elapsed:.2f}s)"


def test_conflicts_of_branch_mutex():
    t0 = time.perf_counter()
    ap = abstract_program(load("branch_atomicity.lsy"))
    m = MutexConstraint(Region(1, "a1", "a2"), Region(2, "b1", "T2.last"))
    got = set(derive_conflicts(m, ap))
    want = {Conflict("b1", "b2", "b3", "a1", "a2", 2, 1), Conflict("b2", "b3", "b4", "a1", "a2", 2, 1)}
    dt = time.perf_counter() - t0
    ok = got == want and dt < 1.0
    record(1, "conflict derivation", ok, f"{len(got)} conflicts, exact={got == want}", dt)
    assert got == want
    assert dt < 1.0


def test_open_dev_abstraction_golden():
    t0 = time.perf_counter()
    text = format_abstract(abstract_program(load("open_dev.lsy")))
    dt = time.perf_counter() - t0
    ok = text == OPEN_DEV_ABSTRACT and dt < 1.0
    record(2, "abstraction golden", ok, f"exact={text == OPEN_DEV_ABSTRACT}", dt)
    assert text == OPEN_DEV_ABSTRACT
    assert dt < 1.0


THEN = ["b1", "b2", "b3", "b4", "T2.last"]
ELSE = ["b1", "b2", "b5", "T2.last"]


def test_greedy_placement_excluded():
    t0 = time.perf_counter()
    program = load("branch_atomicity.lsy")
    session = run(program, Options())
    ap = session.abstract
    pv = encode_global(ap, session.conflicts, 1)
    v = pv.v
    # lock before b1, release after b4 and nowhere on the else branch
    greedy = [v("LoBef", "b1", "lk1"), v("UnAft", "b4", "lk1"), -v("UnAft", "b2", "lk1"),
              -v("UnBef", "b5", "lk1"), -v("UnAft", "b5", "lk1"), -v("UnBef", "T2.last", "lk1")]
    try:
        solve_placement(pv, "none", greedy)
        greedy_unsat = False
    except Unsat:
        greedy_unsat = True
    models = all_models(pv.formula, pv.primary())
    every_model = all(releases_on(pv, m, THEN) and releases_on(pv, m, ELSE) for m in models)
    text = session.patched_text
    synthesized = ("b4: t := x\n    lk1_4: unlock(lk1)" in text
                   and "b5: t := x\n    lk1_5: unlock(lk1)" in text)
    dt = time.perf_counter() - t0
    ok = greedy_unsat and every_model and synthesized and len(models) > 0 and dt < 10.0
    record(3, "legitimacy exclusion", ok,
           f"greedy unsat={greedy_unsat}, {len(models)} models all release on both branches="
           f"{every_model}, synthesized releases on both={synthesized}", dt)
    assert greedy_unsat and every_model and synthesized and models
    assert dt < 10.0


# Each worker runs a header, then routines separated by yields.  The third
# unit only touches locals.
WORK_UNITS = {
    "W1": ("w1", [("x1", "x2", "xr"), ("y1", "y2", "yr"), ("l1",), ("z1", "z2", "zr")]),
    "W2": ("v1", [("p1", "p2", "pr"), ("q1", "q2", "qr"), ("m1",), ("s1", "s2", "sr")]),
}
PAIRED = [(0, 0), (1, 1), (3, 3)]
LOCK_IDS = (1, 2, 3)


def thread_options(header, units):
    """Lock layouts of one worker: consecutive unit groups, each unlocked or
    under one of the locks, or a single lock around the whole loop.  Yields
    (lock statements, unit -> lock, lock -> protected statements)."""
    n = len(units)
    for cuts in itertools.product((False, True), repeat=n - 1):
        groups, cur = [], [0]
        for i, cut in enumerate(cuts, start=1):
            if cut:
                groups.append(cur)
                cur = []
            cur.append(i)
        groups.append(cur)
        for labels in itertools.product((None,) + LOCK_IDS, repeat=len(groups)):
            owner, prot = {}, {}
            for g, lk in zip(groups, labels):
                for u in g:
                    owner[u] = lk
                    if lk is not None:
                        prot.setdefault(lk, set()).update(units[u])
            yield sum(lk is not None for lk in labels), owner, prot
    everything = {header} | {s for u in units for s in u}
    for lk in LOCK_IDS:
        yield 1, {u: lk for u in range(n)}, {lk: everything}


def work_sharing_optima():
    (h1, u1), (h2, u2) = WORK_UNITS["W1"], WORK_UNITS["W2"]
    size = 2 * (1 + sum(map(len, u1)) + 1 + sum(map(len, u2)))
    opts1, opts2 = list(thread_options(h1, u1)), list(thread_options(h2, u2))
    best_coarse = best_fine = None
    for n1, own1, prot1 in opts1:
        for n2, own2, prot2 in opts2:
            if any(own1[a] is None or own1[a] != own2[b] for a, b in PAIRED):
                continue
            covered = sum(map(len, prot1.values())) + sum(map(len, prot2.values()))
            coarse = n1 + n2 + covered / size
            fine = sum(len(prot1[lk]) * len(prot2.get(lk, ())) for lk in prot1)
            best_coarse = coarse if best_coarse is None else min(best_coarse, coarse)
            best_fine = fine if best_fine is None else min(best_fine, fine)
    return best_coarse, best_fine


def test_work_sharing_objectives():
    t0 = time.perf_counter()
    program = load("work_sharing.lsy")
    coarse = run(program, Options(objective="coarse", verify=False))
    fine = run(program, Options(objective="fine", verify=False))
    oracle_coarse, oracle_fine = work_sharing_optima()
    c_cost, f_cost = coarse.cost, fine.cost
    shared = {s for _, units in WORK_UNITS.values() for i, u in enumerate(units) if i != 2 for s in u}
    version_c = (len(coarse.placement.locks) == 1
                 and coarse.placement.protected_locations >= shared
                 and coarse.placement.lock_statement_count() == 2)
    routines = [set(WORK_UNITS["W1"][1][a]) | set(WORK_UNITS["W2"][1][b]) for a, b in PAIRED]
    fine_sets = [set(v) for v in fine.placement.protected.values()]
    version_f = len(fine.placement.locks) == 3 and sorted(map(sorted, fine_sets)) == sorted(map(sorted, routines))
    dt = time.perf_counter() - t0
    optimal = c_cost == pytest.approx(oracle_coarse) and f_cost == oracle_fine
    ok = optimal and version_c and version_f and dt < 30.0
    record(4, "work-sharing objectives", ok,
           f"coarse {c_cost:.4f} vs enumerated {oracle_coarse:.4f}, fine {f_cost:g} vs enumerated "
           f"{oracle_fine:g}, one spanning lock={version_c}, per-routine locks={version_f}", dt)
    assert optimal and version_c and version_f
    assert dt < 30.0


def test_contention_fixpoints():
    t0 = time.perf_counter()
    errs = []
    for kappa, tc, nu, tl in [(4.0, 100.0, 2.0, 1.0), (1.0, 5.0, 0.0, 0.1), (2.5, 30.0, 7.0, 3.0),
                              (8.0, 1000.0, 50.0, 0.5)]:
        p = PerfParams(kappa, tc, nu, TlCurve.constant(tl))
        errs.append(abs(solve_contention(tc, nu, p) - kappa))
        errs.append(abs(solve_contention(0.0, 0.0, p) - 1.0))
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-6 and dt < 1.0
    record(5, "contention fixpoints", ok, f"max error {max(errs):.2e}", dt)
    assert max(errs) <= 1e-6
    assert dt < 1.0


def random_instances(count, seed=7):
    progs = {n: load(n) for n in ("branch_atomicity.lsy", "store_server.lsy")}
    sessions = {n: run(p, Options(verify=False)) for n, p in progs.items()}
    rng = random.Random(seed)
    while count:
        name = rng.choice(sorted(progs))
        s = sessions[name]
        locs = [l for t in s.abstract.threads for l in t.order if l != t.last]
        blocks = {}
        for l in locs:
            blocks.setdefault(f"B{rng.randrange(4)}", []).append(l)
        params = PerfParams(kappa=rng.uniform(1, 4), tc=0.0, nu=0.0,
                            tl=TlCurve(((1, rng.uniform(0.1, 2)), (4, rng.uniform(2, 6)))),
                            block_costs={b: rng.uniform(0.5, 20) for b in blocks},
                            blocks={b: tuple(v) for b, v in blocks.items()},
                            freqs={l: float(rng.randint(0, 5)) for l in locs})
        params.tc = sum(params.block_costs.values())
        locks = rng.choice((1, 2))
        points = enumerate_performance_points(
            augment_constraints(encode_global(s.abstract, s.conflicts, locks), params, refine=False))
        if len(points) > 50:
            continue
        count -= 1
        yield name, s, params, locks, points


def test_region_search_optimality():
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for name, s, params, locks, points in random_instances(24):
        inst = augment_constraints(encode_global(s.abstract, s.conflicts, locks), params, refine=False)
        got = inst.rating(optimize_perf(inst).model)
        best = min(rate(tc, nu, params) for tc, nu in points)
        worst = max(worst, abs(got - best) / best)
        n += 1
    dt = time.perf_counter() - t0
    ok = n >= 20 and worst <= 1e-9 and dt < 60.0
    record(6, "region search optimality", ok, f"{n} instances, worst relative gap {worst:.2e}", dt)
    assert n >= 20 and worst <= 1e-9
    assert dt < 60.0


SYNTH_RUNS = [(f.name, objective, None) for f in sorted(CORPUS.glob("*.lsy"))
              for objective in ("none", "coarse", "fine")] + [("store_server.lsy", "coarse", 1),
                                                             ("store_server.lsy", "fine", 1)]


def test_corpus_outputs_verify():
    t0 = time.perf_counter()
    failures = []
    for name, objective, locks in SYNTH_RUNS:
        program = load(name)
        s = run(program, Options(objective=objective, locks=locks, verify=False))
        if s.placement is None:
            continue
        report = verify_placement(program, s.placement, patched_text=s.patched_text)
        if not report.ok:
            failures.append(f"{name}/{objective}: {report.summary()}")
    dt = time.perf_counter() - t0
    ok = not failures and dt < 300.0
    record(7, "corpus self-check", ok,
           f"{len(SYNTH_RUNS) - len(failures)}/{len(SYNTH_RUNS)} outputs safe, deadlock-free and legitimate", dt)
    assert not failures, failures
    assert dt < 300.0


def test_store_server_speedup_prediction():
    t0 = time.perf_counter()
    program = load("store_server.lsy")
    workload = load_workload(CORPUS / "store_server.yaml")
    points = sweep(program, workload, ["cp", "cq"], DEFAULT_SIZES, seed=0)
    signs = sum(p.sign_agrees for p in points)
    worst = max(p.relative_error for p in points)
    dt = time.perf_counter() - t0
    ok = len(points) >= 8 and signs >= 0.7 * len(points) and worst <= 0.25 and dt < 300.0
    record(8, "speed-up prediction", ok,
           f"sign agrees on {signs}/{len(points)} sizes, worst relative error {worst:.3f}", dt)
    assert len(points) >= 8
    assert signs >= 0.7 * len(points)
    assert worst <= 0.25
    assert dt < 300.0


LOOP_LEN_CAP = 14


def accesses_per_thread(ap):
    return max(sum(len(t.accesses(l)) for l in t.order) for t in ap.threads)


def oracle_cases():
    for f in sorted(CORPUS.glob("*.lsy")):
        program = parse_program(f.read_text())
        ap = abstract_program(program)
        if accesses_per_thread(ap) > 4:
            continue
        np = build_np_nfa(ap)
        loops = any(t.graph.back_edges() for t in ap.threads)
        max_len = default_max_len(np)
        if loops:
            max_len = min(max_len, LOOP_LEN_CAP)
        yield f.name, build_p_nfa(ap), np, max_len
        s = run(program, Options(verify=False))
        if s.placement is not None:
            yield f"{f.name} (locked)", build_p_nfa(abstract_program(parse_program(s.patched_text))), np, max_len


def test_inclusion_matches_oracle():
    t0 = time.perf_counter()
    checked, mismatches, names = 0, [], set()
    for name, p, np, max_len in oracle_cases():
        names.add(name.split()[0])
        for k in (0, 1, 2, 4):
            fast = check_inclusion(p, np, k, max_len)
            slow = inclusion_oracle(p, np, k, max_len)
            checked += 1
            if isinstance(fast, InclusionOk) != isinstance(slow, InclusionOk) or (
                    not isinstance(fast, InclusionOk) and fast.word != slow.word):
                mismatches.append(f"{name} k={k}")
    dt = time.perf_counter() - t0
    ok = not mismatches and checked > 0 and dt < 120.0
    record(9, "inclusion oracle equivalence", ok,
           f"{checked} verdicts on {len(names)} programs, {len(mismatches)} mismatches", dt)
    assert not mismatches, mismatches
    assert dt < 120.0
